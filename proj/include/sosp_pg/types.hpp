#pragma once

#include <Eigen/Dense>

namespace sosp_pg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace sosp_pg
