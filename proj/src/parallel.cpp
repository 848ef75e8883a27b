#include "sosp_pg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace sosp_pg {
namespace {

std::atomic<std::size_t> g_threads{0};

template <typename T>
T pairwise(const std::vector<T>& terms, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return terms[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  T left = pairwise(terms, lo, mid);
  left += pairwise(terms, mid, hi);
  return left;
}

}  // namespace

void set_thread_count(std::size_t n) { g_threads = n; }

std::size_t thread_count() {
  const std::size_t n = g_threads.load();
  if (n != 0) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  // Lowest failing index wins so the reported error is schedule-independent.
  std::size_t error_index = n;
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (i < error_index) {
            error_index = i;
            error = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double pairwise_sum(const std::vector<double>& terms) {
  return terms.empty() ? 0.0 : pairwise(terms, 0, terms.size());
}

Vector pairwise_sum(const std::vector<Vector>& terms) {
  return terms.empty() ? Vector() : pairwise(terms, 0, terms.size());
}

Matrix pairwise_sum(const std::vector<Matrix>& terms) {
  return terms.empty() ? Matrix() : pairwise(terms, 0, terms.size());
}

}  // namespace sosp_pg
