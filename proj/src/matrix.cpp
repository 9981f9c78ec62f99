#include "mhcl/matrix.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace mhcl {

namespace {
std::atomic<int> g_workers{0};  // 0 = not yet initialized

int env_workers() {
  const char* s = std::getenv("MHCL_THREADS");
  if (!s) return 1;
  int n = std::atoi(s);
  return n >= 1 ? n : 1;
}
}  // namespace

int worker_count() {
  int n = g_workers.load(std::memory_order_relaxed);
  if (n == 0) {
    n = env_workers();
    g_workers.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_worker_count(int n) { g_workers.store(n >= 1 ? n : 1, std::memory_order_relaxed); }

void parallel_rows(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  int workers = worker_count();
  if (workers <= 1 || n < 64) {
    fn(0, n);
    return;
  }
  std::size_t w = static_cast<std::size_t>(workers);
  if (w > n) w = n;
  std::size_t chunk = (n + w - 1) / w;
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    std::size_t b = t * chunk;
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    threads.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : threads) th.join();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) fail("shape", "matmul inner dimensions disagree");
  Matrix c(a.rows, b.cols);
  const std::size_t n = a.cols, p = b.cols;
  parallel_rows(a.rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* arow = a.row(i);
      double* crow = c.row(i);
      for (std::size_t k = 0; k < n; ++k) {
        const double aik = arow[k];
        if (aik == 0.0) continue;
        const double* brow = b.row(k);
        for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
      }
    }
  });
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

}  // namespace mhcl
