#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <thread>
#include <vector>

namespace sphkde::util {

//! splitmix64 step; used to derive independent seeds from (base, path) tuples.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a2a9fb16ea6dULL;
  return z ^ (z >> 31);
}

//! Deterministic seed derivation: every (cell, replicate, stage) gets its own
//! stream so results do not depend on evaluation order or thread count.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t p : path) s = splitmix64(s ^ (p + 0x9e3779b97f4a7c15ULL));
  return s;
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  return std::mt19937_64(derive_seed(base, path));
}

//! Runs fn(i) for i in [0, n) on up to n_threads workers. Each index writes its
//! own output slot, so the result is independent of scheduling.
template <class Fn>
void parallel_for(std::size_t n, unsigned n_threads, Fn&& fn) {
  if (n == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (n_threads == 0) n_threads = hw ? hw : 1;
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, n));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (unsigned t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

//! A real number held as sign * exp(log_abs); exact zero has sign 0.
//! Used where kernels and normalizing constants mix signs and magnitudes
//! that overflow doubles (G-kernel terms, tiny-h convolutions).
struct SignedLog {
  double log_abs = -std::numeric_limits<double>::infinity();
  int sign = 0;

  static SignedLog from_log(double la, int s = 1) { return {la, la == -std::numeric_limits<double>::infinity() ? 0 : s}; }
  static SignedLog from_value(double v) {
    if (v == 0.0) return {};
    return {std::log(std::fabs(v)), v > 0 ? 1 : -1};
  }
  double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }

  friend SignedLog operator*(SignedLog a, SignedLog b) {
    if (a.sign == 0 || b.sign == 0) return {};
    return {a.log_abs + b.log_abs, a.sign * b.sign};
  }
  friend SignedLog operator/(SignedLog a, SignedLog b) {
    return {a.log_abs - b.log_abs, a.sign * b.sign};
  }
  friend SignedLog operator+(SignedLog a, SignedLog b) {
    if (a.sign == 0) return b;
    if (b.sign == 0) return a;
    if (a.log_abs < b.log_abs) std::swap(a, b);
    double r = b.sign * a.sign * std::exp(b.log_abs - a.log_abs);  // |r| <= 1
    double m = 1.0 + r;
    if (m <= 0.0) return {};  // exact cancellation
    return {a.log_abs + std::log1p(r), a.sign};
  }
  friend SignedLog operator-(SignedLog a, SignedLog b) { return a + SignedLog{b.log_abs, -b.sign}; }
};

//! log(sum(exp(v))) over a vector; -inf for empty input.
inline double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace sphkde::util
