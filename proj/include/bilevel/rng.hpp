#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bilevel {

// Seeded random stream with explicit sampling algorithms. std::*_distribution
// output differs between standard libraries, so the transforms are spelled out
// here to keep "same seed, same bytes" true everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // uniform on [0, 1)
  double uniform01() {
    // 53-bit mantissa draw
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal via Box-Muller (polar form avoided; trig form is branchless
  // and deterministic)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Laplace(0, 1) by inverse CDF
  double laplace() {
    const double u = uniform01() - 0.5;
    return (u < 0 ? 1.0 : -1.0) * std::log(1.0 - 2.0 * std::fabs(u));
  }

  // uniform on (-1, 1)
  double uniform_sym() { return uniform(-1.0, 1.0); }

  // integer in [0, n)
  std::uint64_t index(std::uint64_t n) {
    // rejection-free modulo is biased for huge n; n here is a vector length
    return gen_() % n;
  }

  // k distinct indices drawn from [0, n), in draw order
  std::vector<int> distinct(int k, int n) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
      const std::uint64_t j = i + index(n - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

  // Fisher-Yates permutation of [0, n)
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      const std::uint64_t j = index(static_cast<std::uint64_t>(i) + 1);
      std::swap(p[i], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace bilevel
