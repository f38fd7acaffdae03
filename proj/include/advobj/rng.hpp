#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "advobj/tensor.hpp"

namespace advobj {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic child-seed derivation: every run derives all of its randomness
// from one master seed through labelled forks, so two runs with the same seed
// and config draw identical streams regardless of call order elsewhere.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(base ^ splitmix64(h) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

// mt19937_64 with a Box-Muller normal layered on top. The normal path avoids
// std::normal_distribution so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi] by rejection-free scaling (spans are tiny here).
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform() * static_cast<double>(hi - lo + 1));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Tensor normal_tensor(const Shape& s) {
    Tensor t = Tensor::zeros(s);
    for (double& v : t.data) v = normal();
    return t;
  }

  Tensor uniform_tensor(const Shape& s, double lo, double hi) {
    Tensor t = Tensor::zeros(s);
    for (double& v : t.data) v = lo + (hi - lo) * uniform();
    return t;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace advobj
