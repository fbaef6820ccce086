#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

namespace ioclab {

/// Deterministic random stream. All randomness in the project flows from a
/// single root seed through named substreams; no ambient entropy anywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  /// Independent stream derived from (root seed, name). Same inputs give the
  /// same stream on every run.
  static Rng substream(uint64_t root_seed, std::string_view name) {
    // FNV-1a over the name, mixed with the root seed.
    uint64_t h = 14695981039346656037ull;
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    std::seed_seq seq{static_cast<uint32_t>(root_seed), static_cast<uint32_t>(root_seed >> 32),
                      static_cast<uint32_t>(h), static_cast<uint32_t>(h >> 32)};
    Rng r(0);
    r.gen_.seed(seq);
    return r;
  }

  double gaussian() { return normal_(gen_); }
  double uniform() { return unit_(gen_); }
  uint64_t next_u64() { return gen_(); }

  /// i in [0, n)
  int index(int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(gen_);
  }

  Eigen::VectorXd gaussian_vec(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace ioclab
