#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace crashrisk {

// Portable random stream: mt19937_64 is bit-exact across standard libraries,
// the std distributions are not, so the transforms here are hand-rolled.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound);
  // Standard normal draw (Marsaglia polar method).
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

// Seed for one (firm, year) unit so results do not depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view firm_id, int year);

}  // namespace crashrisk
