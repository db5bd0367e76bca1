#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdgp/rng.hpp"
#include "sdgp/tensor.hpp"

namespace sdgp {

enum class PruneFunction { Random, Magnitude, RescaledMagnitude };

// Where RescaledMagnitude restores the L1 norm: per channel (column) across
// all rows, or per m-element group.
enum class RescaleScope { Channel, Group };

std::string to_string(PruneFunction f);
PruneFunction parse_prune_function(const std::string& name);
std::string to_string(RescaleScope s);
RescaleScope parse_rescale_scope(const std::string& name);

inline constexpr std::size_t kMaxGroupSize = 32;

struct PruneConfig {
  std::size_t n = 2;  // nonzeros kept per group
  std::size_t m = 4;  // group size
  PruneFunction function = PruneFunction::Magnitude;
  std::uint64_t seed = 0;
  RescaleScope rescale = RescaleScope::Channel;

  double ratio() const { return static_cast<double>(m) / static_cast<double>(n); }
  // Throws ConfigError unless 1 <= n <= m <= 32.
  void validate() const;
  friend bool operator==(const PruneConfig&, const PruneConfig&) = default;
};

// Indices kept within one group, ascending.
struct GroupMask {
  std::vector<std::size_t> kept;
  friend bool operator==(const GroupMask&, const GroupMask&) = default;
};

// The n largest-magnitude positions; equal magnitudes keep the lower index.
GroupMask magnitude_keep_set(std::span<const float> group, std::size_t n);
// n positions drawn uniformly among all C(m, n) keep-sets.
GroupMask random_keep_set(std::size_t m, std::size_t n, CounterRng& rng);

std::vector<float> prune_group_magnitude(std::span<const float> group, std::size_t n);
std::vector<float> prune_group_random(std::span<const float> group, std::size_t n, CounterRng& rng);

// Structured data gradient pruning of a (rows x channels) gradient, grouping m
// consecutive channels. Returns a new tensor; `grad` is left untouched.
// Random keep-sets are keyed on (cfg.seed, linear group index).
Tensor sdgp(const Tensor& grad, const PruneConfig& cfg);

// histogram[k] = number of m-groups holding exactly k nonzeros, k in [0, m].
std::vector<std::size_t> count_group_nonzeros(const Tensor& grad, std::size_t m);

// Throws ConfigError when `channels` cannot be split into groups of cfg.m.
void check_prunable(std::size_t channels, const PruneConfig& cfg, const std::string& where = {});

}  // namespace sdgp
