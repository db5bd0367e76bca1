#include "sdgp/prune.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include "sdgp/errors.hpp"

namespace sdgp {

std::string to_string(PruneFunction f) {
  switch (f) {
    case PruneFunction::Random: return "random";
    case PruneFunction::Magnitude: return "magnitude";
    case PruneFunction::RescaledMagnitude: return "rescaled_magnitude";
  }
  return "?";
}

PruneFunction parse_prune_function(const std::string& name) {
  if (name == "random") return PruneFunction::Random;
  if (name == "magnitude") return PruneFunction::Magnitude;
  if (name == "rescaled_magnitude" || name == "rescaled-magnitude") return PruneFunction::RescaledMagnitude;
  throw ConfigError("unknown pruning function '" + name + "' (expected random, magnitude, rescaled_magnitude)");
}

std::string to_string(RescaleScope s) { return s == RescaleScope::Channel ? "channel" : "group"; }

RescaleScope parse_rescale_scope(const std::string& name) {
  if (name == "channel") return RescaleScope::Channel;
  if (name == "group") return RescaleScope::Group;
  throw ConfigError("unknown rescale scope '" + name + "' (expected channel or group)");
}

namespace {

void check_counts(std::size_t m, std::size_t n) {
  if (n == 0 || m == 0) throw ConfigError("n and m must be >= 1");
  if (n > m) throw ConfigError("n (" + std::to_string(n) + ") exceeds group size m (" + std::to_string(m) + ")");
  if (m > kMaxGroupSize) throw ConfigError("group size m must be <= " + std::to_string(kMaxGroupSize));
}

// Writes the kept entries of `group` into `out` (already zeroed).
void scatter_kept(std::span<const float> group, const GroupMask& mask, float* out) {
  for (std::size_t i : mask.kept) out[i] = group[i];
}

}  // namespace

void PruneConfig::validate() const { check_counts(m, n); }

void check_prunable(std::size_t channels, const PruneConfig& cfg, const std::string& where) {
  cfg.validate();
  if (channels % cfg.m != 0) {
    throw ConfigError((where.empty() ? std::string() : where + ": ") + "channel count " + std::to_string(channels) +
                      " is not divisible by group size m=" + std::to_string(cfg.m));
  }
}

namespace {

using KeepFlags = std::array<bool, kMaxGroupSize>;

// NaN sorts as the largest magnitude so the order stays total.
float magnitude_key(float v) { return std::isnan(v) ? std::numeric_limits<float>::infinity() : std::fabs(v); }

// Entry i survives when fewer than n entries precede it in the order
// (larger magnitude first, lower index first among equals).
void select_magnitude(const float* group, std::size_t m, std::size_t n, KeepFlags& keep) {
  std::array<float, kMaxGroupSize> key{};
  for (std::size_t i = 0; i < m; ++i) key[i] = magnitude_key(group[i]);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < m; ++j) ahead += key[j] > key[i] || (key[j] == key[i] && j < i);
    keep[i] = ahead < n;
  }
}

// Partial Fisher-Yates: the first n slots form a uniform n-subset.
void select_random(std::size_t m, std::size_t n, CounterRng& rng, KeepFlags& keep) {
  std::array<std::uint8_t, kMaxGroupSize> idx{};
  for (std::size_t i = 0; i < m; ++i) idx[i] = static_cast<std::uint8_t>(i);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t r = j + static_cast<std::size_t>(rng.below(m - j));
    std::swap(idx[j], idx[r]);
  }
  keep.fill(false);
  for (std::size_t j = 0; j < n; ++j) keep[idx[j]] = true;
}

GroupMask to_mask(const KeepFlags& keep, std::size_t m) {
  GroupMask mask;
  for (std::size_t i = 0; i < m; ++i)
    if (keep[i]) mask.kept.push_back(i);
  return mask;
}

}  // namespace

GroupMask magnitude_keep_set(std::span<const float> group, std::size_t n) {
  check_counts(group.size(), n);
  KeepFlags keep{};
  select_magnitude(group.data(), group.size(), n, keep);
  return to_mask(keep, group.size());
}

GroupMask random_keep_set(std::size_t m, std::size_t n, CounterRng& rng) {
  check_counts(m, n);
  KeepFlags keep{};
  select_random(m, n, rng, keep);
  return to_mask(keep, m);
}

std::vector<float> prune_group_magnitude(std::span<const float> group, std::size_t n) {
  std::vector<float> out(group.size(), 0.0f);
  scatter_kept(group, magnitude_keep_set(group, n), out.data());
  return out;
}

std::vector<float> prune_group_random(std::span<const float> group, std::size_t n, CounterRng& rng) {
  std::vector<float> out(group.size(), 0.0f);
  scatter_kept(group, random_keep_set(group.size(), n, rng), out.data());
  return out;
}

Tensor sdgp(const Tensor& grad, const PruneConfig& cfg) {
  check_prunable(grad.channels(), cfg);
  if (cfg.n == cfg.m) return grad;

  const std::size_t channels = grad.channels();
  const std::size_t rows = grad.rows();
  const std::size_t groups_per_row = channels / cfg.m;
  Tensor out(grad.shape());
  const float* src = grad.data();
  float* dst = out.data();

  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < groups_per_row; ++g) {
      const std::size_t base = r * channels + g * cfg.m;
      const std::span<const float> group(src + base, cfg.m);
      KeepFlags keep{};
      if (cfg.function == PruneFunction::Random) {
        CounterRng rng(cfg.seed, r * groups_per_row + g);
        select_random(cfg.m, cfg.n, rng, keep);
      } else {
        select_magnitude(group.data(), cfg.m, cfg.n, keep);
      }
      for (std::size_t i = 0; i < cfg.m; ++i) dst[base + i] = keep[i] ? group[i] : 0.0f;

      if (cfg.function == PruneFunction::RescaledMagnitude && cfg.rescale == RescaleScope::Group) {
        double before = 0.0, after = 0.0;
        for (std::size_t i = 0; i < cfg.m; ++i) {
          before += std::fabs(group[i]);
          if (keep[i]) after += std::fabs(group[i]);
        }
        if (after > 0.0) {
          const float scale = static_cast<float>(before / after);
          for (std::size_t i = 0; i < cfg.m; ++i) dst[base + i] *= scale;
        }
      }
    }
  }

  if (cfg.function == PruneFunction::RescaledMagnitude && cfg.rescale == RescaleScope::Channel) {
    std::vector<double> before(channels, 0.0), after(channels, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        before[c] += std::fabs(src[r * channels + c]);
        after[c] += std::fabs(dst[r * channels + c]);
      }
    }
    std::vector<float> scale(channels, 1.0f);
    for (std::size_t c = 0; c < channels; ++c) {
      if (after[c] > 0.0) scale[c] = static_cast<float>(before[c] / after[c]);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) dst[r * channels + c] *= scale[c];
    }
  }
  return out;
}

std::vector<std::size_t> count_group_nonzeros(const Tensor& grad, std::size_t m) {
  if (m == 0) throw ConfigError("group size m must be >= 1");
  const std::size_t channels = grad.channels();
  if (channels % m != 0) {
    throw ConfigError("channel count " + std::to_string(channels) + " is not divisible by m=" + std::to_string(m));
  }
  std::vector<std::size_t> hist(m + 1, 0);
  const float* p = grad.data();
  for (std::size_t g = 0; g < grad.size() / m; ++g) {
    std::size_t nz = 0;
    for (std::size_t i = 0; i < m; ++i) nz += p[g * m + i] != 0.0f;
    ++hist[nz];
  }
  return hist;
}

}  // namespace sdgp
