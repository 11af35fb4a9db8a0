// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "kascade/error.hpp"

namespace kascade {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Portable stream: mt19937_64 is fully specified, and the uniform/normal
// transforms below do not depend on the standard library's distributions.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0)
      : engine_(splitmix64(seed ^ splitmix64(tag ^ splitmix64(a ^ splitmix64(b))))) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * n) % n; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  void fill_normal(std::vector<double>& out) {
    for (double& v : out) v = normal();
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum : std::uint64_t {
  kTagKeyBase = 1,
  kTagValueBase,
  kTagQuery,
  kTagKeyNoise,
  kTagValueNoise,
  kTagHidden,
  kTagPermutation,
  kTagGroupQuery,
  kTagPool,
};

}  // namespace

AttentionTrace generate_synthetic(const SynthConfig& config) {
  const auto& d = config.dims;
  if (d.num_layers == 0 || d.num_query_heads == 0 || d.num_kv_heads == 0 || d.head_dim == 0 ||
      d.seq_len == 0 || d.num_query_heads % d.num_kv_heads != 0) {
    throw InvalidArgument("generate_synthetic: invalid dimensions");
  }
  const double rho = config.layer_correlation;
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw InvalidArgument("generate_synthetic: layer_correlation must be in [0, 1]");
  }
  if (!(config.group_query_correlation >= 0.0 && config.group_query_correlation <= 1.0)) {
    throw InvalidArgument("generate_synthetic: group_query_correlation must be in [0, 1]");
  }
  if (!(config.heavy_tail_temperature > 0.0)) {
    throw InvalidArgument("generate_synthetic: temperature must be positive");
  }
  if (!config.head_permutations.empty()) {
    if (config.head_permutations.size() != d.num_layers) {
      throw InvalidArgument("generate_synthetic: need one head permutation per layer");
    }
    for (const auto& perm : config.head_permutations) {
      auto sorted = perm;
      std::sort(sorted.begin(), sorted.end());
      std::vector<std::size_t> expect(d.num_kv_heads);
      std::iota(expect.begin(), expect.end(), std::size_t{0});
      if (sorted != expect) throw InvalidArgument("generate_synthetic: invalid head permutation");
    }
  }

  const std::size_t n = d.seq_len;
  const std::size_t dim = d.head_dim;
  const std::size_t group = d.group_size();
  const double noise_scale = std::sqrt(std::max(0.0, 1.0 - rho * rho));

  // Base tensors in double: [kv_head][token][dim] and [query_head][token][dim].
  std::vector<std::vector<double>> key_base(d.num_kv_heads, std::vector<double>(n * dim));
  std::vector<std::vector<double>> value_base(d.num_kv_heads, std::vector<double>(n * dim));
  for (std::size_t g = 0; g < d.num_kv_heads; ++g) {
    Stream(config.seed, kTagKeyBase, g).fill_normal(key_base[g]);
    Stream(config.seed, kTagValueBase, g).fill_normal(value_base[g]);
  }

  const std::size_t hot = std::max<std::size_t>(config.hot_keys, 1);
  const double query_scale =
      1.0 / (config.heavy_tail_temperature * std::sqrt(static_cast<double>(hot + 1)));
  const double shared = std::sqrt(config.group_query_correlation);
  const double own = std::sqrt(1.0 - config.group_query_correlation);
  std::vector<std::vector<double>> group_noise(d.num_kv_heads, std::vector<double>(n * dim));
  for (std::size_t g = 0; g < d.num_kv_heads; ++g) {
    Stream(config.seed, kTagGroupQuery, g).fill_normal(group_noise[g]);
  }
  // Sorted heavy-hitter positions per kv head.
  std::vector<std::vector<std::size_t>> pools(d.num_kv_heads);
  for (std::size_t g = 0; g < d.num_kv_heads && config.heavy_hitter_pool > 0; ++g) {
    Stream rng(config.seed, kTagPool, g);
    for (std::size_t i = 0; i < config.heavy_hitter_pool; ++i) pools[g].push_back(rng.below(n));
    std::sort(pools[g].begin(), pools[g].end());
  }
  std::vector<std::vector<double>> query_base(d.num_query_heads, std::vector<double>(n * dim));
  for (std::size_t h = 0; h < d.num_query_heads; ++h) {
    Stream rng(config.seed, kTagQuery, h);
    const auto& keys = key_base[h / group];
    const auto& common = group_noise[h / group];
    for (std::size_t t = 0; t < n; ++t) {
      double* q = query_base[h].data() + t * dim;
      for (std::size_t c = 0; c < dim; ++c) q[c] = shared * common[t * dim + c] + own * rng.normal();
      for (std::size_t i = 0; i < hot; ++i) {
        std::size_t j = 0;
        if (i == 1) {
          j = t;
        } else if (i > 1) {
          const auto& pool = pools[h / group];
          const auto visible = static_cast<std::size_t>(
              std::upper_bound(pool.begin(), pool.end(), t) - pool.begin());
          j = visible > 0 ? pool[rng.below(visible)] : rng.below(t + 1);
        }
        for (std::size_t c = 0; c < dim; ++c) q[c] += keys[j * dim + c];
      }
      for (std::size_t c = 0; c < dim; ++c) q[c] *= query_scale;
    }
  }

  auto trace = AttentionTrace::zeros(d, config.prompt_id);
  std::vector<double> key_noise(n * dim);
  std::vector<double> value_noise(n * dim);
  for (std::size_t l = 0; l < d.num_layers; ++l) {
    for (std::size_t h = 0; h < d.num_kv_heads; ++h) {
      const std::size_t base =
          config.head_permutations.empty() ? h : config.head_permutations[l][h];
      if (noise_scale > 0.0) {
        Stream(config.seed, kTagKeyNoise, l, base).fill_normal(key_noise);
        Stream(config.seed, kTagValueNoise, l, base).fill_normal(value_noise);
      }
      for (std::size_t t = 0; t < n; ++t) {
        auto k = trace.k_row(l, h, t);
        auto v = trace.v_row(l, h, t);
        for (std::size_t c = 0; c < dim; ++c) {
          const std::size_t i = t * dim + c;
          double kv = rho * key_base[base][i];
          double vv = rho * value_base[base][i];
          if (noise_scale > 0.0) {
            kv += noise_scale * key_noise[i];
            vv += noise_scale * value_noise[i];
          }
          k[c] = static_cast<float>(kv);
          v[c] = static_cast<float>(vv);
        }
      }
      for (std::size_t r = 0; r < group; ++r) {
        const auto& qb = query_base[base * group + r];
        for (std::size_t t = 0; t < n; ++t) {
          auto q = trace.q_row(l, h * group + r, t);
          for (std::size_t c = 0; c < dim; ++c) q[c] = static_cast<float>(qb[t * dim + c]);
        }
      }
    }
  }

  if (d.model_dim > 0) {
    const double depth = static_cast<double>(std::max<std::size_t>(d.num_layers - 1, 1));
    for (std::size_t l = 0; l < d.num_layers; ++l) {
      Stream rng(config.seed, kTagHidden, l);
      const double keep = 0.9 * static_cast<double>(l) / depth;
      const double fresh = std::sqrt(1.0 - keep * keep);
      for (std::size_t t = 0; t < n; ++t) {
        auto x = trace.x_row(l, t);
        auto y = trace.y_row(l, t);
        for (std::size_t c = 0; c < d.model_dim; ++c) {
          const double xv = rng.normal();
          x[c] = static_cast<float>(xv);
          y[c] = static_cast<float>(keep * xv + fresh * rng.normal());
        }
      }
    }
  }
  return trace;
}

std::vector<std::vector<std::size_t>> random_head_permutations(std::size_t num_layers,
                                                               std::size_t num_kv_heads,
                                                               std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> perms(num_layers, std::vector<std::size_t>(num_kv_heads));
  for (std::size_t l = 0; l < num_layers; ++l) {
    std::iota(perms[l].begin(), perms[l].end(), std::size_t{0});
    if (l == 0) continue;
    Stream rng(seed, kTagPermutation, l);
    // Fisher-Yates with the portable stream.
    for (std::size_t i = num_kv_heads; i > 1; --i) std::swap(perms[l][i - 1], perms[l][rng.below(i)]);
  }
  return perms;
}

}  // namespace kascade
