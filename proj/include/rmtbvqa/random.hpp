#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "rmtbvqa/tensor.hpp"

namespace rmtbvqa {

using Rng = std::mt19937_64;

/// Mixes a base seed with a label so independent streams (per video, per
/// parameter) never share state.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Uniform integer in [0, n) by rejection; portable across standard libraries.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Fisher-Yates with uniform_index.
template <class T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

std::vector<Real> normal_vector(std::size_t n, double stddev, Rng& rng);

}  // namespace rmtbvqa
