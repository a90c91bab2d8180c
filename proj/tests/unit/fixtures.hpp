#pragma once

#include "mcrfm/config.hpp"
#include "mcrfm/matrix.hpp"
#include "mcrfm/rng.hpp"

namespace testing {

/// Narrow model for fast unit tests.
inline mcrfm::ModelConfig small_model(int feature_dim = 8) {
  mcrfm::ModelConfig m;
  m.feature_dim = feature_dim;
  m.d_h = 4;
  m.d_e = 3;
  m.d_c = 6;
  m.token_dim = 5;
  m.d_t = 4;
  m.field_width = 8;
  m.field_layers = 2;
  m.mix_hidden = 4;
  return m;
}

inline mcrfm::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t key, double lo = -1.0,
                                   double hi = 1.0) {
  mcrfm::CounterRng rng(key);
  mcrfm::Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace testing
