#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "firesense/rng.hpp"
#include "firesense/tensor.hpp"

namespace fst {

template <typename T = float>
firesense::Tensor<T> random_tensor(firesense::Shape shape, firesense::Pcg32& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(static_cast<std::size_t>(firesense::numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return firesense::Tensor<T>(std::move(shape), std::move(v));
}

template <typename A, typename B>
bool bitwise_equal(const A& a, const B& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] == b[i]) && !(std::isnan(a[i]) && std::isnan(b[i]))) return false;
  }
  return true;
}

template <typename A>
std::vector<typename A::value_type> copy_of(const A& a) {
  return std::vector<typename A::value_type>(a.begin(), a.end());
}

}  // namespace fst
