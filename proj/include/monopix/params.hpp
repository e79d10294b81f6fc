/* Copyright 2026 The MonoPix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "monopix/rng.hpp"
#include "monopix/tensor.hpp"

namespace monopix {

inline constexpr std::size_t kNoParam = std::numeric_limits<std::size_t>::max();

/// Ordered collection of named arrays. Non-trainable entries (batch-norm
/// running statistics) are saved with the model but skipped by optimizers.
template <typename Scalar>
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Tensor<Scalar>> values;
  std::vector<bool> trainable;

  std::size_t add(std::string name, Tensor<Scalar> value, bool is_trainable = true) {
    names.push_back(std::move(name));
    values.push_back(std::move(value));
    trainable.push_back(is_trainable);
    return values.size() - 1;
  }

  [[nodiscard]] std::size_t size() const { return values.size(); }

  [[nodiscard]] std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    return kNoParam;
  }

  Tensor<Scalar>& operator[](std::size_t i) { return values[i]; }
  const Tensor<Scalar>& operator[](std::size_t i) const { return values[i]; }

  /// Same names and shapes, all zero.
  [[nodiscard]] ParamStore zeros_like() const {
    ParamStore out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names[i], Tensor<Scalar>(values[i].shape()), trainable[i]);
    return out;
  }

  void set_zero() {
    for (auto& v : values) v.set_zero();
  }

  [[nodiscard]] Eigen::Index trainable_count() const {
    Eigen::Index total = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      if (trainable[i]) total += values[i].size();
    }
    return total;
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& v : values) {
      if (!v.all_finite()) return false;
    }
    return true;
  }

  template <typename Other>
  [[nodiscard]] ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names[i], values[i].template cast<Other>(), trainable[i]);
    return out;
  }
};

/// Fill with draws from normal(mean, stddev) in storage order.
template <typename Scalar>
void fill_normal(Tensor<Scalar>& t, Rng& rng, double mean, double stddev) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    t.data()[i] = static_cast<Scalar>(mean + stddev * standard_normal(rng));
  }
}

}  // namespace monopix
