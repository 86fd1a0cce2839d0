/*
 * Copyright 2026 The byzfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef BYZFED_DATA_H_
#define BYZFED_DATA_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "byzfed/model.h"

namespace byzfed {

// Ground truth behind a synthetic dataset: inputs x ~ N(0, I_d), features
// z = projection^T x, label = argmax_c (scorers.row(c) . z + noise).
struct SyntheticTask {
  Eigen::MatrixXd projection;  // d x k_true, orthonormal columns
  Eigen::MatrixXd scorers;     // C x k_true
  double noise_std = 0.0;

  std::size_t input_dim() const { return static_cast<std::size_t>(projection.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(projection.cols()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(scorers.rows()); }
};

struct Dataset {
  Eigen::MatrixXd inputs;  // N x d
  std::vector<int> labels;
  std::size_t num_classes = 0;
  // class_index[c] lists the rows labelled c, ascending.
  std::vector<std::vector<std::size_t>> class_index;
  std::optional<SyntheticTask> task;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(inputs.cols()); }
};

// Scorers are +-e_j on the planted axes for the first 2*k_true classes (so
// those classes are equally likely) and random unit vectors beyond that.
SyntheticTask make_task(std::size_t d, std::size_t k_true, std::size_t classes,
                        double noise_std, std::uint64_t seed);

Dataset draw(const SyntheticTask& task, std::size_t n, std::uint64_t seed);

Dataset generate_synthetic(std::size_t d, std::size_t k_true,
                           std::size_t classes, std::size_t n,
                           double noise_std, std::uint64_t seed);

// One shared layer holding the planted projection (k_true x d, zero bias).
ParamSet planted_representation(const SyntheticTask& task);

struct Shard {
  std::size_t client_id = 0;
  Batch train;
  Batch test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::vector<int> classes;  // ascending
};

std::vector<Shard> partition_pathological(const Dataset& ds,
                                          std::size_t n_clients,
                                          std::size_t classes_per_client,
                                          std::size_t per_class,
                                          double test_fraction,
                                          std::uint64_t seed);

// One epoch over the shard's training rows in shuffled order.
std::vector<Batch> minibatches(const Shard& shard, std::size_t batch_size,
                               std::uint64_t epoch_seed);

// "BFD1" | u32 N | u32 d | u32 C | N*d f32 inputs | N u16 labels, all
// little-endian.
Dataset load_bfd(const std::string& path);
void save_bfd(const Dataset& ds, const std::string& path);

}  // namespace byzfed

#endif  // BYZFED_DATA_H_
