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

#include "byzfed/data.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "byzfed/bytes.h"
#include "byzfed/errors.h"
#include "byzfed/seed.h"

namespace byzfed {

namespace {

constexpr std::uint8_t kBfdMagic[4] = {'B', 'F', 'D', '1'};

void index_classes(Dataset& ds) {
  ds.class_index.assign(ds.num_classes, {});
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const int y = ds.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes) {
      throw DataError("row " + std::to_string(i) + " has label " +
                      std::to_string(y) + " outside [0, " +
                      std::to_string(ds.num_classes) + ")");
    }
    ds.class_index[static_cast<std::size_t>(y)].push_back(i);
  }
}

Batch gather(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.inputs.cols());
  b.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    b.inputs.row(static_cast<Eigen::Index>(i)) =
        ds.inputs.row(static_cast<Eigen::Index>(rows[i]));
    b.labels.push_back(ds.labels[rows[i]]);
  }
  return b;
}

}  // namespace

SyntheticTask make_task(std::size_t d, std::size_t k_true, std::size_t classes,
                        double noise_std, std::uint64_t seed) {
  if (d == 0 || k_true == 0) throw ConfigError("synthetic dims must be >= 1");
  if (k_true > d) throw ConfigError("k_true must not exceed d");
  if (classes < 2) throw ConfigError("need at least 2 classes");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");

  std::mt19937_64 rng(derive_seed(seed, {kStreamData, 0}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dd = static_cast<Eigen::Index>(d);
  const auto kk = static_cast<Eigen::Index>(k_true);

  Eigen::MatrixXd gauss(dd, kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    for (Eigen::Index r = 0; r < dd; ++r) gauss(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  SyntheticTask task;
  task.projection = qr.householderQ() * Eigen::MatrixXd::Identity(dd, kk);
  task.noise_std = noise_std;

  task.scorers = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes), kk);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    if (c < 2 * k_true) {
      task.scorers(row, static_cast<Eigen::Index>(c / 2)) = c % 2 == 0 ? 1.0 : -1.0;
    } else {
      Eigen::VectorXd w(kk);
      for (Eigen::Index j = 0; j < kk; ++j) w[j] = normal(rng);
      task.scorers.row(row) = w.normalized().transpose();
    }
  }
  return task;
}

Dataset draw(const SyntheticTask& task, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset size must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, {kStreamData, 1}));
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto d = static_cast<Eigen::Index>(task.input_dim());
  const auto classes = static_cast<Eigen::Index>(task.num_classes());
  Dataset ds;
  ds.num_classes = task.num_classes();
  ds.inputs.resize(static_cast<Eigen::Index>(n), d);
  ds.labels.resize(n);
  Eigen::VectorXd x(d);
  Eigen::VectorXd scores(classes);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x[j] = normal(rng);
    scores = task.scorers * (task.projection.transpose() * x);
    for (Eigen::Index c = 0; c < classes; ++c) {
      scores[c] += task.noise_std * normal(rng);
    }
    Eigen::Index arg = 0;
    scores.maxCoeff(&arg);
    ds.inputs.row(static_cast<Eigen::Index>(i)) = x.transpose();
    ds.labels[i] = static_cast<int>(arg);
  }
  ds.task = task;
  index_classes(ds);
  return ds;
}

Dataset generate_synthetic(std::size_t d, std::size_t k_true,
                           std::size_t classes, std::size_t n,
                           double noise_std, std::uint64_t seed) {
  return draw(make_task(d, k_true, classes, noise_std, seed), n, seed);
}

ParamSet planted_representation(const SyntheticTask& task) {
  Layer l;
  l.weight = task.projection.transpose();
  l.bias = Eigen::VectorXd::Zero(task.projection.cols());
  l.tag = LayerTag::kShared;
  return ParamSet({std::move(l)});
}

std::vector<Shard> partition_pathological(const Dataset& ds,
                                          std::size_t n_clients,
                                          std::size_t classes_per_client,
                                          std::size_t per_class,
                                          double test_fraction,
                                          std::uint64_t seed) {
  if (n_clients == 0) throw ConfigError("need at least one client");
  if (classes_per_client == 0 || classes_per_client > ds.num_classes) {
    throw ConfigError("classes per client must lie in [1, " +
                      std::to_string(ds.num_classes) + "]");
  }
  if (per_class == 0) throw ConfigError("per-class sample count must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }

  std::vector<int> perm(ds.num_classes);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 class_rng(derive_seed(seed, {kStreamPartition}));
  std::shuffle(perm.begin(), perm.end(), class_rng);

  auto n_test = static_cast<std::size_t>(
      std::lround(test_fraction * static_cast<double>(per_class)));
  n_test = std::min(n_test, per_class - 1);

  std::vector<Shard> shards;
  shards.reserve(n_clients);
  for (std::size_t i = 0; i < n_clients; ++i) {
    Shard shard;
    shard.client_id = i;
    for (std::size_t j = 0; j < classes_per_client; ++j) {
      shard.classes.push_back(perm[(i * classes_per_client + j) % perm.size()]);
    }
    std::sort(shard.classes.begin(), shard.classes.end());

    for (int c : shard.classes) {
      const auto& pool = ds.class_index[static_cast<std::size_t>(c)];
      if (pool.size() < per_class) {
        throw DataError("class " + std::to_string(c) + " has " +
                        std::to_string(pool.size()) + " rows, need " +
                        std::to_string(per_class));
      }
      std::vector<std::size_t> rows = pool;
      std::mt19937_64 rng(derive_seed(
          seed, {kStreamPartition, i, static_cast<std::uint64_t>(c)}));
      // Partial Fisher-Yates: first per_class entries are a uniform sample.
      for (std::size_t k = 0; k < per_class; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, rows.size() - 1);
        std::swap(rows[k], rows[pick(rng)]);
      }
      shard.test_rows.insert(shard.test_rows.end(), rows.begin(),
                             rows.begin() + static_cast<long>(n_test));
      shard.train_rows.insert(shard.train_rows.end(),
                              rows.begin() + static_cast<long>(n_test),
                              rows.begin() + static_cast<long>(per_class));
    }
    shard.train = gather(ds, shard.train_rows);
    shard.test = gather(ds, shard.test_rows);
    shards.push_back(std::move(shard));
  }
  return shards;
}

std::vector<Batch> minibatches(const Shard& shard, std::size_t batch_size,
                               std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  const std::size_t n = shard.train.size();
  if (n == 0) {
    throw DataError("client " + std::to_string(shard.client_id) +
                    " has no training rows");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  batches.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min(batch_size, n - start);
    Batch b;
    b.inputs.resize(static_cast<Eigen::Index>(len), shard.train.inputs.cols());
    b.labels.resize(len);
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t r = order[start + k];
      b.inputs.row(static_cast<Eigen::Index>(k)) =
          shard.train.inputs.row(static_cast<Eigen::Index>(r));
      b.labels[k] = shard.train.labels[r];
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

Dataset load_bfd(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  try {
    ByteReader in(bytes);
    for (std::uint8_t m : kBfdMagic) {
      if (in.u8() != m) throw DataError(path + ": bad magic");
    }
    const std::uint32_t n = in.u32();
    const std::uint32_t d = in.u32();
    const std::uint32_t classes = in.u32();
    if (n == 0 || d == 0 || classes < 2) {
      throw DataError(path + ": invalid header");
    }
    const std::uint64_t expected =
        16 + std::uint64_t{n} * d * 4 + std::uint64_t{n} * 2;
    if (bytes.size() != expected) {
      throw DataError(path + ": size " + std::to_string(bytes.size()) +
                      " does not match header (" + std::to_string(expected) +
                      ")");
    }
    Dataset ds;
    ds.num_classes = classes;
    ds.inputs.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = 0; j < d; ++j) ds.inputs(i, j) = in.f32();
    }
    if (!ds.inputs.allFinite()) throw DataError(path + ": non-finite input");
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) ds.labels[i] = in.u16();
    index_classes(ds);
    return ds;
  } catch (const ProtocolError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void save_bfd(const Dataset& ds, const std::string& path) {
  ByteWriter out;
  for (std::uint8_t m : kBfdMagic) out.u8(m);
  out.u32(static_cast<std::uint32_t>(ds.size()));
  out.u32(static_cast<std::uint32_t>(ds.input_dim()));
  out.u32(static_cast<std::uint32_t>(ds.num_classes));
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) {
      out.f32(static_cast<float>(ds.inputs(i, j)));
    }
  }
  for (int y : ds.labels) out.u16(static_cast<std::uint16_t>(y));
  const auto bytes = out.take();
  write_file_atomic(path, bytes);
}

}  // namespace byzfed
