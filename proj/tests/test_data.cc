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


#include <algorithm>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "byzfed/bytes.h"
#include "byzfed/data.h"
#include "byzfed/errors.h"
#include "byzfed/optim.h"

namespace byzfed {
namespace {

TEST(Synthetic, SameSeedSameDataset) {
  Dataset a = generate_synthetic(12, 3, 6, 200, 0.1, 5);
  Dataset b = generate_synthetic(12, 3, 6, 200, 0.1, 5);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_FALSE(generate_synthetic(12, 3, 6, 200, 0.1, 6).labels == a.labels);
}

TEST(Synthetic, ProjectionIsOrthonormal) {
  SyntheticTask t = make_task(16, 4, 8, 0.0, 3);
  EXPECT_TRUE((t.projection.transpose() * t.projection)
                  .isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-12));
}

TEST(Synthetic, ClassIndexMatchesLabels) {
  Dataset ds = generate_synthetic(8, 2, 4, 300, 0.1, 9);
  std::size_t total = 0;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    for (std::size_t r : ds.class_index[c]) {
      EXPECT_EQ(ds.labels[r], static_cast<int>(c));
    }
    total += ds.class_index[c].size();
  }
  EXPECT_EQ(total, ds.size());
}

// Noise-free two-class data is linearly separable; fitting a plain d -> C
// softmax model on it should reach near-perfect training accuracy.
TEST(Synthetic, NoiseFreeTwoClassIsSeparable) {
  Dataset ds = generate_synthetic(10, 1, 2, 500, 0.0, 4);
  Layer l{Eigen::MatrixXd::Zero(2, 10), Eigen::VectorXd::Zero(2),
          LayerTag::kHead};
  ParamSet p({l});
  Optimizer opt = Optimizer::for_params(p, 0.5, 0.9);
  Batch all{ds.inputs, ds.labels};
  for (int it = 0; it < 300; ++it) {
    step_in_place(p, forward_loss_grad(p, all).grads, opt, std::nullopt);
  }
  EXPECT_GE(static_cast<double>(count_correct(p, all)) / 500.0, 0.99);
}

TEST(Synthetic, RejectsBadDimensions) {
  EXPECT_THROW(generate_synthetic(0, 1, 2, 10, 0.1, 1), ConfigError);
  EXPECT_THROW(generate_synthetic(4, 5, 2, 10, 0.1, 1), ConfigError);
  EXPECT_THROW(generate_synthetic(4, 2, 1, 10, 0.1, 1), ConfigError);
}

TEST(Partition, EachShardHasExactlySClasses) {
  Dataset ds = generate_synthetic(8, 5, 10, 6000, 0.1, 1);
  auto shards = partition_pathological(ds, 100, 2, 20, 0.25, 2);
  ASSERT_EQ(shards.size(), 100u);
  for (const Shard& s : shards) {
    std::set<int> seen(s.train.labels.begin(), s.train.labels.end());
    seen.insert(s.test.labels.begin(), s.test.labels.end());
    EXPECT_EQ(seen.size(), 2u);
    EXPECT_EQ(s.classes.size(), 2u);
    EXPECT_EQ(s.train.size() + s.test.size(), 40u);
  }
}

TEST(Partition, ZeroTestFraction) {
  Dataset ds = generate_synthetic(8, 2, 4, 800, 0.1, 1);
  for (const Shard& s : partition_pathological(ds, 6, 2, 15, 0.0, 3)) {
    EXPECT_EQ(s.test.size(), 0u);
    EXPECT_EQ(s.train.size(), 30u);
  }
}

TEST(Partition, RowsAreDisjointWithinAShard) {
  Dataset ds = generate_synthetic(8, 2, 4, 800, 0.1, 1);
  for (const Shard& s : partition_pathological(ds, 6, 2, 30, 0.2, 3)) {
    std::set<std::size_t> rows(s.train_rows.begin(), s.train_rows.end());
    rows.insert(s.test_rows.begin(), s.test_rows.end());
    EXPECT_EQ(rows.size(), s.train_rows.size() + s.test_rows.size());
    for (std::size_t r : s.train_rows) {
      EXPECT_TRUE(std::binary_search(s.classes.begin(), s.classes.end(),
                                     ds.labels[r]));
    }
  }
}

TEST(Partition, ReplayBySeed) {
  Dataset ds = generate_synthetic(8, 3, 6, 1200, 0.1, 1);
  auto a = partition_pathological(ds, 10, 2, 20, 0.2, 7);
  auto b = partition_pathological(ds, 10, 2, 20, 0.2, 7);
  auto c = partition_pathological(ds, 10, 2, 20, 0.2, 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].train_rows, b[i].train_rows);
    EXPECT_EQ(a[i].test_rows, b[i].test_rows);
    differs |= a[i].train_rows != c[i].train_rows;
  }
  EXPECT_TRUE(differs);
}

TEST(Partition, InsufficientRowsNamesClass) {
  Dataset ds = generate_synthetic(8, 1, 2, 40, 0.1, 1);
  try {
    partition_pathological(ds, 2, 2, 1000, 0.2, 1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class"), std::string::npos);
  }
}

TEST(Minibatches, SizesAndDeterminism) {
  Dataset ds = generate_synthetic(4, 1, 2, 200, 0.1, 1);
  Shard s = partition_pathological(ds, 1, 2, 5, 0.0, 1)[0];
  ASSERT_EQ(s.train.size(), 10u);
  auto batches = minibatches(s, 3, 11);
  std::vector<std::size_t> sizes;
  for (const Batch& b : batches) sizes.push_back(b.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 1}));
  auto again = minibatches(s, 3, 11);
  for (std::size_t i = 0; i < batches.size(); ++i) {
    EXPECT_EQ(batches[i].inputs, again[i].inputs);
    EXPECT_EQ(batches[i].labels, again[i].labels);
  }
}

TEST(Minibatches, EmptyShardThrows) {
  Shard s;
  s.train.inputs.resize(0, 4);
  EXPECT_THROW(minibatches(s, 3, 1), DataError);
}

TEST(Bfd, RoundTripsThroughFloat32) {
  Dataset ds = generate_synthetic(6, 2, 4, 50, 0.1, 1);
  const auto path =
      (std::filesystem::temp_directory_path() / "byzfed_test.bfd").string();
  save_bfd(ds, path);
  Dataset back = load_bfd(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.num_classes, 4u);
  EXPECT_TRUE(back.inputs.isApprox(ds.inputs.cast<float>().cast<double>()));
  EXPECT_FALSE(back.task.has_value());
}

TEST(Bfd, RejectsGarbage) {
  const auto path =
      (std::filesystem::temp_directory_path() / "byzfed_bad.bfd").string();
  write_file_atomic(path, std::string("BFD1\x01\x00"));
  EXPECT_THROW(load_bfd(path), Error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace byzfed
