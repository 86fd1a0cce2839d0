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

#include "byzfed/byzantine.h"

#include "byzfed/errors.h"

namespace byzfed {

const char* attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone:
      return "none";
    case AttackKind::kScaledRandom:
      return "sr";
    case AttackKind::kMislabel:
      return "ml";
  }
  return "none";
}

AttackKind parse_attack(const std::string& name) {
  if (name == "none") return AttackKind::kNone;
  if (name == "sr") return AttackKind::kScaledRandom;
  if (name == "ml") return AttackKind::kMislabel;
  throw ConfigError("unknown attack '" + name + "' (none|sr|ml)");
}

const char* mislabel_mode_name(MislabelMode mode) {
  return mode == MislabelMode::kCyclicShift ? "cyclic-shift" : "pairwise-swap";
}

MislabelMode parse_mislabel_mode(const std::string& name) {
  if (name == "cyclic-shift") return MislabelMode::kCyclicShift;
  if (name == "pairwise-swap") return MislabelMode::kPairwiseSwap;
  throw ConfigError("unknown mislabel mode '" + name +
                    "' (cyclic-shift|pairwise-swap)");
}

ParamSet attack_sr(const ParamSet& rep, double sigma, std::mt19937_64& rng) {
  if (rep.num_scalars(LayerTag::kHead) != 0) {
    throw ContractError("scaled-random attack applies to shared layers only");
  }
  if (!(sigma >= 0.0)) throw ContractError("sigma must be >= 0");
  if (sigma == 0.0) return rep;

  std::normal_distribution<double> normal(0.0, 1.0);
  ParamSet out = rep;
  for (std::size_t i = 0; i < out.num_layers(); ++i) {
    Layer& l = out.mutable_layer(i);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        l.weight(r, c) += sigma * normal(rng);
      }
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) {
      l.bias[r] += sigma * normal(rng);
    }
  }
  return out;
}

std::vector<int> attack_ml(const std::vector<int>& labels, std::size_t classes,
                           MislabelMode mode) {
  const auto c = static_cast<int>(classes);
  std::vector<int> out;
  out.reserve(labels.size());
  for (int y : labels) {
    if (y < 0 || y >= c) {
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(c) + ")");
    }
    if (mode == MislabelMode::kCyclicShift) {
      out.push_back((y + 1) % c);
    } else {
      const int swapped = y ^ 1;
      out.push_back(swapped < c ? swapped : y);
    }
  }
  return out;
}

}  // namespace byzfed
