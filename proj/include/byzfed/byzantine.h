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

#ifndef BYZFED_BYZANTINE_H_
#define BYZFED_BYZANTINE_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "byzfed/model.h"

namespace byzfed {

enum class AttackKind { kNone, kScaledRandom, kMislabel };
enum class MislabelMode { kCyclicShift, kPairwiseSwap };

struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  double sigma = 10.0;  // kScaledRandom only
  MislabelMode mode = MislabelMode::kCyclicShift;  // kMislabel only
  std::uint64_t seed = 0;

  bool operator==(const AttackSpec&) const = default;
};

const char* attack_name(AttackKind kind);
AttackKind parse_attack(const std::string& name);
const char* mislabel_mode_name(MislabelMode mode);
MislabelMode parse_mislabel_mode(const std::string& name);

// Scaled-random attack: every scalar gets sigma * N(0, 1) added. `rep` must
// be shared-only (the head never leaves the client).
ParamSet attack_sr(const ParamSet& rep, double sigma, std::mt19937_64& rng);

// Mislabeling attack. cyclic-shift: y -> (y + 1) mod C. pairwise-swap:
// y -> y ^ 1, with the last class fixed when C is odd.
std::vector<int> attack_ml(const std::vector<int>& labels, std::size_t classes,
                           MislabelMode mode);

}  // namespace byzfed

#endif  // BYZFED_BYZANTINE_H_
