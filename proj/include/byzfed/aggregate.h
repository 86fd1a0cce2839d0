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

#ifndef BYZFED_AGGREGATE_H_
#define BYZFED_AGGREGATE_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "byzfed/model.h"

namespace byzfed {

// Client uploads for one round, indexed by client id. All shape-identical.
using UpdateSet = std::span<const ParamSet>;

enum class Aggregator { kMean, kGeometricMedian, kKrum };

const char* aggregator_name(Aggregator a);
Aggregator parse_aggregator(const std::string& name);

struct GmOptions {
  double tol = 1e-8;
  std::size_t max_iter = 1000;
  double eps = 1e-12;  // guard on the Weiszfeld weights 1 / distance

  bool operator==(const GmOptions&) const = default;
};

struct GmResult {
  ParamSet median;
  bool converged = true;
  std::size_t iterations = 0;  // max over layers
};

struct KrumResult {
  std::size_t index = 0;
  ParamSet update;
};

ParamSet agg_mean(UpdateSet u);

// Per-layer geometric median via Weiszfeld, started from the mean. Each
// layer's weights and bias are treated as one block under the Frobenius
// norm.
GmResult agg_gm(UpdateSet u, const GmOptions& opts = {});

// Selects the update whose summed distance to its n - f - 2 nearest other
// updates is smallest (whole flattened update, Euclidean distance, ties to
// the lowest index). Needs n >= f + 3.
KrumResult agg_krum(UpdateSet u, std::size_t f);

// Sum over layers and clients of ||u_i[layer] - p[layer]||_F.
double gm_objective(UpdateSet u, const ParamSet& p);

std::vector<double> krum_scores(UpdateSet u, std::size_t f);

}  // namespace byzfed

#endif  // BYZFED_AGGREGATE_H_
