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

#include "byzfed/aggregate.h"

#include <algorithm>
#include <cmath>

#include "byzfed/errors.h"

namespace byzfed {

namespace {

void check_updates(UpdateSet u) {
  if (u.empty()) throw ContractError("aggregation needs at least one update");
  const ParamSet& ref = u.front();
  for (std::size_t i = 1; i < u.size(); ++i) {
    const ParamSet& p = u[i];
    if (p.num_layers() != ref.num_layers()) {
      throw ShapeError("update " + std::to_string(i) + " has " +
                       std::to_string(p.num_layers()) + " layers, expected " +
                       std::to_string(ref.num_layers()));
    }
    for (std::size_t l = 0; l < ref.num_layers(); ++l) {
      if (p.layer(l).out() != ref.layer(l).out() ||
          p.layer(l).in() != ref.layer(l).in()) {
        throw ShapeError("update " + std::to_string(i) +
                         " shape mismatch at layer " + std::to_string(l));
      }
    }
  }
}

bool all_identical(UpdateSet u) {
  for (std::size_t i = 1; i < u.size(); ++i) {
    if (!(u[i] == u[0])) return false;
  }
  return true;
}

Eigen::VectorXd layer_block(const Layer& l) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(l.size()));
  v.head(l.weight.size()) =
      Eigen::Map<const Eigen::VectorXd>(l.weight.data(), l.weight.size());
  v.tail(l.bias.size()) = l.bias;
  return v;
}

void set_layer_block(Layer& l, const Eigen::VectorXd& v) {
  Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) =
      v.head(l.weight.size());
  l.bias = v.tail(l.bias.size());
}

std::vector<std::vector<double>> pairwise_distances(UpdateSet u) {
  std::vector<Eigen::VectorXd> flat;
  flat.reserve(u.size());
  for (const ParamSet& p : u) flat.push_back(p.flatten());
  const std::size_t n = u.size();
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i][j] = dist[j][i] = (flat[i] - flat[j]).norm();
    }
  }
  return dist;
}

}  // namespace

const char* aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::kMean:
      return "mean";
    case Aggregator::kGeometricMedian:
      return "gm";
    case Aggregator::kKrum:
      return "krum";
  }
  return "mean";
}

Aggregator parse_aggregator(const std::string& name) {
  if (name == "mean") return Aggregator::kMean;
  if (name == "gm") return Aggregator::kGeometricMedian;
  if (name == "krum") return Aggregator::kKrum;
  throw ConfigError("unknown aggregator '" + name + "' (mean|gm|krum)");
}

ParamSet agg_mean(UpdateSet u) {
  check_updates(u);
  if (all_identical(u)) return u.front();
  ParamSet out = u.front();
  for (std::size_t i = 1; i < u.size(); ++i) {
    for (std::size_t l = 0; l < out.num_layers(); ++l) {
      out.mutable_layer(l).weight += u[i].layer(l).weight;
      out.mutable_layer(l).bias += u[i].layer(l).bias;
    }
  }
  const double inv = 1.0 / static_cast<double>(u.size());
  for (std::size_t l = 0; l < out.num_layers(); ++l) {
    out.mutable_layer(l).weight *= inv;
    out.mutable_layer(l).bias *= inv;
  }
  return out;
}

GmResult agg_gm(UpdateSet u, const GmOptions& opts) {
  check_updates(u);
  if (!(opts.tol > 0.0)) throw ContractError("gm tolerance must be > 0");
  GmResult result;
  if (all_identical(u)) {
    result.median = u.front();
    return result;
  }

  const std::size_t n = u.size();
  result.median = agg_mean(u);
  for (std::size_t l = 0; l < result.median.num_layers(); ++l) {
    std::vector<Eigen::VectorXd> points;
    points.reserve(n);
    for (const ParamSet& p : u) points.push_back(layer_block(p.layer(l)));

    Eigen::VectorXd estimate = layer_block(result.median.layer(l));
    bool converged = false;
    std::size_t iter = 0;
    while (iter < opts.max_iter) {
      ++iter;
      Eigen::VectorXd numer = Eigen::VectorXd::Zero(estimate.size());
      double denom = 0.0;
      for (const Eigen::VectorXd& x : points) {
        const double w = 1.0 / std::max((x - estimate).norm(), opts.eps);
        numer += w * x;
        denom += w;
      }
      Eigen::VectorXd next = numer / denom;
      const double moved = (next - estimate).norm();
      estimate = std::move(next);
      if (moved < opts.tol) {
        converged = true;
        break;
      }
    }
    set_layer_block(result.median.mutable_layer(l), estimate);
    result.converged = result.converged && converged;
    result.iterations = std::max(result.iterations, iter);
  }
  return result;
}

std::vector<double> krum_scores(UpdateSet u, std::size_t f) {
  check_updates(u);
  const std::size_t n = u.size();
  if (n < f + 3) {
    throw ConfigError("Krum needs n >= f + 3 with f the known Byzantine count "
                      "(n = " + std::to_string(n) + ", f = " +
                      std::to_string(f) + ")");
  }
  const std::size_t neighbours = n - f - 2;
  const auto dist = pairwise_distances(u);
  std::vector<double> scores(n, 0.0);
  std::vector<double> row;
  for (std::size_t k = 0; k < n; ++k) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != k) row.push_back(dist[k][j]);
    }
    std::partial_sort(row.begin(), row.begin() + static_cast<long>(neighbours),
                      row.end());
    double s = 0.0;
    for (std::size_t j = 0; j < neighbours; ++j) s += row[j];
    scores[k] = s;
  }
  return scores;
}

KrumResult agg_krum(UpdateSet u, std::size_t f) {
  const std::vector<double> scores = krum_scores(u, f);
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] < scores[best]) best = k;
  }
  return {best, u[best]};
}

double gm_objective(UpdateSet u, const ParamSet& p) {
  check_updates(u);
  double total = 0.0;
  for (const ParamSet& x : u) {
    if (x.num_layers() != p.num_layers()) {
      throw ShapeError("gm_objective: layer count mismatch");
    }
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      const double dw = (x.layer(l).weight - p.layer(l).weight).squaredNorm();
      const double db = (x.layer(l).bias - p.layer(l).bias).squaredNorm();
      total += std::sqrt(dw + db);
    }
  }
  return total;
}

}  // namespace byzfed
