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

#include "byzfed/model.h"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "byzfed/errors.h"

namespace byzfed {

namespace {

std::string layer_shape(const Layer& l) {
  std::ostringstream os;
  os << l.out() << "x" << l.in();
  return os.str();
}

// ReLU follows every layer except the representation output (last shared
// layer) and the final layer.
bool relu_after(const ParamSet& p, std::size_t l) {
  const std::size_t last = p.num_layers() - 1;
  if (l == last) return false;
  const std::size_t hb = p.head_begin();
  if (hb > 0 && l == hb - 1) return false;
  return true;
}

void check_batch(const ParamSet& params, const Batch& batch) {
  if (params.empty()) throw ShapeError("empty parameter set");
  if (batch.size() == 0) throw DataError("empty batch");
  if (static_cast<std::size_t>(batch.inputs.rows()) != batch.size()) {
    throw ShapeError("batch has " + std::to_string(batch.inputs.rows()) +
                     " input rows but " + std::to_string(batch.size()) +
                     " labels");
  }
  if (static_cast<std::size_t>(batch.inputs.cols()) != params.input_dim()) {
    throw ShapeError("layer 0 expects input width " +
                     std::to_string(params.input_dim()) + ", batch has " +
                     std::to_string(batch.inputs.cols()));
  }
}

Layer init_layer(std::size_t out, std::size_t in, LayerTag tag,
                 std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Layer l;
  l.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = dist(rng);
  }
  l.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
  l.tag = tag;
  return l;
}

}  // namespace

const char* tag_name(LayerTag tag) {
  return tag == LayerTag::kHead ? "head" : "shared";
}

bool Layer::operator==(const Layer& other) const {
  return tag == other.tag && weight.rows() == other.weight.rows() &&
         weight.cols() == other.weight.cols() &&
         bias.size() == other.bias.size() && weight == other.weight &&
         bias == other.bias;
}

ParamSet::ParamSet(std::vector<Layer> layers) : layers_(std::move(layers)) {
  validate();
}

void ParamSet::validate() const {
  bool seen_head = false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.out() == 0 || l.in() == 0) {
      throw ShapeError("layer " + std::to_string(i) + " has a zero dimension");
    }
    if (static_cast<std::size_t>(l.bias.size()) != l.out()) {
      throw ShapeError("layer " + std::to_string(i) + " bias length " +
                       std::to_string(l.bias.size()) + " != out " +
                       std::to_string(l.out()));
    }
    if (i > 0 && layers_[i - 1].out() != l.in()) {
      throw ShapeError("layer " + std::to_string(i) + " (" + layer_shape(l) +
                       ") does not compose with layer " +
                       std::to_string(i - 1) + " (" +
                       layer_shape(layers_[i - 1]) + ")");
    }
    if (l.tag == LayerTag::kHead) {
      seen_head = true;
    } else if (seen_head) {
      throw ShapeError("shared layer " + std::to_string(i) +
                       " follows a head layer");
    }
  }
  if (!all_finite()) throw ShapeError("non-finite parameter entry");
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.size();
  return n;
}

std::size_t ParamSet::num_scalars(LayerTag tag) const {
  std::size_t n = 0;
  for (const Layer& l : layers_) {
    if (l.tag == tag) n += l.size();
  }
  return n;
}

std::size_t ParamSet::head_begin() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].tag == LayerTag::kHead) return i;
  }
  return layers_.size();
}

std::size_t ParamSet::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().in();
}

std::size_t ParamSet::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out();
}

bool ParamSet::all_finite() const {
  for (const Layer& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z = *this;
  for (Layer& l : z.layers_) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return z;
}

ParamSet ParamSet::retagged(LayerTag tag) const {
  ParamSet r = *this;
  for (Layer& l : r.layers_) l.tag = tag;
  return r;
}

ParamSet ParamSet::with_head_suffix(std::size_t head_layers) const {
  if (head_layers > layers_.size()) {
    throw ShapeError("head suffix longer than the parameter set");
  }
  ParamSet r = *this;
  const std::size_t hb = layers_.size() - head_layers;
  for (std::size_t i = 0; i < r.layers_.size(); ++i) {
    r.layers_[i].tag = i < hb ? LayerTag::kShared : LayerTag::kHead;
  }
  return r;
}

Eigen::VectorXd ParamSet::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(num_scalars()));
  Eigen::Index pos = 0;
  for (const Layer& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        flat[pos++] = l.weight(r, c);
      }
    }
    flat.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return flat;
}

ParamSet ParamSet::unflatten_like(const ParamSet& like,
                                  const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != like.num_scalars()) {
    throw ShapeError("flat vector length " + std::to_string(flat.size()) +
                     " != " + std::to_string(like.num_scalars()));
  }
  ParamSet out = like;
  Eigen::Index pos = 0;
  for (Layer& l : out.layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        l.weight(r, c) = flat[pos++];
      }
    }
    l.bias = flat.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
  return out;
}

bool ParamSet::operator==(const ParamSet& other) const {
  return layers_ == other.layers_;
}

ParamSet build_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0 || spec.rep_dim == 0 || spec.num_classes == 0) {
    throw ConfigError("model dimensions must be >= 1");
  }
  for (std::size_t h : spec.hidden_dims) {
    if (h == 0) throw ConfigError("hidden layer width must be >= 1");
  }
  if (spec.rep_dim >= spec.input_dim) {
    std::cerr << "warning: representation width " << spec.rep_dim
              << " is not smaller than input width " << spec.input_dim << "\n";
  }

  std::vector<std::size_t> widths{spec.input_dim};
  widths.insert(widths.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  widths.push_back(spec.rep_dim);
  widths.push_back(spec.num_classes);

  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const LayerTag tag =
        i + 2 == widths.size() ? LayerTag::kHead : LayerTag::kShared;
    layers.push_back(init_layer(widths[i + 1], widths[i], tag, rng));
  }
  return ParamSet(std::move(layers));
}

ParamSet build_head(std::size_t rep_dim, std::size_t num_classes,
                    std::uint64_t seed) {
  if (rep_dim == 0 || num_classes == 0) {
    throw ConfigError("head dimensions must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  layers.push_back(init_layer(num_classes, rep_dim, LayerTag::kHead, rng));
  return ParamSet(std::move(layers));
}

Eigen::MatrixXd forward_logits(const ParamSet& params,
                               const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != params.input_dim()) {
    throw ShapeError("layer 0 expects input width " +
                     std::to_string(params.input_dim()) + ", got " +
                     std::to_string(inputs.cols()));
  }
  Eigen::MatrixXd a = inputs.transpose();
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const Layer& layer = params.layer(l);
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    a = relu_after(params, l) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

std::size_t count_correct(const ParamSet& params, const Batch& batch) {
  check_batch(params, batch);
  const Eigen::MatrixXd logits = forward_logits(params, batch.inputs);
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index arg = 0;
    logits.col(j).maxCoeff(&arg);
    if (arg == batch.labels[static_cast<std::size_t>(j)]) ++correct;
  }
  return correct;
}

LossGrad forward_loss_grad(const ParamSet& params, const Batch& batch) {
  check_batch(params, batch);
  const std::size_t num_layers = params.num_layers();
  const auto classes = static_cast<int>(params.output_dim());
  const auto m = static_cast<Eigen::Index>(batch.size());
  for (int y : batch.labels) {
    if (y < 0 || y >= classes) {
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }

  // acts[l] is the input of layer l; pre[l] its pre-activation.
  std::vector<Eigen::MatrixXd> acts(num_layers + 1);
  std::vector<Eigen::MatrixXd> pre(num_layers);
  acts[0] = batch.inputs.transpose();
  for (std::size_t l = 0; l < num_layers; ++l) {
    const Layer& layer = params.layer(l);
    pre[l] = layer.weight * acts[l];
    pre[l].colwise() += layer.bias;
    acts[l + 1] = relu_after(params, l) ? Eigen::MatrixXd(pre[l].cwiseMax(0.0))
                                        : pre[l];
  }

  const Eigen::MatrixXd& logits = acts[num_layers];
  Eigen::MatrixXd probs(logits.rows(), m);
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index arg = 0;
    const double mx = logits.col(j).maxCoeff(&arg);
    const int y = batch.labels[static_cast<std::size_t>(j)];
    if (arg == y) ++correct;
    const Eigen::VectorXd e = (logits.col(j).array() - mx).exp().matrix();
    const double total = e.sum();
    loss += std::log(total) + mx - logits(y, j);
    probs.col(j) = e / total;
  }
  loss /= static_cast<double>(m);

  LossGrad out;
  out.loss = loss;
  out.correct = correct;
  out.grads = params.zeros_like();

  Eigen::MatrixXd delta = probs;
  for (Eigen::Index j = 0; j < m; ++j) {
    delta(batch.labels[static_cast<std::size_t>(j)], j) -= 1.0;
  }
  delta /= static_cast<double>(m);

  for (std::size_t l = num_layers; l-- > 0;) {
    Layer& g = out.grads.mutable_layer(l);
    g.weight.noalias() = delta * acts[l].transpose();
    g.bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = params.layer(l).weight.transpose() * delta;
    if (relu_after(params, l - 1)) {
      back = back.cwiseProduct(
          (pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    delta = std::move(back);
  }
  return out;
}

SplitParams split(const ParamSet& params) {
  const std::size_t hb = params.head_begin();
  std::vector<Layer> shared(params.layers().begin(),
                            params.layers().begin() + static_cast<long>(hb));
  std::vector<Layer> head(params.layers().begin() + static_cast<long>(hb),
                          params.layers().end());
  return {ParamSet(std::move(shared)), ParamSet(std::move(head))};
}

ParamSet join(const ParamSet& shared, const ParamSet& head) {
  for (const Layer& l : shared.layers()) {
    if (l.tag != LayerTag::kShared) {
      throw ShapeError("join: first argument holds a head layer");
    }
  }
  for (const Layer& l : head.layers()) {
    if (l.tag != LayerTag::kHead) {
      throw ShapeError("join: second argument holds a shared layer");
    }
  }
  if (!shared.empty() && !head.empty() &&
      shared.output_dim() != head.input_dim()) {
    throw ShapeError("join: representation width " +
                     std::to_string(shared.output_dim()) +
                     " != head input width " +
                     std::to_string(head.input_dim()) + " at layer " +
                     std::to_string(shared.num_layers()));
  }
  std::vector<Layer> layers = shared.layers();
  layers.insert(layers.end(), head.layers().begin(), head.layers().end());
  return ParamSet(std::move(layers));
}

std::string dump_text(const ParamSet& params) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (const Layer& l : params.layers()) {
    const double checksum = l.weight.sum() + l.bias.sum();
    os << tag_name(l.tag) << ' ' << l.out() << ' ' << l.in() << ' '
       << checksum << '\n';
  }
  return os.str();
}

}  // namespace byzfed
