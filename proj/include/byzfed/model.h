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

#ifndef BYZFED_MODEL_H_
#define BYZFED_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace byzfed {

enum class LayerTag : std::uint8_t { kShared, kHead };

const char* tag_name(LayerTag tag);

// Dense affine layer y = W x + b. W is out x in.
struct Layer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  LayerTag tag = LayerTag::kShared;

  std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t size() const { return out() * in() + out(); }

  bool operator==(const Layer& other) const;
};

// Ordered stack of layers. The representation is the leading run of shared
// layers, the personalized head is the (possibly empty) trailing run of
// head layers. Shapes compose and every entry is finite.
class ParamSet {
 public:
  ParamSet() = default;
  // Throws ShapeError if the layers violate the invariants.
  explicit ParamSet(std::vector<Layer> layers);

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  // Mutable access for in-place arithmetic that keeps shapes fixed.
  Layer& mutable_layer(std::size_t i) { return layers_.at(i); }

  std::size_t num_layers() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  std::size_t num_scalars() const;
  std::size_t num_scalars(LayerTag tag) const;
  // Index of the first head layer, num_layers() if there is none.
  std::size_t head_begin() const;
  std::size_t input_dim() const;
  std::size_t output_dim() const;

  bool all_finite() const;
  void validate() const;

  ParamSet zeros_like() const;
  // Same values, every layer re-tagged. Used for payloads that carry a full
  // model as if it were a representation (FedAvg uploads).
  ParamSet retagged(LayerTag tag) const;
  // Re-tags the last `head_layers` layers as head, the rest as shared.
  ParamSet with_head_suffix(std::size_t head_layers) const;

  // Concatenation of every layer's row-major weights followed by its bias.
  Eigen::VectorXd flatten() const;
  static ParamSet unflatten_like(const ParamSet& like,
                                 const Eigen::VectorXd& flat);

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<Layer> layers_;
};

struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t rep_dim = 0;
  std::size_t num_classes = 0;

  bool operator==(const ModelSpec&) const = default;
};

// Shared layers map input_dim -> hidden_dims... -> rep_dim with ReLU between
// hidden layers and a linear representation output; the head is one linear
// layer rep_dim -> num_classes. Weights ~ U(+-sqrt(6/fan_in)), biases zero.
ParamSet build_model(const ModelSpec& spec, std::uint64_t seed);

// A fresh head layer rep_dim -> num_classes, initialized like build_model.
ParamSet build_head(std::size_t rep_dim, std::size_t num_classes,
                    std::uint64_t seed);

struct Batch {
  Eigen::MatrixXd inputs;  // m x d, one sample per row
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct LossGrad {
  double loss = 0.0;
  ParamSet grads;
  std::size_t correct = 0;
};

// Mean softmax cross-entropy over the batch with the exact gradient of that
// mean w.r.t. every parameter.
LossGrad forward_loss_grad(const ParamSet& params, const Batch& batch);

// Logits, num_classes x m.
Eigen::MatrixXd forward_logits(const ParamSet& params,
                               const Eigen::MatrixXd& inputs);

std::size_t count_correct(const ParamSet& params, const Batch& batch);

struct SplitParams {
  ParamSet shared;
  ParamSet head;
};

SplitParams split(const ParamSet& params);
ParamSet join(const ParamSet& shared, const ParamSet& head);

// One line per layer: `tag out in checksum`.
std::string dump_text(const ParamSet& params);

}  // namespace byzfed

#endif  // BYZFED_MODEL_H_
