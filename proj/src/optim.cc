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

#include "byzfed/optim.h"

#include <string>

#include "byzfed/errors.h"

namespace byzfed {

namespace {

void check_shapes(const ParamSet& params, const ParamSet& grads,
                  const ParamSet& velocity) {
  if (params.num_layers() != grads.num_layers() ||
      params.num_layers() != velocity.num_layers()) {
    throw ShapeError("optimizer: layer count mismatch (params " +
                     std::to_string(params.num_layers()) + ", grads " +
                     std::to_string(grads.num_layers()) + ", velocity " +
                     std::to_string(velocity.num_layers()) + ")");
  }
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    const Layer& p = params.layer(i);
    const Layer& g = grads.layer(i);
    const Layer& v = velocity.layer(i);
    if (p.out() != g.out() || p.in() != g.in() || p.out() != v.out() ||
        p.in() != v.in()) {
      throw ShapeError("optimizer: shape mismatch at layer " +
                       std::to_string(i));
    }
  }
}

}  // namespace

Optimizer Optimizer::for_params(const ParamSet& params, double lr,
                                double momentum) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  return Optimizer{lr, momentum, params.zeros_like()};
}

void Optimizer::reset(LayerTag tag) {
  for (std::size_t i = 0; i < velocity.num_layers(); ++i) {
    Layer& v = velocity.mutable_layer(i);
    if (v.tag == tag) {
      v.weight.setZero();
      v.bias.setZero();
    }
  }
}

void step_in_place(ParamSet& params, const ParamSet& grads, Optimizer& opt,
                   std::optional<LayerTag> tag) {
  check_shapes(params, grads, opt.velocity);
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    Layer& p = params.mutable_layer(i);
    if (tag && p.tag != *tag) continue;
    Layer& v = opt.velocity.mutable_layer(i);
    const Layer& g = grads.layer(i);
    v.weight = opt.momentum * v.weight + g.weight;
    v.bias = opt.momentum * v.bias + g.bias;
    p.weight -= opt.lr * v.weight;
    p.bias -= opt.lr * v.bias;
  }
}

StepResult step(const ParamSet& params, const ParamSet& grads,
                const Optimizer& opt) {
  StepResult r{params, opt};
  step_in_place(r.params, grads, r.opt, std::nullopt);
  return r;
}

StepResult step_partial(const ParamSet& params, const ParamSet& grads,
                        const Optimizer& opt, LayerTag tag) {
  StepResult r{params, opt};
  step_in_place(r.params, grads, r.opt, tag);
  return r;
}

}  // namespace byzfed
