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

#ifndef BYZFED_OPTIM_H_
#define BYZFED_OPTIM_H_

#include <optional>

#include "byzfed/model.h"

namespace byzfed {

// SGD with heavy-ball momentum: v' = momentum * v + g, p' = p - lr * v'.
struct Optimizer {
  double lr = 0.01;
  double momentum = 0.9;
  ParamSet velocity;

  // Zero velocity shaped like `params`. Throws ConfigError on lr <= 0 or
  // momentum outside [0, 1).
  static Optimizer for_params(const ParamSet& params, double lr,
                              double momentum);

  // Zeroes the velocity of every layer carrying `tag`.
  void reset(LayerTag tag);
};

struct StepResult {
  ParamSet params;
  Optimizer opt;
};

StepResult step(const ParamSet& params, const ParamSet& grads,
                const Optimizer& opt);

// Updates only the layers tagged `tag`; every other layer and its velocity
// is left bit-identical.
StepResult step_partial(const ParamSet& params, const ParamSet& grads,
                        const Optimizer& opt, LayerTag tag);

// In-place variant used on the training hot path. `tag` empty = all layers.
void step_in_place(ParamSet& params, const ParamSet& grads, Optimizer& opt,
                   std::optional<LayerTag> tag);

}  // namespace byzfed

#endif  // BYZFED_OPTIM_H_
