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


#include <gtest/gtest.h>

#include "byzfed/errors.h"
#include "byzfed/optim.h"

namespace byzfed {
namespace {

ParamSet scalar(double v, LayerTag tag = LayerTag::kShared) {
  Layer l{Eigen::MatrixXd::Constant(1, 1, v), Eigen::VectorXd::Zero(1), tag};
  return ParamSet({l});
}

TEST(Step, SingleMomentumStep) {
  ParamSet p = scalar(1.0);
  Optimizer opt = Optimizer::for_params(p, 0.01, 0.9);
  StepResult r = step(p, scalar(2.0), opt);
  EXPECT_DOUBLE_EQ(r.opt.velocity.layer(0).weight(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(r.params.layer(0).weight(0, 0), 0.98);
}

TEST(Step, VelocityAccumulatesGeometrically) {
  ParamSet p = scalar(0.0);
  Optimizer opt = Optimizer::for_params(p, 0.01, 0.9);
  StepResult r = step(p, scalar(3.0), opt);
  r = step(r.params, scalar(3.0), r.opt);
  EXPECT_DOUBLE_EQ(r.opt.velocity.layer(0).weight(0, 0), 1.9 * 3.0);
}

TEST(Step, ShapeMismatchThrows) {
  ParamSet p = build_model({3, {}, 2, 2}, 1);
  Optimizer opt = Optimizer::for_params(p, 0.01, 0.9);
  EXPECT_THROW(step(p, build_model({4, {}, 2, 2}, 1), opt), ShapeError);
}

TEST(Step, RejectsBadHyperparameters) {
  ParamSet p = scalar(1.0);
  EXPECT_THROW(Optimizer::for_params(p, 0.0, 0.9), ConfigError);
  EXPECT_THROW(Optimizer::for_params(p, 0.1, 1.0), ConfigError);
  EXPECT_THROW(Optimizer::for_params(p, 0.1, -0.1), ConfigError);
}

TEST(StepPartial, HeadStepLeavesSharedBitwise) {
  ParamSet p = build_model({5, {4}, 3, 2}, 3);
  ParamSet g = build_model({5, {4}, 3, 2}, 4);
  Optimizer opt = Optimizer::for_params(p, 0.1, 0.9);
  StepResult r = step_partial(p, g, opt, LayerTag::kHead);
  EXPECT_EQ(r.params.layer(0), p.layer(0));
  EXPECT_EQ(r.params.layer(1), p.layer(1));
  EXPECT_FALSE(r.params.layer(2) == p.layer(2));
  EXPECT_EQ(r.opt.velocity.layer(0), opt.velocity.layer(0));
}

TEST(StepPartial, ZeroGradDecaysVelocityOnly) {
  ParamSet p = scalar(1.0);
  Optimizer opt = Optimizer::for_params(p, 0.01, 0.5);
  StepResult r = step(p, scalar(4.0), opt);  // v = 4, p = 0.96
  StepResult z = step_partial(r.params, scalar(0.0), r.opt, LayerTag::kShared);
  EXPECT_DOUBLE_EQ(z.opt.velocity.layer(0).weight(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(z.params.layer(0).weight(0, 0), 0.96 - 0.01 * 2.0);
}

TEST(Optimizer, ResetClearsOnlyTaggedLayers) {
  ParamSet p = build_model({3, {}, 2, 2}, 1);
  Optimizer opt = Optimizer::for_params(p, 0.1, 0.9);
  opt = step(p, build_model({3, {}, 2, 2}, 2), opt).opt;
  opt.reset(LayerTag::kShared);
  EXPECT_EQ(opt.velocity.layer(0).weight.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(opt.velocity.layer(1).weight.cwiseAbs().maxCoeff(), 0.0);
}

}  // namespace
}  // namespace byzfed
