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


#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "byzfed/engine.h"
#include "byzfed/errors.h"

namespace byzfed {
namespace {

ExperimentConfig tiny() {
  ExperimentConfig cfg;
  cfg.clients = 6;
  cfg.rounds = 3;
  cfg.tau_h = 2;
  cfg.tau_phi = 1;
  cfg.model = {16, {}, 3, 6};
  cfg.data.k_true = 3;
  cfg.data.samples = 1500;
  cfg.data.per_class = 30;
  cfg.meta.samples = 1500;
  cfg.dtype = WireDtype::kF64;
  cfg.seed = 5;
  return cfg;
}

double mean_train_loss(const ParamSet& model, const Shard& shard) {
  return forward_loss_grad(model, shard.train).loss;
}

TEST(ClientUpdate, NoEpochsIsIdentity) {
  ExperimentConfig cfg = tiny();
  cfg.tau_h = 0;
  cfg.tau_phi = 0;
  auto su = prepare(cfg);
  ClientUpdate u = client_update(su.clients[0], su.global, cfg, 1);
  EXPECT_EQ(u.upload, su.global);
  EXPECT_EQ(u.state.head, su.clients[0].head);
}

TEST(ClientUpdate, HeadPhaseNeverTouchesRepresentation) {
  ExperimentConfig cfg = tiny();
  cfg.tau_phi = 0;
  auto su = prepare(cfg);
  ClientUpdate u = client_update(su.clients[1], su.global, cfg, 1);
  EXPECT_EQ(u.upload, su.global);
  EXPECT_FALSE(u.state.head == su.clients[1].head);
}

TEST(ClientUpdate, RepresentationPhaseNeverTouchesHead) {
  ExperimentConfig cfg = tiny();
  cfg.tau_h = 0;
  auto su = prepare(cfg);
  ClientUpdate u = client_update(su.clients[1], su.global, cfg, 1);
  EXPECT_EQ(u.state.head, su.clients[1].head);
  EXPECT_FALSE(u.upload == su.global);
  EXPECT_EQ(u.upload.num_scalars(LayerTag::kHead), 0u);
}

TEST(ClientUpdate, LowersTrainingLossOnPlantedData) {
  ExperimentConfig cfg = tiny();
  cfg.tau_h = 10;
  cfg.tau_phi = 1;
  auto su = prepare(cfg);
  const ClientState& c = su.clients[2];
  const double before = mean_train_loss(join(su.global, c.head), c.shard);
  ClientUpdate u = client_update(c, su.global, cfg, 1);
  const double after = mean_train_loss(join(u.upload, u.state.head), c.shard);
  EXPECT_LT(after, before);
}

TEST(MaybeAttack, HonestAndZeroSigmaAreIdentity) {
  ExperimentConfig cfg = tiny();
  auto su = prepare(cfg);
  std::mt19937_64 rng(1);
  ClientState c = su.clients[0];
  EXPECT_EQ(maybe_attack(su.global, c, rng), su.global);
  c.honest = false;
  c.attack = {AttackKind::kScaledRandom, 0.0};
  EXPECT_EQ(maybe_attack(su.global, c, rng), su.global);
}

TEST(MaybeAttack, ScaledRandomNormMatchesChiMean) {
  ExperimentConfig cfg = tiny();
  cfg.model = {64, {}, 16, 6};
  cfg.data.k_true = 3;
  auto su = prepare(cfg);
  ClientState c = su.clients[0];
  c.honest = false;
  c.attack = {AttackKind::kScaledRandom, 10.0};
  std::mt19937_64 rng(2);
  const double p = static_cast<double>(su.global.num_scalars());
  const double norm =
      (maybe_attack(su.global, c, rng).flatten() - su.global.flatten()).norm();
  // E||N(0, I_p)|| = sqrt(2) Gamma((p+1)/2) / Gamma(p/2) ~ sqrt(p - 1/2).
  const double expected =
      10.0 * std::sqrt(2.0) *
      std::exp(std::lgamma((p + 1) / 2) - std::lgamma(p / 2));
  EXPECT_NEAR(norm / expected, 1.0, 0.05);
}

TEST(RunRound, SingleHonestClientPassesThrough) {
  for (Aggregator agg :
       {Aggregator::kMean, Aggregator::kGeometricMedian}) {
    ExperimentConfig cfg = tiny();
    cfg.clients = 1;
    cfg.aggregator = agg;
    auto su = prepare(cfg);
    const ClientUpdate expect = client_update(su.clients[0], su.global, cfg, 1);
    ClientPool pool(su.clients, cfg);
    auto tr = make_sequential_transport(pool.handlers(), cfg.dtype);
    RoundResult r = run_round(pool, su.global, cfg, *tr, 1);
    EXPECT_EQ(r.global, expect.upload);
  }
}

TEST(RunRound, GeometricMedianResistsLargeNoise) {
  ExperimentConfig cfg = tiny();
  cfg.clients = 10;
  cfg.byzantine_ids = {3, 7};
  cfg.attack = {AttackKind::kScaledRandom, 1e3};
  auto su = prepare(cfg);

  std::vector<ParamSet> honest;
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    if (!cfg.is_byzantine(i)) {
      honest.push_back(client_update(su.clients[i], su.global, cfg, 1).upload);
    }
  }
  const Eigen::VectorXd ref = agg_mean(honest).flatten();

  auto round_with = [&](Aggregator agg) {
    ExperimentConfig c = cfg;
    c.aggregator = agg;
    ClientPool pool(su.clients, c);
    auto tr = make_sequential_transport(pool.handlers(), c.dtype);
    return run_round(pool, su.global, c, *tr, 1).global.flatten();
  };
  EXPECT_LT((round_with(Aggregator::kGeometricMedian) - ref).norm(),
            (round_with(Aggregator::kMean) - ref).norm());
}

TEST(RunRound, KrumOutputIsAnUpload) {
  ExperimentConfig cfg = tiny();
  cfg.aggregator = Aggregator::kKrum;
  cfg.byzantine_ids = {0};
  cfg.attack = {AttackKind::kScaledRandom, 10.0};
  auto su = prepare(cfg);
  ClientPool pool(su.clients, cfg);
  auto tr = make_sequential_transport(pool.handlers(), cfg.dtype);
  const std::vector<ClientHandler> handlers = pool.handlers();
  RoundResult r = run_round(pool, su.global, cfg, *tr, 1);
  ASSERT_TRUE(r.record.krum_index.has_value());
  EXPECT_NE(*r.record.krum_index, 0u);

  // Replay the selected client's update from the original state.
  ClientPool replay(su.clients, cfg);
  EXPECT_EQ(replay.handlers()[*r.record.krum_index](1, su.global), r.global);
}

TEST(RunTraining, ZeroRoundsReturnsInitialModel) {
  ExperimentConfig cfg = tiny();
  cfg.rounds = 0;
  RunResult r = run_sequential(cfg);
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.global, prepare(cfg).global);
}

TEST(RunTraining, DeterministicPerSeed) {
  ExperimentConfig cfg = tiny();
  cfg.byzantine_ids = {1};
  cfg.attack = {AttackKind::kScaledRandom, 5.0};
  RunResult a = run_sequential(cfg);
  RunResult b = run_sequential(cfg);
  EXPECT_EQ(a.global, b.global);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    EXPECT_EQ(a.records[t].test_acc, b.records[t].test_acc);
    EXPECT_EQ(a.records[t].train_loss, b.records[t].train_loss);
  }
  cfg.seed += 1;
  EXPECT_FALSE(run_sequential(cfg).global == a.global);
}

TEST(RunTraining, SocketTransportMatchesSequentialBitwise) {
  ExperimentConfig cfg = tiny();
  cfg.byzantine_ids = {2};
  cfg.attack = {AttackKind::kScaledRandom, 10.0};
  RunResult s = run_sequential(cfg);
  RunResult p = run_parallel(cfg);
  EXPECT_EQ(s.global, p.global);
  for (std::size_t t = 0; t < s.records.size(); ++t) {
    EXPECT_EQ(s.records[t].test_acc, p.records[t].test_acc);
  }
}

TEST(RunTraining, EveryProtocolRuns) {
  for (Protocol proto : {Protocol::kBrMtrl, Protocol::kFedRep,
                         Protocol::kFedPer, Protocol::kFedAvg,
                         Protocol::kNaive}) {
    ExperimentConfig cfg = tiny();
    cfg.protocol = proto;
    RunResult r = run_sequential(cfg);
    ASSERT_EQ(r.records.size(), cfg.rounds) << protocol_name(proto);
    EXPECT_GT(r.records.back().mean_benign_acc, 0.0) << protocol_name(proto);
    EXPECT_EQ(final_representation(r, cfg).num_scalars(LayerTag::kHead), 0u);
  }
}

TEST(RunTraining, MislabelersTrainOnShiftedLabels) {
  ExperimentConfig cfg = tiny();
  cfg.byzantine_ids = {4};
  cfg.attack = {AttackKind::kMislabel};
  auto su = prepare(cfg);
  ExperimentConfig clean = cfg;
  clean.byzantine_ids.clear();
  auto ref = prepare(clean);
  EXPECT_EQ(su.clients[4].shard.train.labels,
            attack_ml(ref.clients[4].shard.train.labels, 6,
                      MislabelMode::kCyclicShift));
  EXPECT_EQ(su.clients[4].shard.test.labels, ref.clients[4].shard.test.labels);
  EXPECT_EQ(su.clients[3].shard.train.labels, ref.clients[3].shard.train.labels);
}

TEST(Evaluate, BenignOnlySkipsByzantine) {
  ExperimentConfig cfg = tiny();
  cfg.byzantine_ids = {0, 5};
  auto su = prepare(cfg);
  Evaluation b = evaluate(su.clients, su.global, cfg, EvalScope::kBenignOnly);
  Evaluation a = evaluate(su.clients, su.global, cfg, EvalScope::kAll);
  EXPECT_EQ(b.client_ids, (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(a.client_ids.size(), 6u);
}

TEST(MetaTest, ZeroEpochsIsNearChance) {
  ExperimentConfig cfg = tiny();
  cfg.meta.clients = 20;
  auto su = prepare(cfg);
  auto shards = make_meta_shards(cfg, su.dataset, su.clients);
  MetaResult m = meta_test(su.global, shards, 0, cfg);
  // A random head on 2-class shards scores around 1/2 of the time at best;
  // averaged over 20 clients it stays far from perfect.
  EXPECT_LT(m.transferred_mean, 0.75);
}

TEST(MetaTest, PlantedRepresentationBeatsNaive) {
  ExperimentConfig cfg = tiny();
  cfg.model = {32, {}, 3, 6};
  cfg.meta.clients = 10;
  auto su = prepare(cfg);
  auto shards = make_meta_shards(cfg, su.dataset, su.clients);
  const ParamSet planted = planted_representation(*su.dataset.task);
  const ParamSet before = planted;
  MetaResult m = meta_test(planted, shards, 10, cfg);
  EXPECT_GE(m.transferred_mean, m.naive_mean);
  EXPECT_EQ(planted, before);
  ASSERT_EQ(m.transferred.size(), 10u);
}

TEST(MetaTest, ShardsAreFreshClients) {
  ExperimentConfig cfg = tiny();
  auto su = prepare(cfg);
  auto shards = make_meta_shards(cfg, su.dataset, su.clients);
  ASSERT_EQ(shards.size(), cfg.meta.clients);
  for (const Shard& s : shards) {
    EXPECT_EQ(s.train.size(), cfg.data.classes_per_client * cfg.meta.per_class);
    EXPECT_EQ(s.test.size(),
              cfg.data.classes_per_client * cfg.meta.test_per_class);
  }
}

TEST(Config, ValidationNamesTheField) {
  ExperimentConfig cfg = tiny();
  cfg.byzantine_ids = {9};
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("byzantine_ids", 0), 0u);
  }
  cfg = tiny();
  cfg.aggregator = Aggregator::kKrum;
  cfg.byzantine_ids = {0, 1, 2, 3};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PickByzantineIds, SeededSortedDistinct) {
  auto ids = pick_byzantine_ids(20, 4, 1);
  EXPECT_EQ(ids, pick_byzantine_ids(20, 4, 1));
  EXPECT_EQ(ids.size(), 4u);
  EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
  EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());
  EXPECT_THROW(pick_byzantine_ids(3, 4, 1), ConfigError);
}

}  // namespace
}  // namespace byzfed
