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

#ifndef BYZFED_ENGINE_H_
#define BYZFED_ENGINE_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "byzfed/aggregate.h"
#include "byzfed/byzantine.h"
#include "byzfed/data.h"
#include "byzfed/model.h"
#include "byzfed/net.h"
#include "byzfed/optim.h"

namespace byzfed {

// br-mtrl and fedrep share the alternating head/representation schedule and
// differ only in the aggregator they are normally paired with.
enum class Protocol { kBrMtrl, kFedRep, kFedPer, kFedAvg, kNaive };

const char* protocol_name(Protocol p);
Protocol parse_protocol(const std::string& name);

struct DataConfig {
  std::size_t k_true = 10;
  std::size_t samples = 8000;
  double noise_std = 0.1;
  std::size_t classes_per_client = 2;
  std::size_t per_class = 100;
  double test_fraction = 0.2;
  std::string bfd_path;  // empty = synthetic

  bool operator==(const DataConfig&) const = default;
};

struct MetaConfig {
  std::size_t clients = 5;
  std::size_t per_class = 20;       // training rows per class
  std::size_t test_per_class = 50;  // held-out rows per class
  std::size_t epochs = 10;
  std::size_t samples = 2000;

  bool operator==(const MetaConfig&) const = default;
};

struct ExperimentConfig {
  Protocol protocol = Protocol::kBrMtrl;
  Aggregator aggregator = Aggregator::kGeometricMedian;
  std::size_t clients = 20;
  std::vector<std::size_t> byzantine_ids;
  AttackSpec attack;
  std::size_t rounds = 30;
  std::size_t tau_h = 10;
  std::size_t tau_phi = 1;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 10;
  ModelSpec model{64, {}, 10, 20};
  DataConfig data;
  GmOptions gm;
  MetaConfig meta;
  std::uint64_t seed = 1;
  WireDtype dtype = WireDtype::kF32;
  double participation = 1.0;
  double simulated_compute_ms = 0.0;
  bool record_timings = false;

  // Throws ConfigError naming the offending field.
  void validate() const;
  bool is_byzantine(std::size_t client) const;
  // Epochs per round for protocols that train all layers jointly.
  std::size_t joint_epochs() const { return tau_h + tau_phi; }

  bool operator==(const ExperimentConfig&) const = default;
};

// Sorted sample of `count` distinct client ids drawn from the master seed.
std::vector<std::size_t> pick_byzantine_ids(std::size_t clients,
                                            std::size_t count,
                                            std::uint64_t seed);

struct ClientState {
  Shard shard;
  ParamSet head;
  Optimizer opt;  // shaped like the full model
  bool honest = true;
  AttackSpec attack;
  std::optional<ParamSet> private_model;  // naive protocol only
  double last_train_loss = 0.0;
};

struct RoundRecord {
  std::uint32_t round = 0;
  std::vector<double> train_loss;  // per client
  std::vector<double> test_acc;    // per client
  std::vector<bool> benign;
  double mean_benign_acc = 0.0;
  double agg_ms = 0.0;
  PhaseTimings timings;
  std::optional<std::size_t> krum_index;
  bool gm_converged = true;
};

struct ClientUpdate {
  ClientState state;
  ParamSet upload;  // before any attack
};

// Local work for one round. `global` is the representation (or the full
// model for fedavg, ignored for naive).
ClientUpdate client_update(const ClientState& state, const ParamSet& global,
                           const ExperimentConfig& cfg, std::uint32_t round);

ParamSet maybe_attack(const ParamSet& local, const ClientState& state,
                      std::mt19937_64& rng);

std::mt19937_64 attack_rng(const ExperimentConfig& cfg, std::size_t client,
                           std::uint32_t round);

enum class EvalScope { kBenignOnly, kAll };

struct Evaluation {
  std::vector<std::size_t> client_ids;
  std::vector<double> accuracy;
  double mean = 0.0;
};

// The model client i is scored with under the configured protocol.
ParamSet client_model(const ClientState& state, const ParamSet& global,
                      const ExperimentConfig& cfg);

Evaluation evaluate(const std::vector<ClientState>& clients,
                    const ParamSet& global, const ExperimentConfig& cfg,
                    EvalScope scope);

// Everything a run needs before round 1.
struct Setup {
  Dataset dataset;
  std::vector<ClientState> clients;
  ParamSet global;  // phi^0, shared-tagged (full model for fedavg)
};

Setup prepare(const ExperimentConfig& cfg);

// Owns the client states and hands out transport callbacks bound to them.
// Each client is guarded by its own mutex so transports may run clients on
// other threads.
class ClientPool {
 public:
  ClientPool(std::vector<ClientState> clients, const ExperimentConfig& cfg);

  std::vector<ClientHandler> handlers();
  std::vector<ClientState> snapshot() const;
  std::size_t size() const { return slots_.size(); }

 private:
  struct Slot {
    mutable std::mutex mu;
    ClientState state;
  };
  ParamSet handle(std::size_t i, std::uint32_t round, const ParamSet& global);

  ExperimentConfig cfg_;
  std::vector<std::unique_ptr<Slot>> slots_;
};

struct RoundResult {
  ParamSet global;
  RoundRecord record;
};

// One synchronous round: broadcast, gather all n uploads, aggregate,
// evaluate.
RoundResult run_round(ClientPool& pool, const ParamSet& global,
                      const ExperimentConfig& cfg, Transport& transport,
                      std::uint32_t round);

enum class TransportMode { kSequential, kParallel };

struct RunResult {
  std::vector<RoundRecord> records;
  ParamSet global;
  std::vector<ClientState> clients;
  Dataset dataset;
};

RunResult run_training(const ExperimentConfig& cfg,
                       TransportMode mode = TransportMode::kSequential);
RunResult run_sequential(const ExperimentConfig& cfg);
RunResult run_parallel(const ExperimentConfig& cfg);

// Representation part of a run's final global model.
ParamSet final_representation(const RunResult& run, const ExperimentConfig& cfg);

struct MetaResult {
  std::vector<double> transferred;
  std::vector<double> naive;
  double transferred_mean = 0.0;
  double naive_mean = 0.0;
};

// Fresh honest clients for the transfer test, disjoint from training rows.
std::vector<Shard> make_meta_shards(const ExperimentConfig& cfg,
                                    const Dataset& training_data,
                                    const std::vector<ClientState>& trained);

// Fine-tunes a fresh head per shard for `epochs` head-only epochs on top of
// the frozen representation; the naive baseline trains a fresh full model
// for the same number of epochs.
MetaResult meta_test(const ParamSet& representation,
                     const std::vector<Shard>& shards, std::size_t epochs,
                     const ExperimentConfig& cfg);

}  // namespace byzfed

#endif  // BYZFED_ENGINE_H_
