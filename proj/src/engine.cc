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

#include "byzfed/engine.h"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>
#include <thread>

#include "byzfed/errors.h"
#include "byzfed/seed.h"

namespace byzfed {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kHeadLayers = 1;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}


// One pass over the shard, stepping only `tag` layers (all if empty).
void train_epoch(ParamSet& params, Optimizer& opt, const Shard& shard,
                 std::size_t batch_size, std::uint64_t epoch_seed,
                 std::optional<LayerTag> tag) {
  for (const Batch& b : minibatches(shard, batch_size, epoch_seed)) {
    const LossGrad lg = forward_loss_grad(params, b);
    step_in_place(params, lg.grads, opt, tag);
  }
}

double accuracy(const ParamSet& model, const Batch& test,
                std::size_t client_id) {
  if (test.size() == 0) {
    throw DataError("client " + std::to_string(client_id) +
                    " has an empty test slice");
  }
  return static_cast<double>(count_correct(model, test)) /
         static_cast<double>(test.size());
}

}  // namespace

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kBrMtrl:
      return "br-mtrl";
    case Protocol::kFedRep:
      return "fedrep";
    case Protocol::kFedPer:
      return "fedper";
    case Protocol::kFedAvg:
      return "fedavg";
    case Protocol::kNaive:
      return "naive";
  }
  return "br-mtrl";
}

Protocol parse_protocol(const std::string& name) {
  for (Protocol p : {Protocol::kBrMtrl, Protocol::kFedRep, Protocol::kFedPer,
                     Protocol::kFedAvg, Protocol::kNaive}) {
    if (name == protocol_name(p)) return p;
  }
  throw ConfigError("unknown protocol '" + name +
                    "' (br-mtrl|fedrep|fedper|fedavg|naive)");
}

void ExperimentConfig::validate() const {
  if (clients == 0) throw ConfigError("clients: must be >= 1");
  std::set<std::size_t> seen;
  for (std::size_t id : byzantine_ids) {
    if (id >= clients) {
      throw ConfigError("byzantine_ids: id " + std::to_string(id) +
                        " outside [0, " + std::to_string(clients) + ")");
    }
    if (!seen.insert(id).second) {
      throw ConfigError("byzantine_ids: duplicate id " + std::to_string(id));
    }
  }
  if (aggregator == Aggregator::kKrum &&
      clients < byzantine_ids.size() + 3) {
    throw ConfigError("aggregator: krum needs clients >= byzantine count + 3");
  }
  if (!(lr > 0.0)) throw ConfigError("lr: must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum: must lie in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("batch_size: must be >= 1");
  if (model.input_dim == 0 || model.rep_dim == 0 || model.num_classes < 2) {
    throw ConfigError("model: dimensions must be >= 1 and num_classes >= 2");
  }
  for (std::size_t h : model.hidden_dims) {
    if (h == 0) throw ConfigError("model.hidden_dims: widths must be >= 1");
  }
  if (!(attack.sigma >= 0.0)) throw ConfigError("attack.sigma: must be >= 0");
  if (data.classes_per_client == 0 ||
      data.classes_per_client > model.num_classes) {
    throw ConfigError("data.classes_per_client: must lie in [1, num_classes]");
  }
  if (data.per_class == 0) throw ConfigError("data.per_class: must be >= 1");
  if (!(data.test_fraction >= 0.0 && data.test_fraction < 1.0)) {
    throw ConfigError("data.test_fraction: must lie in [0, 1)");
  }
  if (data.bfd_path.empty()) {
    if (data.k_true == 0 || data.k_true > model.input_dim) {
      throw ConfigError("data.k_true: must lie in [1, model.input_dim]");
    }
    if (data.samples == 0) throw ConfigError("data.samples: must be >= 1");
    if (!(data.noise_std >= 0.0)) {
      throw ConfigError("data.noise_std: must be >= 0");
    }
  }
  if (!(gm.tol > 0.0)) throw ConfigError("gm.tol: must be > 0");
  if (gm.max_iter == 0) throw ConfigError("gm.max_iter: must be >= 1");
  if (!(gm.eps > 0.0)) throw ConfigError("gm.eps: must be > 0");
  if (meta.clients == 0) throw ConfigError("meta.clients: must be >= 1");
  if (meta.per_class == 0) throw ConfigError("meta.per_class: must be >= 1");
  if (meta.test_per_class == 0) {
    throw ConfigError("meta.test_per_class: must be >= 1");
  }
  if (participation != 1.0) {
    throw ConfigError("participation: only full participation (1.0) is "
                      "supported");
  }
  if (!(simulated_compute_ms >= 0.0)) {
    throw ConfigError("simulated_compute_ms: must be >= 0");
  }
}

bool ExperimentConfig::is_byzantine(std::size_t client) const {
  return std::find(byzantine_ids.begin(), byzantine_ids.end(), client) !=
         byzantine_ids.end();
}

std::vector<std::size_t> pick_byzantine_ids(std::size_t clients,
                                            std::size_t count,
                                            std::uint64_t seed) {
  if (count > clients) {
    throw ConfigError("byzantine: count " + std::to_string(count) +
                      " exceeds clients " + std::to_string(clients));
  }
  std::vector<std::size_t> ids(clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, {kStreamByzantineIds}));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ClientUpdate client_update(const ClientState& state, const ParamSet& global,
                           const ExperimentConfig& cfg, std::uint32_t round) {
  ClientUpdate out{state, {}};
  ClientState& s = out.state;
  const std::size_t id = s.shard.client_id;
  auto epoch_seed = [&](std::uint64_t phase, std::size_t e) {
    return derive_seed(cfg.seed, {kStreamEpoch, id, round, phase, e});
  };

  ParamSet params;
  switch (cfg.protocol) {
    case Protocol::kBrMtrl:
    case Protocol::kFedRep: {
      // Head phase on the received representation, then representation
      // phase from a fresh copy of it with the new head frozen.
      params = join(global, s.head);
      for (std::size_t e = 0; e < cfg.tau_h; ++e) {
        train_epoch(params, s.opt, s.shard, cfg.batch_size, epoch_seed(0, e),
                    LayerTag::kHead);
      }
      s.opt.reset(LayerTag::kShared);
      for (std::size_t e = 0; e < cfg.tau_phi; ++e) {
        train_epoch(params, s.opt, s.shard, cfg.batch_size, epoch_seed(1, e),
                    LayerTag::kShared);
      }
      s.opt.reset(LayerTag::kShared);
      SplitParams parts = split(params);
      s.head = std::move(parts.head);
      out.upload = std::move(parts.shared);
      break;
    }
    case Protocol::kFedPer: {
      params = join(global, s.head);
      s.opt.reset(LayerTag::kShared);
      for (std::size_t e = 0; e < cfg.joint_epochs(); ++e) {
        train_epoch(params, s.opt, s.shard, cfg.batch_size, epoch_seed(2, e),
                    std::nullopt);
      }
      s.opt.reset(LayerTag::kShared);
      SplitParams parts = split(params);
      s.head = std::move(parts.head);
      out.upload = std::move(parts.shared);
      break;
    }
    case Protocol::kFedAvg: {
      params = global.with_head_suffix(kHeadLayers);
      s.opt.reset(LayerTag::kShared);
      s.opt.reset(LayerTag::kHead);
      for (std::size_t e = 0; e < cfg.joint_epochs(); ++e) {
        train_epoch(params, s.opt, s.shard, cfg.batch_size, epoch_seed(2, e),
                    std::nullopt);
      }
      s.opt.reset(LayerTag::kShared);
      s.opt.reset(LayerTag::kHead);
      s.head = split(params).head;
      out.upload = params.retagged(LayerTag::kShared);
      break;
    }
    case Protocol::kNaive: {
      if (!s.private_model) {
        throw ContractError("naive client without a private model");
      }
      params = *s.private_model;
      for (std::size_t e = 0; e < cfg.joint_epochs(); ++e) {
        train_epoch(params, s.opt, s.shard, cfg.batch_size, epoch_seed(2, e),
                    std::nullopt);
      }
      s.private_model = params;
      SplitParams parts = split(params);
      s.head = std::move(parts.head);
      out.upload = std::move(parts.shared);
      break;
    }
  }
  params.validate();
  s.last_train_loss = forward_loss_grad(params, s.shard.train).loss;
  return out;
}

std::mt19937_64 attack_rng(const ExperimentConfig& cfg, std::size_t client,
                           std::uint32_t round) {
  return std::mt19937_64(derive_seed(
      cfg.seed, {kStreamAttack, cfg.attack.seed, client, round}));
}

ParamSet maybe_attack(const ParamSet& local, const ClientState& state,
                      std::mt19937_64& rng) {
  if (state.honest || state.attack.kind != AttackKind::kScaledRandom) {
    return local;
  }
  return attack_sr(local, state.attack.sigma, rng);
}

ParamSet client_model(const ClientState& state, const ParamSet& global,
                      const ExperimentConfig& cfg) {
  switch (cfg.protocol) {
    case Protocol::kFedAvg:
      return global.with_head_suffix(kHeadLayers);
    case Protocol::kNaive:
      if (!state.private_model) {
        throw ContractError("naive client without a private model");
      }
      return *state.private_model;
    default:
      return join(global, state.head);
  }
}

Evaluation evaluate(const std::vector<ClientState>& clients,
                    const ParamSet& global, const ExperimentConfig& cfg,
                    EvalScope scope) {
  Evaluation ev;
  double total = 0.0;
  for (const ClientState& c : clients) {
    if (scope == EvalScope::kBenignOnly && !c.honest) continue;
    const double acc =
        accuracy(client_model(c, global, cfg), c.shard.test, c.shard.client_id);
    ev.client_ids.push_back(c.shard.client_id);
    ev.accuracy.push_back(acc);
    total += acc;
  }
  if (!ev.accuracy.empty()) {
    ev.mean = total / static_cast<double>(ev.accuracy.size());
  }
  return ev;
}

Setup prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  Setup su;
  if (cfg.data.bfd_path.empty()) {
    su.dataset = generate_synthetic(cfg.model.input_dim, cfg.data.k_true,
                                    cfg.model.num_classes, cfg.data.samples,
                                    cfg.data.noise_std,
                                    derive_seed(cfg.seed, {kStreamData}));
  } else {
    su.dataset = load_bfd(cfg.data.bfd_path);
    if (su.dataset.input_dim() != cfg.model.input_dim ||
        su.dataset.num_classes != cfg.model.num_classes) {
      throw ConfigError("data.bfd_path: dataset is " +
                        std::to_string(su.dataset.input_dim()) + "-d with " +
                        std::to_string(su.dataset.num_classes) +
                        " classes, model expects " +
                        std::to_string(cfg.model.input_dim) + "-d with " +
                        std::to_string(cfg.model.num_classes));
    }
  }
  std::vector<Shard> shards = partition_pathological(
      su.dataset, cfg.clients, cfg.data.classes_per_client, cfg.data.per_class,
      cfg.data.test_fraction, derive_seed(cfg.seed, {kStreamPartition}));

  const ParamSet initial =
      build_model(cfg.model, derive_seed(cfg.seed, {kStreamModel}));
  const SplitParams parts = split(initial);
  su.global = cfg.protocol == Protocol::kFedAvg
                  ? initial.retagged(LayerTag::kShared)
                  : parts.shared;

  su.clients.reserve(cfg.clients);
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    ClientState c;
    c.shard = std::move(shards[i]);
    c.head = build_head(cfg.model.rep_dim, cfg.model.num_classes,
                        derive_seed(cfg.seed, {kStreamHead, i}));
    const ParamSet full = join(parts.shared, c.head);
    c.opt = Optimizer::for_params(full, cfg.lr, cfg.momentum);
    c.honest = !cfg.is_byzantine(i);
    if (!c.honest) {
      c.attack = cfg.attack;
      if (c.attack.kind == AttackKind::kMislabel) {
        c.shard.train.labels = attack_ml(c.shard.train.labels,
                                         cfg.model.num_classes, c.attack.mode);
      }
    }
    if (cfg.protocol == Protocol::kNaive) c.private_model = full;
    su.clients.push_back(std::move(c));
  }
  return su;
}

ClientPool::ClientPool(std::vector<ClientState> clients,
                       const ExperimentConfig& cfg)
    : cfg_(cfg) {
  slots_.reserve(clients.size());
  for (ClientState& c : clients) {
    auto slot = std::make_unique<Slot>();
    slot->state = std::move(c);
    slots_.push_back(std::move(slot));
  }
}

std::vector<ClientHandler> ClientPool::handlers() {
  std::vector<ClientHandler> hs;
  hs.reserve(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    hs.emplace_back([this, i](std::uint32_t round, const ParamSet& global) {
      return handle(i, round, global);
    });
  }
  return hs;
}

ParamSet ClientPool::handle(std::size_t i, std::uint32_t round,
                            const ParamSet& global) {
  ParamSet upload;
  {
    Slot& slot = *slots_[i];
    std::lock_guard<std::mutex> lock(slot.mu);
    ClientUpdate u = client_update(slot.state, global, cfg_, round);
    slot.state = std::move(u.state);
    std::mt19937_64 rng = attack_rng(cfg_, i, round);
    upload = maybe_attack(u.upload, slot.state, rng);
  }
  if (cfg_.simulated_compute_ms > 0.0) {
    std::this_thread::sleep_for(
        std::chrono::duration<double, std::milli>(cfg_.simulated_compute_ms));
  }
  return upload;
}

std::vector<ClientState> ClientPool::snapshot() const {
  std::vector<ClientState> out;
  out.reserve(slots_.size());
  for (const auto& slot : slots_) {
    std::lock_guard<std::mutex> lock(slot->mu);
    out.push_back(slot->state);
  }
  return out;
}

namespace {

RoundRecord record_round(std::uint32_t round,
                         const std::vector<ClientState>& clients,
                         const ParamSet& global, const ExperimentConfig& cfg) {
  RoundRecord rec;
  rec.round = round;
  const Evaluation all = evaluate(clients, global, cfg, EvalScope::kAll);
  double benign_total = 0.0;
  std::size_t benign_count = 0;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    rec.train_loss.push_back(clients[i].last_train_loss);
    rec.test_acc.push_back(all.accuracy[i]);
    rec.benign.push_back(clients[i].honest);
    if (clients[i].honest) {
      benign_total += all.accuracy[i];
      ++benign_count;
    }
  }
  if (benign_count > 0) {
    rec.mean_benign_acc = benign_total / static_cast<double>(benign_count);
  }
  return rec;
}

}  // namespace

RoundResult run_round(ClientPool& pool, const ParamSet& global,
                      const ExperimentConfig& cfg, Transport& transport,
                      std::uint32_t round) {
  const auto t0 = Clock::now();
  Gathered g = transport.exchange(round, global);
  if (g.updates.size() != pool.size()) {
    throw TransportError("gathered " + std::to_string(g.updates.size()) +
                         " updates from " + std::to_string(pool.size()) +
                         " clients");
  }

  const auto t_agg = Clock::now();
  RoundResult out;
  std::optional<std::size_t> krum_index;
  bool converged = true;
  switch (cfg.aggregator) {
    case Aggregator::kMean:
      out.global = agg_mean(g.updates);
      break;
    case Aggregator::kGeometricMedian: {
      GmResult gm = agg_gm(g.updates, cfg.gm);
      converged = gm.converged;
      out.global = std::move(gm.median);
      break;
    }
    case Aggregator::kKrum: {
      KrumResult k = agg_krum(g.updates, cfg.byzantine_ids.size());
      krum_index = k.index;
      out.global = std::move(k.update);
      break;
    }
  }
  const double agg_ms = ms_since(t_agg);
  PhaseTimings timings = g.timings;
  timings.aggregate_ms = agg_ms;
  timings.round_total_ms = ms_since(t0);

  out.record = record_round(round, pool.snapshot(), out.global, cfg);
  out.record.agg_ms = agg_ms;
  out.record.timings = timings;
  out.record.krum_index = krum_index;
  out.record.gm_converged = converged;
  return out;
}

RunResult run_training(const ExperimentConfig& cfg, TransportMode mode) {
  Setup su = prepare(cfg);
  RunResult result;
  result.global = std::move(su.global);
  result.dataset = std::move(su.dataset);

  if (cfg.protocol == Protocol::kNaive) {
    // No communication: every client trains its private model alone.
    std::vector<ClientState> clients = std::move(su.clients);
    for (std::uint32_t t = 1; t <= cfg.rounds; ++t) {
      const auto t0 = Clock::now();
      for (ClientState& c : clients) {
        c = client_update(c, result.global, cfg, t).state;
      }
      RoundRecord rec = record_round(t, clients, result.global, cfg);
      rec.timings.client_compute_ms = ms_since(t0);
      rec.timings.round_total_ms = rec.timings.client_compute_ms;
      result.records.push_back(std::move(rec));
    }
    result.clients = std::move(clients);
    return result;
  }

  ClientPool pool(std::move(su.clients), cfg);
  std::unique_ptr<Transport> transport =
      mode == TransportMode::kSequential
          ? make_sequential_transport(pool.handlers(), cfg.dtype)
          : make_socket_transport(pool.handlers(), cfg.dtype, port_from_env());
  for (std::uint32_t t = 1; t <= cfg.rounds; ++t) {
    RoundResult r = run_round(pool, result.global, cfg, *transport, t);
    result.global = std::move(r.global);
    result.records.push_back(std::move(r.record));
  }
  transport->shutdown();
  result.clients = pool.snapshot();
  return result;
}

RunResult run_sequential(const ExperimentConfig& cfg) {
  return run_training(cfg, TransportMode::kSequential);
}

RunResult run_parallel(const ExperimentConfig& cfg) {
  return run_training(cfg, TransportMode::kParallel);
}

ParamSet final_representation(const RunResult& run,
                              const ExperimentConfig& cfg) {
  if (cfg.protocol == Protocol::kFedAvg) {
    return split(run.global.with_head_suffix(kHeadLayers)).shared;
  }
  return run.global;
}

std::vector<Shard> make_meta_shards(const ExperimentConfig& cfg,
                                    const Dataset& training_data,
                                    const std::vector<ClientState>& trained) {
  const std::uint64_t seed = derive_seed(cfg.seed, {kStreamMeta, 1});
  const std::size_t per_class = cfg.meta.per_class + cfg.meta.test_per_class;
  const double test_fraction = static_cast<double>(cfg.meta.test_per_class) /
                               static_cast<double>(per_class);
  if (training_data.task) {
    const Dataset fresh =
        draw(*training_data.task, cfg.meta.samples,
             derive_seed(cfg.seed, {kStreamMeta, 0}));
    return partition_pathological(fresh, cfg.meta.clients,
                                  cfg.data.classes_per_client, per_class,
                                  test_fraction, seed);
  }
  // Imported data: draw new clients from rows no training client holds.
  std::vector<bool> used(training_data.size(), false);
  for (const ClientState& c : trained) {
    for (std::size_t r : c.shard.train_rows) used[r] = true;
    for (std::size_t r : c.shard.test_rows) used[r] = true;
  }
  Dataset rest;
  rest.num_classes = training_data.num_classes;
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < used.size(); ++r) {
    if (!used[r]) keep.push_back(r);
  }
  rest.inputs.resize(static_cast<Eigen::Index>(keep.size()),
                     training_data.inputs.cols());
  rest.class_index.assign(rest.num_classes, {});
  for (std::size_t k = 0; k < keep.size(); ++k) {
    rest.inputs.row(static_cast<Eigen::Index>(k)) =
        training_data.inputs.row(static_cast<Eigen::Index>(keep[k]));
    const int y = training_data.labels[keep[k]];
    rest.labels.push_back(y);
    rest.class_index[static_cast<std::size_t>(y)].push_back(k);
  }
  return partition_pathological(rest, cfg.meta.clients,
                                cfg.data.classes_per_client, per_class,
                                test_fraction, seed);
}

MetaResult meta_test(const ParamSet& representation,
                     const std::vector<Shard>& shards, std::size_t epochs,
                     const ExperimentConfig& cfg) {
  if (representation.empty() ||
      representation.num_scalars(LayerTag::kHead) != 0) {
    throw ContractError("meta_test needs a shared-only representation");
  }
  MetaResult res;
  for (std::size_t j = 0; j < shards.size(); ++j) {
    const Shard& shard = shards[j];
    auto epoch_seed = [&](std::size_t e) {
      return derive_seed(cfg.seed, {kStreamMeta, 3, j, e});
    };

    ParamSet params = join(
        representation,
        build_head(representation.output_dim(), cfg.model.num_classes,
                   derive_seed(cfg.seed, {kStreamMeta, 2, j})));
    Optimizer opt = Optimizer::for_params(params, cfg.lr, cfg.momentum);
    for (std::size_t e = 0; e < epochs; ++e) {
      train_epoch(params, opt, shard, cfg.batch_size, epoch_seed(e),
                  LayerTag::kHead);
    }
    res.transferred.push_back(accuracy(params, shard.test, j));

    ModelSpec spec = cfg.model;
    spec.input_dim = static_cast<std::size_t>(shard.train.inputs.cols());
    ParamSet solo = build_model(spec, derive_seed(cfg.seed, {kStreamMeta, 4, j}));
    Optimizer solo_opt = Optimizer::for_params(solo, cfg.lr, cfg.momentum);
    for (std::size_t e = 0; e < epochs; ++e) {
      train_epoch(solo, solo_opt, shard, cfg.batch_size, epoch_seed(e),
                  std::nullopt);
    }
    res.naive.push_back(accuracy(solo, shard.test, j));
  }
  if (!shards.empty()) {
    const auto n = static_cast<double>(shards.size());
    res.transferred_mean =
        std::accumulate(res.transferred.begin(), res.transferred.end(), 0.0) / n;
    res.naive_mean =
        std::accumulate(res.naive.begin(), res.naive.end(), 0.0) / n;
  }
  return res;
}

}  // namespace byzfed
