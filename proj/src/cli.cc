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


#include "byzfed/cli.h"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "byzfed/bytes.h"
#include "byzfed/config.h"
#include "byzfed/engine.h"
#include "byzfed/errors.h"
#include "byzfed/net.h"

namespace byzfed {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown for problems with the user's input; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Flags shared by every subcommand. Unset optionals leave the config file's
// value alone.
struct CommonFlags {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dtype;
  std::optional<std::string> protocol;
  std::optional<std::string> aggregator;
  std::optional<std::size_t> clients;
  std::optional<std::size_t> byzantine;
  std::optional<std::string> attack;
  std::optional<double> sigma;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> tau_h;
  std::optional<std::size_t> tau_phi;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<double> compute_ms;
  bool timings = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config (JSON)");
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--dtype", f.dtype, "wire dtype: f32|f64");
  cmd->add_option("--protocol", f.protocol,
                  "br-mtrl|fedrep|fedper|fedavg|naive");
  cmd->add_option("--aggregator", f.aggregator, "mean|gm|krum");
  cmd->add_option("--clients", f.clients, "number of clients");
  cmd->add_option("--byzantine", f.byzantine,
                  "number of Byzantine clients (ids sampled from the seed)");
  cmd->add_option("--attack", f.attack, "none|sr|ml");
  cmd->add_option("--sigma", f.sigma, "scaled-random noise level");
  cmd->add_option("--rounds", f.rounds, "communication rounds");
  cmd->add_option("--tau-h", f.tau_h, "head epochs per round");
  cmd->add_option("--tau-phi", f.tau_phi, "representation epochs per round");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--batch-size", f.batch_size, "minibatch size");
  cmd->add_option("--compute-ms", f.compute_ms,
                  "extra per-client compute time per round (ms)");
  cmd->add_flag("--timings", f.timings,
                "record wall-clock aggregation time in summary.csv");
}

ExperimentConfig resolve(const CommonFlags& f) {
  json j = json::object();
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) {
      throw UsageError("config: no such file " + f.config);
    }
    j = load_config_json(f.config);
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  }
  if (f.seed) j["seed"] = *f.seed;
  if (f.dtype) j["dtype"] = *f.dtype;
  if (f.protocol) j["protocol"] = *f.protocol;
  if (f.aggregator) j["aggregator"] = *f.aggregator;
  if (f.clients) j["clients"] = *f.clients;
  if (f.byzantine) {
    j.erase("byzantine_ids");
    j["byzantine"] = *f.byzantine;
  }
  if (f.attack || f.sigma) {
    if (!j.contains("attack")) j["attack"] = json::object();
    if (f.attack) j["attack"]["kind"] = *f.attack;
    if (f.sigma) j["attack"]["sigma"] = *f.sigma;
  }
  if (f.rounds) j["rounds"] = *f.rounds;
  if (f.tau_h) j["tau_h"] = *f.tau_h;
  if (f.tau_phi) j["tau_phi"] = *f.tau_phi;
  if (f.lr) j["lr"] = *f.lr;
  if (f.batch_size) j["batch_size"] = *f.batch_size;
  if (f.compute_ms) j["simulated_compute_ms"] = *f.compute_ms;
  if (f.timings) j["record_timings"] = true;
  return config_from_json(j);
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error("cannot create output directory " + out + ": " +
                ec.message());
  }
  return dir;
}

std::string rounds_csv(const RunResult& run) {
  std::string s = "round,client_id,benign,train_loss,test_acc\n";
  for (const RoundRecord& r : run.records) {
    for (std::size_t i = 0; i < r.test_acc.size(); ++i) {
      s += std::to_string(r.round) + ',' + std::to_string(i) + ',' +
           (r.benign[i] ? "1" : "0") + ',' + fmt_num(r.train_loss[i]) + ',' +
           fmt_num(r.test_acc[i]) + '\n';
    }
  }
  return s;
}

// agg_ms is wall-clock time, so it is only written when asked for; otherwise
// summary.csv would differ between identical runs.
std::string summary_csv(const RunResult& run, bool with_timings) {
  std::string s = "round,mean_benign_acc,agg_ms\n";
  for (const RoundRecord& r : run.records) {
    s += std::to_string(r.round) + ',' + fmt_num(r.mean_benign_acc) + ',' +
         fmt_num(with_timings ? r.agg_ms : 0.0) + '\n';
  }
  return s;
}

int cmd_train(const CommonFlags& flags, const std::string& transport) {
  const ExperimentConfig cfg = resolve(flags);
  if (transport != "sequential" && transport != "socket") {
    throw UsageError("transport: expected sequential|socket");
  }
  const fs::path dir = prepare_out(flags.out);
  const std::string started = utc_now();
  std::cerr << "training " << protocol_name(cfg.protocol) << '+'
            << aggregator_name(cfg.aggregator) << ", " << cfg.clients
            << " clients (" << cfg.byzantine_ids.size() << " byzantine, attack "
            << attack_name(cfg.attack.kind) << "), " << cfg.rounds
            << " rounds\n";
  const RunResult run = run_training(
      cfg, transport == "socket" ? TransportMode::kParallel
                                 : TransportMode::kSequential);

  write_file_atomic(dir / "rounds.csv", rounds_csv(run));
  write_file_atomic(dir / "summary.csv", summary_csv(run, cfg.record_timings));
  const ParamSet phi = final_representation(run, cfg);
  Message msg{MessageKind::kBroadcast, static_cast<std::uint32_t>(cfg.rounds),
              0, WireDtype::kF64, phi};
  write_file_atomic(dir / "phi.bin", encode(msg));

  std::size_t unconverged = 0;
  json krum = json::array();
  for (const RoundRecord& r : run.records) {
    if (!r.gm_converged) ++unconverged;
    if (r.krum_index) krum.push_back(*r.krum_index);
  }
  const double final_acc =
      run.records.empty() ? 0.0 : run.records.back().mean_benign_acc;
  json manifest = {
      {"version", kVersion},
      {"command", "train"},
      {"transport", transport},
      {"config", config_to_json(cfg)},
      {"started_at", started},
      {"finished_at", utc_now()},
      {"outputs", {"rounds.csv", "summary.csv", "phi.bin"}},
      {"final", {{"mean_benign_acc", final_acc},
                 {"gm_unconverged_rounds", unconverged}}},
  };
  if (!krum.empty()) manifest["final"]["krum_selected"] = krum;
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "final mean benign accuracy " << fmt_num(final_acc) << '\n';
  return 0;
}

ParamSet read_phi(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("phi: no such file " + path);
  try {
    Message msg = decode(read_file(path));
    if (msg.kind != MessageKind::kBroadcast) {
      throw ProtocolError("not a representation frame");
    }
    return std::move(msg.payload);
  } catch (const ProtocolError& e) {
    throw UsageError("phi: " + path + ": " + e.what());
  }
}

int cmd_meta(const CommonFlags& flags, const std::string& phi_path,
             std::optional<std::size_t> epochs) {
  const ExperimentConfig cfg = resolve(flags);
  const ParamSet phi = read_phi(phi_path);
  const Setup setup = prepare(cfg);
  const auto d = static_cast<std::size_t>(setup.dataset.inputs.cols());
  if (phi.input_dim() != d) {
    throw UsageError("phi: input width " + std::to_string(phi.input_dim()) +
                     " does not match data width " + std::to_string(d));
  }
  const std::vector<Shard> shards =
      make_meta_shards(cfg, setup.dataset, setup.clients);
  const ParamSet before = phi;
  const MetaResult res =
      meta_test(phi, shards, epochs.value_or(cfg.meta.epochs), cfg);
  if (!(phi == before)) {
    throw ContractError("representation changed during meta-test");
  }

  const fs::path dir = prepare_out(flags.out);
  std::string s = "client_id,method,test_acc\n";
  for (std::size_t i = 0; i < shards.size(); ++i) {
    s += std::to_string(i) + ",transferred," + fmt_num(res.transferred[i]) +
         '\n';
    s += std::to_string(i) + ",naive," + fmt_num(res.naive[i]) + '\n';
  }
  write_file_atomic(dir / "meta.csv", s);
  std::cout << "transferred " << fmt_num(res.transferred_mean) << " naive "
            << fmt_num(res.naive_mean) << '\n';
  return 0;
}

PhaseTimings mean_timings(const RunResult& run) {
  PhaseTimings m;
  for (const RoundRecord& r : run.records) {
    m.broadcast_ms += r.timings.broadcast_ms;
    m.client_compute_ms += r.timings.client_compute_ms;
    m.upload_ms += r.timings.upload_ms;
    m.aggregate_ms += r.timings.aggregate_ms;
    m.round_total_ms += r.timings.round_total_ms;
  }
  if (!run.records.empty()) {
    const auto n = static_cast<double>(run.records.size());
    m.broadcast_ms /= n;
    m.client_compute_ms /= n;
    m.upload_ms /= n;
    m.aggregate_ms /= n;
    m.round_total_ms /= n;
  }
  return m;
}

int cmd_bench(const CommonFlags& flags) {
  ExperimentConfig cfg = resolve(flags);
  if (cfg.protocol == Protocol::kNaive) {
    throw UsageError("protocol: naive does not communicate");
  }
  cfg.record_timings = true;
  // Equivalence of the two modes is checked bit-for-bit, which needs f64.
  cfg.dtype = WireDtype::kF64;
  const fs::path dir = prepare_out(flags.out);
  const RunResult seq = run_sequential(cfg);
  const RunResult par = run_parallel(cfg);

  std::string s =
      "mode,rounds,broadcast_ms,client_compute_ms,upload_ms,aggregate_ms,"
      "round_total_ms\n";
  for (const auto& [name, run] :
       {std::pair<const char*, const RunResult*>{"sequential", &seq},
        {"parallel", &par}}) {
    const PhaseTimings m = mean_timings(*run);
    s += std::string(name) + ',' + std::to_string(run->records.size()) + ',' +
         fmt_num(m.broadcast_ms) + ',' + fmt_num(m.client_compute_ms) + ',' +
         fmt_num(m.upload_ms) + ',' + fmt_num(m.aggregate_ms) + ',' +
         fmt_num(m.round_total_ms) + '\n';
  }
  write_file_atomic(dir / "timing.csv", s);

  const double t_seq = mean_timings(seq).round_total_ms;
  const double t_par = mean_timings(par).round_total_ms;
  std::cout << "mean round time: sequential " << fmt_num(t_seq)
            << " ms, parallel " << fmt_num(t_par) << " ms\n";
  if (!(seq.global == par.global)) {
    std::cerr << "error: sequential and parallel runs ended with different "
                 "parameters\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Byzantine-robust personalized federated learning simulator"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags train_flags, meta_flags, bench_flags;
  std::string transport = "sequential";
  CLI::App* train = app.add_subcommand("train", "run federated training");
  add_common(train, train_flags);
  train->add_option("--transport", transport, "sequential|socket")
      ->capture_default_str();

  std::string phi_path;
  std::optional<std::size_t> epochs;
  CLI::App* meta =
      app.add_subcommand("meta", "fine-tune new clients on a frozen phi");
  add_common(meta, meta_flags);
  meta->add_option("--phi", phi_path, "phi.bin written by train")->required();
  meta->add_option("--epochs", epochs, "head-only fine-tuning epochs");

  CLI::App* bench = app.add_subcommand(
      "bench-transport", "compare sequential and socket round times");
  add_common(bench, bench_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(train_flags, transport);
    if (*meta) return cmd_meta(meta_flags, phi_path, epochs);
    return cmd_bench(bench_flags);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace byzfed
