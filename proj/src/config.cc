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


#include "byzfed/config.h"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>

#include "byzfed/errors.h"

namespace byzfed {
namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError((where.empty() ? "config" : where) +
                      ": expected a JSON object");
  }
}

void reject_unknown(const json& j, const std::string& prefix,
                    std::initializer_list<const char*> allowed) {
  std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) {
      throw ConfigError(prefix + key + ": unknown key");
    }
  }
}

// Typed field readers; each leaves `out` untouched when the key is absent.
template <typename T>
void read(const json& j, const char* key, const std::string& prefix, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> ||
                  std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw std::invalid_argument("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw std::invalid_argument("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw std::invalid_argument("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw std::invalid_argument("");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw ConfigError(prefix + key + ": wrong type (" + it->dump() + ")");
  }
}

template <typename Enum, typename Parse>
void read_enum(const json& j, const char* key, const std::string& prefix,
               Enum& out, Parse parse) {
  std::string name;
  read(j, key, prefix, name);
  if (name.empty()) return;
  try {
    out = parse(name);
  } catch (const Error& e) {
    throw ConfigError(prefix + key + ": " + e.what());
  }
}

void read_sizes(const json& j, const char* key, const std::string& prefix,
                std::vector<std::size_t>& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array()) {
    throw ConfigError(prefix + key + ": expected an array of integers");
  }
  std::vector<std::size_t> values;
  for (const auto& v : *it) {
    if (!v.is_number_unsigned()) {
      throw ConfigError(prefix + key + ": expected an array of integers");
    }
    values.push_back(v.get<std::size_t>());
  }
  out = std::move(values);
}

const json* section(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return nullptr;
  require_object(*it, key);
  return &*it;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  require_object(j, "");
  reject_unknown(j, "",
                 {"description", "protocol", "aggregator", "clients",
                  "byzantine", "byzantine_ids", "attack", "rounds", "tau_h",
                  "tau_phi", "lr", "momentum", "batch_size", "model", "data",
                  "gm", "meta", "seed", "dtype", "participation",
                  "simulated_compute_ms", "record_timings"});
  ExperimentConfig cfg;
  read_enum(j, "protocol", "", cfg.protocol, parse_protocol);
  read_enum(j, "aggregator", "", cfg.aggregator, parse_aggregator);
  read(j, "clients", "", cfg.clients);
  read(j, "rounds", "", cfg.rounds);
  read(j, "tau_h", "", cfg.tau_h);
  read(j, "tau_phi", "", cfg.tau_phi);
  read(j, "lr", "", cfg.lr);
  read(j, "momentum", "", cfg.momentum);
  read(j, "batch_size", "", cfg.batch_size);
  read(j, "seed", "", cfg.seed);
  read_enum(j, "dtype", "", cfg.dtype, parse_dtype);
  read(j, "participation", "", cfg.participation);
  read(j, "simulated_compute_ms", "", cfg.simulated_compute_ms);
  read(j, "record_timings", "", cfg.record_timings);

  if (const json* a = section(j, "attack")) {
    reject_unknown(*a, "attack.", {"kind", "sigma", "mode", "seed"});
    read_enum(*a, "kind", "attack.", cfg.attack.kind, parse_attack);
    read(*a, "sigma", "attack.", cfg.attack.sigma);
    read_enum(*a, "mode", "attack.", cfg.attack.mode, parse_mislabel_mode);
    read(*a, "seed", "attack.", cfg.attack.seed);
  }
  if (const json* m = section(j, "model")) {
    reject_unknown(*m, "model.",
                   {"input_dim", "hidden_dims", "rep_dim", "num_classes"});
    read(*m, "input_dim", "model.", cfg.model.input_dim);
    read_sizes(*m, "hidden_dims", "model.", cfg.model.hidden_dims);
    read(*m, "rep_dim", "model.", cfg.model.rep_dim);
    read(*m, "num_classes", "model.", cfg.model.num_classes);
  }
  if (const json* d = section(j, "data")) {
    reject_unknown(*d, "data.",
                   {"k_true", "samples", "noise_std", "classes_per_client",
                    "per_class", "test_fraction", "bfd_path"});
    read(*d, "k_true", "data.", cfg.data.k_true);
    read(*d, "samples", "data.", cfg.data.samples);
    read(*d, "noise_std", "data.", cfg.data.noise_std);
    read(*d, "classes_per_client", "data.", cfg.data.classes_per_client);
    read(*d, "per_class", "data.", cfg.data.per_class);
    read(*d, "test_fraction", "data.", cfg.data.test_fraction);
    read(*d, "bfd_path", "data.", cfg.data.bfd_path);
  }
  if (const json* g = section(j, "gm")) {
    reject_unknown(*g, "gm.", {"tol", "max_iter", "eps"});
    read(*g, "tol", "gm.", cfg.gm.tol);
    read(*g, "max_iter", "gm.", cfg.gm.max_iter);
    read(*g, "eps", "gm.", cfg.gm.eps);
  }
  if (const json* m = section(j, "meta")) {
    reject_unknown(*m, "meta.",
                   {"clients", "per_class", "test_per_class", "epochs",
                    "samples"});
    read(*m, "clients", "meta.", cfg.meta.clients);
    read(*m, "per_class", "meta.", cfg.meta.per_class);
    read(*m, "test_per_class", "meta.", cfg.meta.test_per_class);
    read(*m, "epochs", "meta.", cfg.meta.epochs);
    read(*m, "samples", "meta.", cfg.meta.samples);
  }

  const bool has_ids = j.contains("byzantine_ids");
  if (has_ids && j.contains("byzantine")) {
    throw ConfigError("byzantine: give either byzantine or byzantine_ids");
  }
  if (has_ids) {
    read_sizes(j, "byzantine_ids", "", cfg.byzantine_ids);
  } else if (j.contains("byzantine")) {
    std::size_t count = 0;
    read(j, "byzantine", "", count);
    cfg.byzantine_ids = pick_byzantine_ids(cfg.clients, count, cfg.seed);
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["protocol"] = protocol_name(cfg.protocol);
  j["aggregator"] = aggregator_name(cfg.aggregator);
  j["clients"] = cfg.clients;
  j["byzantine_ids"] = cfg.byzantine_ids;
  j["attack"] = {{"kind", attack_name(cfg.attack.kind)},
                 {"sigma", cfg.attack.sigma},
                 {"mode", mislabel_mode_name(cfg.attack.mode)},
                 {"seed", cfg.attack.seed}};
  j["rounds"] = cfg.rounds;
  j["tau_h"] = cfg.tau_h;
  j["tau_phi"] = cfg.tau_phi;
  j["lr"] = cfg.lr;
  j["momentum"] = cfg.momentum;
  j["batch_size"] = cfg.batch_size;
  j["model"] = {{"input_dim", cfg.model.input_dim},
                {"hidden_dims", cfg.model.hidden_dims},
                {"rep_dim", cfg.model.rep_dim},
                {"num_classes", cfg.model.num_classes}};
  j["data"] = {{"k_true", cfg.data.k_true},
               {"samples", cfg.data.samples},
               {"noise_std", cfg.data.noise_std},
               {"classes_per_client", cfg.data.classes_per_client},
               {"per_class", cfg.data.per_class},
               {"test_fraction", cfg.data.test_fraction},
               {"bfd_path", cfg.data.bfd_path}};
  j["gm"] = {{"tol", cfg.gm.tol},
             {"max_iter", cfg.gm.max_iter},
             {"eps", cfg.gm.eps}};
  j["meta"] = {{"clients", cfg.meta.clients},
               {"per_class", cfg.meta.per_class},
               {"test_per_class", cfg.meta.test_per_class},
               {"epochs", cfg.meta.epochs},
               {"samples", cfg.meta.samples}};
  j["seed"] = cfg.seed;
  j["dtype"] = dtype_name(cfg.dtype);
  j["participation"] = cfg.participation;
  j["simulated_compute_ms"] = cfg.simulated_compute_ms;
  j["record_timings"] = cfg.record_timings;
  return j;
}

json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  // manifest.json carries the resolved config next to run metadata.
  if (j.is_object() && j.contains("config") && j.contains("version")) {
    return j["config"];
  }
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json(load_config_json(path));
}

}  // namespace byzfed
