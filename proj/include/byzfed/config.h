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


#ifndef BYZFED_CONFIG_H_
#define BYZFED_CONFIG_H_

#include <string>

#include "json.hpp"

#include "byzfed/engine.h"

namespace byzfed {

// JSON form of ExperimentConfig. Unknown keys are rejected so that typos do
// not silently fall back to defaults. Besides the fields of the struct the
// top level accepts "description" (ignored) and "byzantine", a count of
// Byzantine clients sampled from the master seed (exclusive with
// "byzantine_ids").
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Reads a config file. A manifest.json written by `train` is also accepted;
// its embedded "config" object is used.
nlohmann::json load_config_json(const std::string& path);
ExperimentConfig load_config(const std::string& path);

}  // namespace byzfed

#endif  // BYZFED_CONFIG_H_
