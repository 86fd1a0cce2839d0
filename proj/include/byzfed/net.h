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

#ifndef BYZFED_NET_H_
#define BYZFED_NET_H_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "byzfed/model.h"

namespace byzfed {

enum class MessageKind : std::uint8_t {
  kBroadcast = 0,
  kUpdate = 1,
  kAck = 2,
  kShutdown = 3,
};

enum class WireDtype : std::uint8_t { kF64 = 0, kF32 = 1 };

const char* dtype_name(WireDtype d);
WireDtype parse_dtype(const std::string& name);

struct Message {
  MessageKind kind = MessageKind::kAck;
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  WireDtype dtype = WireDtype::kF64;
  ParamSet payload;  // shared-tagged layers only; tags are not transmitted

  bool operator==(const Message& other) const = default;
};

inline constexpr std::size_t kFrameHeaderBytes = 4 + 1 + 4 + 4 + 1 + 4;
inline constexpr std::uint32_t kMaxFrameBytes = 256u << 20;

// Frame: u32 length of the rest | u8 kind | u32 round | u32 client_id |
// u8 dtype | u32 layer_count | per layer: u32 rows, u32 cols, row-major
// weights, biases. Little-endian throughout.
std::vector<std::uint8_t> encode(const Message& msg);

// Decodes one complete frame (length prefix included). Any malformed input
// raises ProtocolError.
Message decode(std::span<const std::uint8_t> frame);

struct PhaseTimings {
  double broadcast_ms = 0.0;
  double client_compute_ms = 0.0;
  double upload_ms = 0.0;
  double aggregate_ms = 0.0;
  double round_total_ms = 0.0;
};

// Client-side work for one round: receives the broadcast global parameters,
// returns the upload.
using ClientHandler =
    std::function<ParamSet(std::uint32_t round, const ParamSet& global)>;

struct Gathered {
  std::vector<ParamSet> updates;  // index = client id
  PhaseTimings timings;           // aggregate/total left for the caller
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Broadcasts `global` to every client and blocks until all n updates are
  // in. Throws TransportError if any client fails to deliver.
  virtual Gathered exchange(std::uint32_t round, const ParamSet& global) = 0;
  virtual void shutdown() = 0;
  virtual const char* name() const = 0;
};

// Runs clients one after another in the calling thread. Parameters still go
// through encode/decode so numerics match the socket transport.
std::unique_ptr<Transport> make_sequential_transport(
    std::vector<ClientHandler> clients, WireDtype dtype);

// One loopback TCP connection and one thread per client, persistent across
// rounds. `port` 0 picks an ephemeral port.
std::unique_ptr<Transport> make_socket_transport(
    std::vector<ClientHandler> clients, WireDtype dtype, std::uint16_t port,
    std::chrono::milliseconds watchdog = std::chrono::seconds(60));

// BYZFED_PORT, default 47600.
std::uint16_t port_from_env();

}  // namespace byzfed

#endif  // BYZFED_NET_H_
