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


#include <sys/socket.h>
#include <netinet/in.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "byzfed/errors.h"
#include "byzfed/net.h"
#include "oracles.h"

namespace byzfed {
namespace {

TEST(Codec, EmptyAckIs18Bytes) {
  Message ack;
  ack.kind = MessageKind::kAck;
  const auto bytes = encode(ack);
  EXPECT_EQ(bytes.size(), 18u);
  EXPECT_EQ(bytes[0], 14u);  // length of everything after the prefix
  EXPECT_EQ(decode(bytes), ack);
}

TEST(Codec, ExactRoundTripAtF64) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    Message m{MessageKind::kUpdate, 7, 3, WireDtype::kF64,
              oracle::random_params(rng, {5, 4, 3}, 0, 10.0)};
    EXPECT_EQ(decode(encode(m)), m);
  }
}

TEST(Codec, F32RoundTripPrecision) {
  std::mt19937_64 rng(2);
  ParamSet p = oracle::random_params(rng, {20, 10}, 0);
  Message m{MessageKind::kBroadcast, 1, 0, WireDtype::kF32, p};
  const Message back = decode(encode(m));
  const double maxabs = p.flatten().cwiseAbs().maxCoeff();
  const double err = (back.payload.flatten() - p.flatten()).cwiseAbs().maxCoeff();
  EXPECT_LE(err, std::ldexp(1.0, -20) * maxabs);
  EXPECT_EQ(back.dtype, WireDtype::kF32);
}

TEST(Codec, RejectsHeadPayload) {
  Message m;
  m.payload = build_model({3, {}, 2, 2}, 1);
  EXPECT_THROW(encode(m), ContractError);
}

TEST(Codec, RejectsMalformedFrames) {
  Message m{MessageKind::kUpdate, 1, 1, WireDtype::kF64,
            split(build_model({3, {}, 2, 2}, 1)).shared};
  const auto good = encode(m);

  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(decode(truncated), ProtocolError);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode(trailing), ProtocolError);

  auto bad_kind = good;
  bad_kind[4] = 9;
  EXPECT_THROW(decode(bad_kind), ProtocolError);

  auto bad_dtype = good;
  bad_dtype[13] = 7;
  EXPECT_THROW(decode(bad_dtype), ProtocolError);

  std::vector<std::uint8_t> huge{0xff, 0xff, 0xff, 0x7f, 0};
  EXPECT_THROW(decode(huge), ProtocolError);
}

TEST(Codec, RandomBytesNeverCrash) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 64);
  for (int i = 0; i < 2000; ++i) {
    std::vector<std::uint8_t> b(static_cast<std::size_t>(len(rng)));
    for (auto& x : b) x = static_cast<std::uint8_t>(byte(rng));
    if (b.size() >= 4 && i % 2 == 0) {
      // Make the length prefix consistent half of the time so decoding gets
      // past the first check.
      const auto n = static_cast<std::uint32_t>(b.size() - 4);
      b[0] = n & 0xff;
      b[1] = (n >> 8) & 0xff;
      b[2] = b[3] = 0;
    }
    EXPECT_THROW(decode(b), ProtocolError);
  }
}

// Each client returns the broadcast plus its id, so every update is distinct
// and the exchange is easy to check.
std::vector<ClientHandler> echo_clients(std::size_t n,
                                        std::chrono::milliseconds delay = {}) {
  std::vector<ClientHandler> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back([i, delay](std::uint32_t, const ParamSet& g) {
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      ParamSet p = g;
      p.mutable_layer(0).bias.array() += static_cast<double>(i);
      return p;
    });
  }
  return out;
}

ParamSet small_rep() {
  std::mt19937_64 rng(4);
  return oracle::random_params(rng, {6, 3}, 0);
}

TEST(Transport, SequentialAndSocketAgreeBitwise) {
  for (WireDtype dt : {WireDtype::kF64, WireDtype::kF32}) {
    auto seq = make_sequential_transport(echo_clients(4), dt);
    auto sock = make_socket_transport(echo_clients(4), dt, 0);
    ParamSet g = small_rep();
    for (std::uint32_t round = 1; round <= 3; ++round) {
      Gathered a = seq->exchange(round, g);
      Gathered b = sock->exchange(round, g);
      ASSERT_EQ(a.updates.size(), 4u);
      ASSERT_EQ(b.updates.size(), 4u);
      for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.updates[i], b.updates[i]);
      g = a.updates[1];
    }
    seq->shutdown();
    sock->shutdown();
  }
}

TEST(Transport, F64IsLossless) {
  auto seq = make_sequential_transport(echo_clients(1), WireDtype::kF64);
  ParamSet g = small_rep();
  EXPECT_EQ(seq->exchange(1, g).updates[0], echo_clients(1)[0](1, g));
}

TEST(Transport, ClientFailureBecomesTransportError) {
  std::vector<ClientHandler> clients = echo_clients(3);
  clients[1] = [](std::uint32_t, const ParamSet&) -> ParamSet {
    throw DataError("client exploded");
  };
  auto sock = make_socket_transport(clients, WireDtype::kF64, 0,
                                    std::chrono::seconds(5));
  EXPECT_THROW(sock->exchange(1, small_rep()), TransportError);
  sock->shutdown();
}

TEST(Transport, PortInUseIsReported) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  ASSERT_GE(fd, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  ASSERT_EQ(::listen(fd, 1), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const std::uint16_t port = ntohs(addr.sin_port);
  try {
    make_socket_transport(echo_clients(2), WireDtype::kF64, port);
    ADD_FAILURE() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(port)),
              std::string::npos);
  }
  ::close(fd);
}

TEST(Transport, ShutdownIsIdempotentAndQuick) {
  auto sock = make_socket_transport(echo_clients(5), WireDtype::kF32, 0);
  sock->exchange(1, small_rep());
  const auto t0 = std::chrono::steady_clock::now();
  sock->shutdown();
  sock->shutdown();
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
}

TEST(Transport, ParallelOverlapsClientWork) {
  using namespace std::chrono_literals;
  auto seq = make_sequential_transport(echo_clients(4, 40ms), WireDtype::kF32);
  auto sock = make_socket_transport(echo_clients(4, 40ms), WireDtype::kF32, 0);
  const ParamSet g = small_rep();
  auto time = [&](Transport& t) {
    const auto t0 = std::chrono::steady_clock::now();
    t.exchange(1, g);
    return std::chrono::steady_clock::now() - t0;
  };
  const auto ts = time(*seq);
  const auto tp = time(*sock);
  EXPECT_LT(tp, ts);
  seq->shutdown();
  sock->shutdown();
}

TEST(PortFromEnv, DefaultAndOverride) {
  ::unsetenv("BYZFED_PORT");
  EXPECT_EQ(port_from_env(), 47600);
  ::setenv("BYZFED_PORT", "0", 1);
  EXPECT_EQ(port_from_env(), 0);
  ::setenv("BYZFED_PORT", "nonsense", 1);
  EXPECT_THROW(port_from_env(), ConfigError);
  ::setenv("BYZFED_PORT", "0", 1);
}

}  // namespace
}  // namespace byzfed
