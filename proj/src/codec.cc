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

#include <string>

#include "byzfed/bytes.h"
#include "byzfed/errors.h"
#include "byzfed/net.h"

namespace byzfed {

const char* dtype_name(WireDtype d) {
  return d == WireDtype::kF32 ? "f32" : "f64";
}

WireDtype parse_dtype(const std::string& name) {
  if (name == "f64") return WireDtype::kF64;
  if (name == "f32") return WireDtype::kF32;
  throw ConfigError("unknown dtype '" + name + "' (f32|f64)");
}

std::vector<std::uint8_t> encode(const Message& msg) {
  if (msg.payload.num_scalars(LayerTag::kHead) != 0) {
    throw ContractError("message payloads carry shared-tagged layers only");
  }
  ByteWriter out;
  out.u32(0);  // patched below
  out.u8(static_cast<std::uint8_t>(msg.kind));
  out.u32(msg.round);
  out.u32(msg.client_id);
  out.u8(static_cast<std::uint8_t>(msg.dtype));
  out.u32(static_cast<std::uint32_t>(msg.payload.num_layers()));
  const bool f32 = msg.dtype == WireDtype::kF32;
  for (const Layer& l : msg.payload.layers()) {
    out.u32(static_cast<std::uint32_t>(l.out()));
    out.u32(static_cast<std::uint32_t>(l.in()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        if (f32) {
          out.f32(static_cast<float>(l.weight(r, c)));
        } else {
          out.f64(l.weight(r, c));
        }
      }
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) {
      if (f32) {
        out.f32(static_cast<float>(l.bias[r]));
      } else {
        out.f64(l.bias[r]);
      }
    }
  }
  if (out.size() - 4 > kMaxFrameBytes) {
    throw ProtocolError("frame exceeds " + std::to_string(kMaxFrameBytes) +
                        " bytes");
  }
  out.patch_u32(0, static_cast<std::uint32_t>(out.size() - 4));
  return out.take();
}

Message decode(std::span<const std::uint8_t> frame) {
  ByteReader in(frame);
  const std::uint32_t length = in.u32();
  if (length > kMaxFrameBytes) {
    throw ProtocolError("oversized frame: " + std::to_string(length) +
                        " bytes");
  }
  if (length != in.remaining()) {
    throw ProtocolError("length prefix " + std::to_string(length) +
                        " does not match frame body " +
                        std::to_string(in.remaining()));
  }

  Message msg;
  const std::uint8_t kind = in.u8();
  if (kind > static_cast<std::uint8_t>(MessageKind::kShutdown)) {
    throw ProtocolError("unknown message kind " + std::to_string(kind));
  }
  msg.kind = static_cast<MessageKind>(kind);
  msg.round = in.u32();
  msg.client_id = in.u32();
  const std::uint8_t dtype = in.u8();
  if (dtype > static_cast<std::uint8_t>(WireDtype::kF32)) {
    throw ProtocolError("unknown dtype " + std::to_string(dtype));
  }
  msg.dtype = static_cast<WireDtype>(dtype);
  const bool f32 = msg.dtype == WireDtype::kF32;
  const std::uint64_t elem = f32 ? 4 : 8;

  const std::uint32_t layer_count = in.u32();
  if (layer_count > in.remaining() / 8) {
    throw ProtocolError("layer count " + std::to_string(layer_count) +
                        " exceeds frame size");
  }
  std::vector<Layer> layers;
  layers.reserve(layer_count);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    if (rows == 0 || cols == 0) {
      throw ProtocolError("layer " + std::to_string(i) + " has a zero dimension");
    }
    const std::uint64_t need =
        (std::uint64_t{rows} * cols + rows) * elem;
    if (need > in.remaining()) {
      throw ProtocolError("layer " + std::to_string(i) + " (" +
                          std::to_string(rows) + "x" + std::to_string(cols) +
                          ") overruns the frame");
    }
    Layer l;
    l.weight.resize(rows, cols);
    l.bias.resize(rows);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        l.weight(r, c) = f32 ? static_cast<double>(in.f32()) : in.f64();
      }
    }
    for (std::uint32_t r = 0; r < rows; ++r) {
      l.bias[r] = f32 ? static_cast<double>(in.f32()) : in.f64();
    }
    layers.push_back(std::move(l));
  }
  if (in.remaining() != 0) {
    throw ProtocolError(std::to_string(in.remaining()) +
                        " trailing bytes after last layer");
  }
  try {
    msg.payload = ParamSet(std::move(layers));
  } catch (const ShapeError& e) {
    throw ProtocolError(std::string("invalid payload: ") + e.what());
  }
  return msg;
}

}  // namespace byzfed
