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

#ifndef BYZFED_SEED_H_
#define BYZFED_SEED_H_

#include <cstdint>
#include <initializer_list>

namespace byzfed {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream seed for a (base, coordinates...) tuple. Streams never
// depend on scheduling order, only on the coordinates.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream labels for derive_seed.
enum SeedStream : std::uint64_t {
  kStreamModel = 1,
  kStreamHead = 2,
  kStreamData = 3,
  kStreamPartition = 4,
  kStreamEpoch = 5,
  kStreamAttack = 6,
  kStreamByzantineIds = 7,
  kStreamMeta = 8,
};

}  // namespace byzfed

#endif  // BYZFED_SEED_H_
