// Copyright 2026 The MetaCPO Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace metacpo {

/// Seedable random source with platform-independent output.
///
/// The standard distributions leave their algorithms implementation-defined,
/// so uniform and normal draws are computed here directly from the raw
/// 64-bit engine output. Independent streams are derived by hashing a seed
/// together with a list of integer keys (task index, step index, ...).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Stream keyed by (seed, keys...). Same keys always give the same stream.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal (Box-Muller).
  double normal();

  /// Engine state as text; set_state restores it exactly. set_state throws
  /// std::invalid_argument on malformed input.
  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace metacpo
