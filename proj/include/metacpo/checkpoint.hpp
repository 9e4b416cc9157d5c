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

#include <stdexcept>
#include <string>

#include "metacpo/policy.hpp"

namespace metacpo {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  PolicyArch arch;
  Vector params;
  /// Meta iterations completed.
  int iteration = 0;
  /// Rng::state() of the training stream after `iteration` iterations.
  std::string rng_state;
  std::string config_digest;
};

/// JSON envelope with the payload's SHA-256. Parameters are stored as the hex
/// of their IEEE-754 bit patterns, so the round trip is exact. The file is
/// written next to `path` and renamed into place.
void save_checkpoint(const std::string& path, const Checkpoint& ck);

/// Throws CheckpointError on unreadable, truncated or tampered files and on a
/// format version other than kCheckpointVersion.
Checkpoint load_checkpoint(const std::string& path);

/// Throws CheckpointError unless ck.config_digest equals `digest`.
void require_config_digest(const Checkpoint& ck, const std::string& digest);

}  // namespace metacpo
