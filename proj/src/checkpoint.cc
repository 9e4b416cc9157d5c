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

#include "metacpo/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "metacpo/digest.hpp"

namespace metacpo {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "metacpo-checkpoint";

std::string to_hex(double x) { return fmt::format("{:016x}", std::bit_cast<std::uint64_t>(x)); }

double from_hex(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw CheckpointError("checkpoint: malformed parameter entry '" + s + "'");
  }
  return std::bit_cast<double>(std::stoull(s, nullptr, 16));
}

json arch_json(const PolicyArch& a) {
  return {{"obs_dim", a.obs_dim},     {"act_dim", a.act_dim},
          {"hidden", a.hidden},       {"log_std_init", to_hex(a.log_std_init)},
          {"num_actions", a.num_actions}};
}

PolicyArch arch_from(const json& j) {
  PolicyArch a;
  a.obs_dim = j.at("obs_dim").get<int>();
  a.act_dim = j.at("act_dim").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.log_std_init = from_hex(j.at("log_std_init").get<std::string>());
  a.num_actions = j.at("num_actions").get<int>();
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json params = json::array();
  for (double v : ck.params) params.push_back(to_hex(v));
  const json payload = {{"arch", arch_json(ck.arch)},
                        {"params", params},
                        {"iteration", ck.iteration},
                        {"rng_state", ck.rng_state},
                        {"config_digest", ck.config_digest}};
  const std::string body = payload.dump();
  const json envelope = {{"format", kFormat},
                         {"version", ck.version},
                         {"payload", payload},
                         {"sha256", sha256_hex(body)}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write '" + tmp + "'");
    out << envelope.dump(1) << '\n';
    out.flush();
    if (!out) throw CheckpointError("checkpoint: write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("checkpoint: cannot move into place '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json envelope;
  try {
    envelope = json::parse(ss.str());
  } catch (const json::exception&) {
    throw CheckpointError("checkpoint: '" + path + "' is truncated or not valid JSON");
  }
  try {
    if (envelope.at("format").get<std::string>() != kFormat) {
      throw CheckpointError("checkpoint: '" + path + "' is not a metacpo checkpoint");
    }
    const int version = envelope.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(fmt::format("checkpoint: file has format version {}, this build reads version {}",
                                        version, kCheckpointVersion));
    }
    const json& payload = envelope.at("payload");
    if (sha256_hex(payload.dump()) != envelope.at("sha256").get<std::string>()) {
      throw CheckpointError("checkpoint: integrity digest mismatch in '" + path + "'");
    }
    Checkpoint ck;
    ck.version = version;
    ck.arch = arch_from(payload.at("arch"));
    const auto& params = payload.at("params");
    ck.params.resize(static_cast<Eigen::Index>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck.params[static_cast<Eigen::Index>(i)] = from_hex(params[i].get<std::string>());
    }
    ck.iteration = payload.at("iteration").get<int>();
    ck.rng_state = payload.at("rng_state").get<std::string>();
    ck.config_digest = payload.at("config_digest").get<std::string>();
    validate(ck.arch);
    if (ck.params.size() != ck.arch.num_params()) {
      throw CheckpointError("checkpoint: parameter count does not match the architecture");
    }
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError(fmt::format("checkpoint: malformed '{}': {}", path, e.what()));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(fmt::format("checkpoint: malformed '{}': {}", path, e.what()));
  }
}

void require_config_digest(const Checkpoint& ck, const std::string& digest) {
  if (ck.config_digest != digest) {
    throw CheckpointError(fmt::format(
        "checkpoint was written under a different configuration (digest {} vs {})",
        ck.config_digest.substr(0, 12), digest.substr(0, 12)));
  }
}

}  // namespace metacpo
