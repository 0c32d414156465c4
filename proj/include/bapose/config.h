#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bapose/decode.h"
#include "bapose/metrics.h"
#include "bapose/model.h"
#include "bapose/train.h"

namespace bapose {

// Everything a command needs, read from flat "key = value" lines.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  EvalSettings eval;  // eval.oks holds the falloff table (key oks.falloff)
  std::vector<std::pair<int, int>> skeleton;  // overlay limbs, 0-based joints

  void validate() const;
  // The falloff table is mandatory wherever OKS is computed.
  void require_oks() const;
};

// Lines are "key = value"; '#' starts a comment; blank lines are skipped.
// Unknown or repeated keys are rejected with the offending line number.
// Keys not given keep their defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Every key in sorted order, one "key = value" line each. Parsing the result
// reproduces the configuration.
std::string canonical_config(const RunConfig& cfg);

// The architecture subset (backbone.* and dwasp.* lines) in canonical form,
// and its 64-bit FNV-1a hash used to tag checkpoints.
std::string canonical_model_config(const ModelConfig& cfg);
std::uint64_t model_fingerprint(const ModelConfig& cfg);

}  // namespace bapose
