#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qprox/distributed.hpp"
#include "qprox/problem.hpp"

namespace qprox {

/// Malformed configuration text. `line()` is the offending input line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string line)
      : std::runtime_error(what), line_(std::move(line)) {}
  const std::string& line() const { return line_; }

 private:
  std::string line_;
};

/// Everything needed to reproduce one run. Field names double as config keys.
struct RunConfig {
  // instance
  int nodes = 40;
  int degree = 8;
  int block_dim = 10;
  int rows = 80;
  Regularizer::Kind regularizer = Regularizer::Kind::ElasticNet;
  double lambda1 = 0.1;
  double lambda2 = 700.0;
  double truth_scale = 0.1;
  std::string instance;  // load this container instead of generating

  // algorithm
  double step = 0.0;        // eta; 0 selects step_scale / L-bar
  double step_scale = 0.1;
  int inner_iters = 0;      // T; 0 selects inner_scale * N
  int inner_scale = 2;
  int outer_iters = 200;    // S
  bool force = false;

  // quantization; bits = 0 means unquantized
  int bits = 11;
  double kappa = 0.97;
  double c_state_outer = 50.0;
  double c_grad_outer = 300.0;
  double c_state_inner = 50.0;
  double c_grad_inner = 400.0;

  // seeds; unset ones are derived from master_seed
  std::uint64_t master_seed = 1;
  std::optional<std::uint64_t> instance_seed;
  std::optional<std::uint64_t> sampler_seed;
  std::optional<std::uint64_t> dither_seed;

  // output
  std::string out;
  bool save_log = true;

  std::uint64_t resolved_instance_seed() const;
  std::uint64_t resolved_sampler_seed() const;
  std::uint64_t resolved_dither_seed() const;

  Regularizer regularizer_value() const;
  InstanceParams instance_params() const;
  QuantizationParams quantization() const;
};

/// Applies one `key = value` assignment. Throws ConfigError on an unknown
/// key or unparsable value.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value,
                   const std::string& line);

/// Flat `key = value` lines; `#` starts a comment.
RunConfig parse_config(std::istream& in, RunConfig base = {});

/// Reads a config file. A trace CSV is accepted too: its first comment row
/// carries a complete configuration.
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Canonical `key=value` tokens with all seeds resolved; excludes output
/// paths, which do not affect results.
std::vector<std::string> canonical_settings(const RunConfig& cfg);

/// FNV-1a 64 over the canonical settings.
std::uint64_t config_hash(const RunConfig& cfg);

/// Single-line provenance row written at the top of every CSV:
/// "config_hash=<hex> key=value ...".
std::string provenance_row(const RunConfig& cfg);

/// Inverse of provenance_row. Throws ConfigError if the hash disagrees.
RunConfig parse_provenance_row(const std::string& row);

std::string regularizer_name(Regularizer::Kind kind);

}  // namespace qprox
