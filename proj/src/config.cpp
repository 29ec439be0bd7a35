#include "qprox/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "qprox/rng.hpp"
#include "qprox/trace.hpp"

namespace qprox {

namespace {

constexpr const char* kProvenancePrefix = "config_hash=";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const std::string& line) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("invalid value for '" + key + "': '" + value + "'", line);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value, const std::string& line) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid boolean for '" + key + "': '" + value + "'", line);
}

Regularizer::Kind parse_kind(const std::string& value, const std::string& line) {
  if (value == "l1") return Regularizer::Kind::L1;
  if (value == "squared_l2") return Regularizer::Kind::SquaredL2;
  if (value == "elastic_net") return Regularizer::Kind::ElasticNet;
  if (value == "group_lasso") return Regularizer::Kind::GroupLasso;
  throw ConfigError("unknown regularizer '" + value + "'", line);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&, const std::string&)>;

template <typename T>
Setter number(T RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v, const std::string& l) {
    c.*field = parse_number<T>(k, v, l);
  };
}

Setter seed(std::optional<std::uint64_t> RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v, const std::string& l) {
    c.*field = parse_number<std::uint64_t>(k, v, l);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"nodes", number(&RunConfig::nodes)},
      {"degree", number(&RunConfig::degree)},
      {"block_dim", number(&RunConfig::block_dim)},
      {"rows", number(&RunConfig::rows)},
      {"regularizer",
       [](RunConfig& c, const std::string&, const std::string& v, const std::string& l) {
         c.regularizer = parse_kind(v, l);
       }},
      {"lambda1", number(&RunConfig::lambda1)},
      {"lambda2", number(&RunConfig::lambda2)},
      {"truth_scale", number(&RunConfig::truth_scale)},
      {"instance", [](RunConfig& c, const std::string&, const std::string& v, const std::string&) { c.instance = v; }},
      {"step", number(&RunConfig::step)},
      {"step_scale", number(&RunConfig::step_scale)},
      {"inner_iters", number(&RunConfig::inner_iters)},
      {"inner_scale", number(&RunConfig::inner_scale)},
      {"outer_iters", number(&RunConfig::outer_iters)},
      {"force",
       [](RunConfig& c, const std::string& k, const std::string& v, const std::string& l) {
         c.force = parse_bool(k, v, l);
       }},
      {"bits",
       [](RunConfig& c, const std::string& k, const std::string& v, const std::string& l) {
         c.bits = v == "unquantized" ? 0 : parse_number<int>(k, v, l);
       }},
      {"kappa", number(&RunConfig::kappa)},
      {"c_state_outer", number(&RunConfig::c_state_outer)},
      {"c_grad_outer", number(&RunConfig::c_grad_outer)},
      {"c_state_inner", number(&RunConfig::c_state_inner)},
      {"c_grad_inner", number(&RunConfig::c_grad_inner)},
      {"master_seed", number(&RunConfig::master_seed)},
      {"instance_seed", seed(&RunConfig::instance_seed)},
      {"sampler_seed", seed(&RunConfig::sampler_seed)},
      {"dither_seed", seed(&RunConfig::dither_seed)},
      {"out", [](RunConfig& c, const std::string&, const std::string& v, const std::string&) { c.out = v; }},
      {"save_log",
       [](RunConfig& c, const std::string& k, const std::string& v, const std::string& l) {
         c.save_log = parse_bool(k, v, l);
       }},
  };
  return table;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::uint64_t RunConfig::resolved_instance_seed() const {
  return instance_seed ? *instance_seed : derive_key(master_seed, Purpose::Matrix, {0});
}
std::uint64_t RunConfig::resolved_sampler_seed() const {
  return sampler_seed ? *sampler_seed : derive_key(master_seed, Purpose::Sampler, {0});
}
std::uint64_t RunConfig::resolved_dither_seed() const {
  return dither_seed ? *dither_seed : derive_key(master_seed, Purpose::Dither, {0});
}

Regularizer RunConfig::regularizer_value() const {
  switch (regularizer) {
    case Regularizer::Kind::L1: return Regularizer::l1(lambda1);
    case Regularizer::Kind::SquaredL2: return Regularizer::squared_l2(lambda1);
    case Regularizer::Kind::ElasticNet: return Regularizer::elastic_net(lambda1, lambda2);
    case Regularizer::Kind::GroupLasso: return Regularizer::group_lasso(lambda1);
  }
  throw ParameterError("unknown regularizer kind");
}

InstanceParams RunConfig::instance_params() const {
  InstanceParams p;
  p.nodes = nodes;
  p.degree = degree;
  p.block_dim = block_dim;
  p.rows = rows;
  p.reg = regularizer_value();
  p.truth_scale = truth_scale;
  p.seed = resolved_instance_seed();
  return p;
}

QuantizationParams RunConfig::quantization() const {
  QuantizationParams q;
  q.enabled = bits != 0;
  q.bits = bits;
  q.kappa = kappa;
  q.intervals = {c_state_outer, c_grad_outer, c_state_inner, c_grad_inner};
  return q;
}

std::string regularizer_name(Regularizer::Kind kind) {
  switch (kind) {
    case Regularizer::Kind::L1: return "l1";
    case Regularizer::Kind::SquaredL2: return "squared_l2";
    case Regularizer::Kind::ElasticNet: return "elastic_net";
    case Regularizer::Kind::GroupLasso: return "group_lasso";
  }
  return "unknown";
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value,
                   const std::string& line) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'", line);
  it->second(cfg, key, value, line);
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string raw;
  while (std::getline(in, raw)) {
    std::string text = raw;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", raw);
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError("missing key", raw);
    apply_setting(base, key, value, raw);
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string(), path.string());
  std::string first;
  std::getline(in, first);
  const std::string marker = std::string("# ") + kProvenancePrefix;
  if (first.rfind(marker, 0) == 0) {
    RunConfig cfg = parse_provenance_row(first.substr(2));
    cfg.out = base.out;
    return cfg;
  }
  in.clear();
  in.seekg(0);
  return parse_config(in, std::move(base));
}

std::vector<std::string> canonical_settings(const RunConfig& c) {
  std::vector<std::string> s;
  auto add = [&](const std::string& k, const std::string& v) { s.push_back(k + "=" + v); };
  auto num = [](double v) { return format_double(v); };
  add("nodes", std::to_string(c.nodes));
  add("degree", std::to_string(c.degree));
  add("block_dim", std::to_string(c.block_dim));
  add("rows", std::to_string(c.rows));
  add("regularizer", regularizer_name(c.regularizer));
  add("lambda1", num(c.lambda1));
  add("lambda2", num(c.lambda2));
  add("truth_scale", num(c.truth_scale));
  if (!c.instance.empty()) add("instance", c.instance);
  add("step", num(c.step));
  add("step_scale", num(c.step_scale));
  add("inner_iters", std::to_string(c.inner_iters));
  add("inner_scale", std::to_string(c.inner_scale));
  add("outer_iters", std::to_string(c.outer_iters));
  add("force", c.force ? "true" : "false");
  add("bits", c.bits == 0 ? "unquantized" : std::to_string(c.bits));
  add("kappa", num(c.kappa));
  add("c_state_outer", num(c.c_state_outer));
  add("c_grad_outer", num(c.c_grad_outer));
  add("c_state_inner", num(c.c_state_inner));
  add("c_grad_inner", num(c.c_grad_inner));
  add("master_seed", std::to_string(c.master_seed));
  add("instance_seed", std::to_string(c.resolved_instance_seed()));
  add("sampler_seed", std::to_string(c.resolved_sampler_seed()));
  add("dither_seed", std::to_string(c.resolved_dither_seed()));
  add("save_log", c.save_log ? "true" : "false");
  return s;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& token : canonical_settings(cfg)) {
    for (unsigned char ch : token) {
      h ^= ch;
      h *= 0x100000001b3ull;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string provenance_row(const RunConfig& cfg) {
  std::string row = kProvenancePrefix + hex64(config_hash(cfg));
  for (const auto& token : canonical_settings(cfg)) row += " " + token;
  return row;
}

RunConfig parse_provenance_row(const std::string& row) {
  std::istringstream tokens(row);
  std::string token;
  tokens >> token;
  if (token.rfind(kProvenancePrefix, 0) != 0) throw ConfigError("not a provenance row", row);
  const std::string recorded = token.substr(std::string(kProvenancePrefix).size());
  RunConfig cfg;
  while (tokens >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed provenance token '" + token + "'", row);
    apply_setting(cfg, token.substr(0, eq), token.substr(eq + 1), row);
  }
  if (hex64(config_hash(cfg)) != recorded) throw ConfigError("provenance hash mismatch", row);
  return cfg;
}

}  // namespace qprox
