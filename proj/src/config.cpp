#include "blocklink/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "blocklink/errors.hpp"

namespace blocklink {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int as_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
}

std::uint64_t as_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("");
    std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
}

double as_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a finite real, got '" + value + "'");
  }
}

bool as_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config key '" + key + "': expected 0/1/true/false, got '" + value + "'");
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool in_set(double v, std::initializer_list<double> allowed) {
  for (double a : allowed)
    if (v == a) return true;
  return false;
}

bool in_set(int v, std::initializer_list<int> allowed) {
  for (int a : allowed)
    if (v == a) return true;
  return false;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "edges") edges = value;
  else if (key == "features") features = value;
  else if (key == "out") out = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "protocol") protocol = value;
  else if (key == "deterministic") deterministic = as_bool(key, value);
  else if (key == "grid_validation") grid_validation = as_bool(key, value);
  else if (key == "seed") seed = as_u64(key, value);
  else if (key == "lr") lr = as_real(key, value);
  else if (key == "dropout") dropout = as_real(key, value);
  else if (key == "weight_decay") weight_decay = as_real(key, value);
  else if (key == "clip_norm") clip_norm = as_real(key, value);
  else if (key == "epochs") epochs = as_int(key, value);
  else if (key == "anneal_end") anneal_end = as_int(key, value);
  else if (key == "batch_size") batch_size = as_int(key, value);
  else if (key == "train_negatives") train_negatives = as_int(key, value);
  else if (key == "val_negatives") val_negatives = as_int(key, value);
  else if (key == "eval_negatives") eval_negatives = as_int(key, value);
  else if (key == "layers") layers = as_int(key, value);
  else if (key == "heads") heads = as_int(key, value);
  else if (key == "hidden") hidden = as_int(key, value);
  else if (key == "K") K = as_int(key, value);
  else if (key == "tau") tau = as_real(key, value);
  else if (key == "tau_prior") tau_prior = as_real(key, value);
  else if (key == "prior_a") prior_a = as_real(key, value);
  else if (key == "prior_b") prior_b = as_real(key, value);
  else if (key == "taylor_terms") taylor_terms = as_int(key, value);
  else if (key == "dec_hidden") dec_hidden = as_int(key, value);
  else if (key == "dec_mlp") dec_mlp = as_int(key, value);
  else if (key == "d_exp") d_exp = as_int(key, value);
  else if (key == "self_loops") self_loops = as_bool(key, value);
  else if (key == "no_expander") no_expander = as_bool(key, value);
  else if (key == "no_local") no_local = as_bool(key, value);
  else if (key == "no_stick_prior") no_stick_prior = as_bool(key, value);
  else if (key == "no_kl_memberships") no_kl_memberships = as_bool(key, value);
  else if (key == "no_kl_strengths") no_kl_strengths = as_bool(key, value);
  else if (key == "r_train") r_train = as_real(key, value);
  else if (key == "r_valid") r_valid = as_real(key, value);
  else if (key == "r_test") r_test = as_real(key, value);
  else if (key == "n") n = as_int(key, value);
  else if (key == "k") k = as_int(key, value);
  else if (key == "mode") mode = value;
  else if (key == "sampling") sampling = value;
  else if (key == "bias") bias = as_real(key, value);
  else if (key == "hidden_fraction") hidden_fraction = as_real(key, value);
  else if (key == "heuristic") heuristic = value;
  else if (key == "dims") dims = as_int(key, value);
  else if (key == "fd_step") fd_step = as_real(key, value);
  else if (key == "fd_tolerance") fd_tolerance = as_real(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (protocol != "uniform" && protocol != "heart-approx")
    throw ConfigError("config key 'protocol': expected uniform or heart-approx, got '" + protocol + "'");
  if (mode != "inner_product" && mode != "full_osbm")
    throw ConfigError("config key 'mode': expected inner_product or full_osbm, got '" + mode + "'");
  if (sampling != "bernoulli" && sampling != "threshold")
    throw ConfigError("config key 'sampling': expected bernoulli or threshold, got '" + sampling + "'");
  if (heuristic != "cn" && heuristic != "aa" && heuristic != "ra")
    throw ConfigError("config key 'heuristic': expected cn, aa or ra, got '" + heuristic + "'");
  if (!(lr > 0.0)) throw ConfigError("config key 'lr': must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config key 'dropout': must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("config key 'weight_decay': must be non-negative");
  if (!(clip_norm > 0.0)) throw ConfigError("config key 'clip_norm': must be positive");
  if (epochs < 1) throw ConfigError("config key 'epochs': must be at least 1");
  if (anneal_end < 0) throw ConfigError("config key 'anneal_end': must be non-negative");
  if (batch_size < 0) throw ConfigError("config key 'batch_size': must be non-negative");
  if (train_negatives < 1) throw ConfigError("config key 'train_negatives': must be at least 1");
  if (val_negatives < 1) throw ConfigError("config key 'val_negatives': must be at least 1");
  if (eval_negatives < 1) throw ConfigError("config key 'eval_negatives': must be at least 1");
  if (layers < 1) throw ConfigError("config key 'layers': must be at least 1");
  if (heads < 1) throw ConfigError("config key 'heads': must be at least 1");
  if (hidden < 1) throw ConfigError("config key 'hidden': must be at least 1");
  if (hidden % heads != 0) throw ConfigError("config key 'hidden': must be divisible by heads");
  if (K < 1) throw ConfigError("config key 'K': must be at least 1");
  if (!(tau > 0.0)) throw ConfigError("config key 'tau': must be positive");
  if (!(tau_prior > 0.0)) throw ConfigError("config key 'tau_prior': must be positive");
  if (!(prior_a > 0.0)) throw ConfigError("config key 'prior_a': must be positive");
  if (!(prior_b > 0.0)) throw ConfigError("config key 'prior_b': must be positive");
  if (taylor_terms < 1) throw ConfigError("config key 'taylor_terms': must be at least 1");
  if (dec_hidden < 0) throw ConfigError("config key 'dec_hidden': must be non-negative");
  if (dec_mlp < 0) throw ConfigError("config key 'dec_mlp': must be non-negative");
  if (d_exp < 0 || d_exp % 2 != 0) throw ConfigError("config key 'd_exp': must be even and non-negative");
  if (r_train < 0.0 || r_valid < 0.0 || r_test < 0.0)
    throw ConfigError("config key 'r_train/r_valid/r_test': ratios must be non-negative");
  if (std::fabs(r_train + r_valid + r_test - 1.0) > 1e-9)
    throw ConfigError("config key 'r_train/r_valid/r_test': ratios must sum to 1");
  if (n < 1) throw ConfigError("config key 'n': must be at least 1");
  if (k < 1 || k > n) throw ConfigError("config key 'k': must lie in [1, n]");
  if (hidden_fraction < 0.0 || hidden_fraction >= 1.0)
    throw ConfigError("config key 'hidden_fraction': must lie in [0,1)");
  if (dims < -1) throw ConfigError("config key 'dims': must be -1 (full) or non-negative");
  if (!(fd_step > 0.0)) throw ConfigError("config key 'fd_step': must be positive");
  if (!(fd_tolerance > 0.0)) throw ConfigError("config key 'fd_tolerance': must be positive");

  if (grid_validation) {
    if (!in_set(lr, {1e-3, 5e-3}))
      throw ConfigError("config key 'lr': grid validation allows 0.001 or 0.005");
    if (dropout > 0.3) throw ConfigError("config key 'dropout': grid validation allows [0, 0.3]");
    if (!in_set(weight_decay, {0.0, 1e-5, 1e-4}))
      throw ConfigError("config key 'weight_decay': grid validation allows 0, 1e-5 or 1e-4");
    if (!in_set(d_exp, {6, 8, 10, 12}))
      throw ConfigError("config key 'd_exp': grid validation allows 6, 8, 10 or 12");
    if (!in_set(layers, {3, 4, 5, 6}))
      throw ConfigError("config key 'layers': grid validation allows 3, 4, 5 or 6");
    if (heads != 4) throw ConfigError("config key 'heads': grid validation requires 4");
    if (!in_set(hidden, {128, 256}))
      throw ConfigError("config key 'hidden': grid validation allows 128 or 256");
    if (!in_set(tau, {0.8, 1.0, 1.2}))
      throw ConfigError("config key 'tau': grid validation allows 0.8, 1.0 or 1.2");
    if (tau_prior != 0.5) throw ConfigError("config key 'tau_prior': grid validation requires 0.5");
    if (prior_a != 10.0 || prior_b != 0.1)
      throw ConfigError("config key 'prior_a/prior_b': grid validation requires 10.0 and 0.1");
    if (!in_set(anneal_end, {60, 80}))
      throw ConfigError("config key 'anneal_end': grid validation allows 60 or 80");
    if (epochs != 200) throw ConfigError("config key 'epochs': grid validation requires 200");
    if (clip_norm != 5.0) throw ConfigError("config key 'clip_norm': grid validation requires 5.0");
  }
}

ModelConfig RunConfig::model_config(int num_nodes, int feat_dim) const {
  ModelConfig m;
  m.num_nodes = num_nodes;
  m.feat_dim = feat_dim;
  m.layers = layers;
  m.heads = heads;
  m.hidden = hidden;
  m.dropout = dropout;
  m.K = K;
  m.tau = tau;
  m.tau_prior = tau_prior;
  m.prior_a = prior_a;
  m.prior_b = prior_b;
  m.taylor_terms = taylor_terms;
  m.dec_hidden = dec_hidden;
  m.dec_mlp = dec_mlp;
  m.d_exp = d_exp;
  m.self_loops = self_loops;
  m.no_expander = no_expander;
  m.no_local = no_local;
  m.no_stick_prior = no_stick_prior;
  m.no_kl_memberships = no_kl_memberships;
  m.no_kl_strengths = no_kl_strengths;
  return m;
}

TrainConfig RunConfig::train_config(int num_nodes, int feat_dim) const {
  TrainConfig t;
  t.model = model_config(num_nodes, feat_dim);
  t.lr = lr;
  t.weight_decay = weight_decay;
  t.clip_norm = clip_norm;
  t.epochs = epochs;
  t.anneal_end = anneal_end;
  t.train_negatives = train_negatives;
  t.batch_size = batch_size;
  t.val_negatives = val_negatives;
  t.seed = seed;
  return t;
}

SyntheticMode RunConfig::synthetic_mode() const {
  return mode == "inner_product" ? SyntheticMode::inner_product : SyntheticMode::full_osbm;
}

SyntheticSampling RunConfig::synthetic_sampling() const {
  return sampling == "bernoulli" ? SyntheticSampling::bernoulli : SyntheticSampling::threshold;
}

namespace {

void apply_line(RunConfig& cfg, std::set<std::string>& seen, const std::string& raw,
                const std::string& where) {
  std::string line = raw;
  std::size_t hash = line.find('#');
  if (hash != std::string::npos) line = line.substr(0, hash);
  line = trim(line);
  if (line.empty()) return;
  std::size_t eq = line.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config " + where + ": expected key = value, got '" + trim(raw) + "'");
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError("config " + where + ": empty key");
  cfg.apply(key, value);
  seen.insert(key);
}

RunConfig parse_all(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::set<std::string> seen;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      apply_line(cfg, seen, line, path + ":" + std::to_string(lineno));
    }
  }
  for (const std::string& ov : overrides) apply_line(cfg, seen, ov, "override");
  if (!seen.count("bias")) cfg.bias = cfg.sampling == "threshold" ? 0.0 : -2.0;
  cfg.validate();
  return cfg;
}

}  // namespace

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  return parse_all(path, overrides);
}

RunConfig parse_overrides(const std::vector<std::string>& overrides) {
  return parse_all("", overrides);
}

std::string config_snapshot(const RunConfig& c, const std::string& command) {
  std::ostringstream out;
  out << "# command: " << command << "\n";
  // Sorted by key; every field appears so replaying the snapshot is exact.
  out << "K = " << c.K << "\n";
  out << "anneal_end = " << c.anneal_end << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "bias = " << fmt17(c.bias) << "\n";
  out << "checkpoint = " << c.checkpoint << "\n";
  out << "clip_norm = " << fmt17(c.clip_norm) << "\n";
  out << "d_exp = " << c.d_exp << "\n";
  out << "dec_hidden = " << c.dec_hidden << "\n";
  out << "dec_mlp = " << c.dec_mlp << "\n";
  out << "deterministic = " << (c.deterministic ? 1 : 0) << "\n";
  out << "dims = " << c.dims << "\n";
  out << "dropout = " << fmt17(c.dropout) << "\n";
  out << "edges = " << c.edges << "\n";
  out << "epochs = " << c.epochs << "\n";
  out << "eval_negatives = " << c.eval_negatives << "\n";
  out << "fd_step = " << fmt17(c.fd_step) << "\n";
  out << "fd_tolerance = " << fmt17(c.fd_tolerance) << "\n";
  out << "features = " << c.features << "\n";
  out << "grid_validation = " << (c.grid_validation ? 1 : 0) << "\n";
  out << "heads = " << c.heads << "\n";
  out << "heuristic = " << c.heuristic << "\n";
  out << "hidden = " << c.hidden << "\n";
  out << "hidden_fraction = " << fmt17(c.hidden_fraction) << "\n";
  out << "k = " << c.k << "\n";
  out << "layers = " << c.layers << "\n";
  out << "lr = " << fmt17(c.lr) << "\n";
  out << "mode = " << c.mode << "\n";
  out << "n = " << c.n << "\n";
  out << "no_expander = " << (c.no_expander ? 1 : 0) << "\n";
  out << "no_kl_memberships = " << (c.no_kl_memberships ? 1 : 0) << "\n";
  out << "no_kl_strengths = " << (c.no_kl_strengths ? 1 : 0) << "\n";
  out << "no_local = " << (c.no_local ? 1 : 0) << "\n";
  out << "no_stick_prior = " << (c.no_stick_prior ? 1 : 0) << "\n";
  out << "out = " << c.out << "\n";
  out << "prior_a = " << fmt17(c.prior_a) << "\n";
  out << "prior_b = " << fmt17(c.prior_b) << "\n";
  out << "protocol = " << c.protocol << "\n";
  out << "r_test = " << fmt17(c.r_test) << "\n";
  out << "r_train = " << fmt17(c.r_train) << "\n";
  out << "r_valid = " << fmt17(c.r_valid) << "\n";
  out << "sampling = " << c.sampling << "\n";
  out << "seed = " << c.seed << "\n";
  out << "self_loops = " << (c.self_loops ? 1 : 0) << "\n";
  out << "tau = " << fmt17(c.tau) << "\n";
  out << "tau_prior = " << fmt17(c.tau_prior) << "\n";
  out << "taylor_terms = " << c.taylor_terms << "\n";
  out << "train_negatives = " << c.train_negatives << "\n";
  out << "val_negatives = " << c.val_negatives << "\n";
  out << "weight_decay = " << fmt17(c.weight_decay) << "\n";
  return out.str();
}

void write_config_snapshot(const std::string& path, const RunConfig& cfg, const std::string& command) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config snapshot: " + path);
  out << config_snapshot(cfg, command);
  if (!out) throw IoError("failed while writing config snapshot: " + path);
}

}  // namespace blocklink
