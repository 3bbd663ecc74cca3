#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blocklink/synthetic.hpp"
#include "blocklink/train.hpp"

namespace blocklink {

// Flat key = value run configuration. Unknown keys are rejected; every field
// has a default so an empty file is a valid configuration.
struct RunConfig {
  // Inputs and outputs
  std::string edges;     // dataset edge list path
  std::string features;  // node feature CSV path; empty = none
  std::string out = "out";
  std::string checkpoint;  // model input for eval/reconstruct/export

  // Run behavior
  std::string protocol = "uniform";  // uniform | heart-approx
  bool deterministic = false;
  bool grid_validation = false;
  std::uint64_t seed = 0;

  // Optimization
  double lr = 5e-3;
  double dropout = 0.0;
  double weight_decay = 0.0;
  double clip_norm = 5.0;
  int epochs = 200;
  int anneal_end = 80;
  int batch_size = 0;
  int train_negatives = 1;
  int val_negatives = 100;
  int eval_negatives = 500;

  // Model
  int layers = 3;
  int heads = 4;
  int hidden = 128;
  int K = 10;
  double tau = 1.0;
  double tau_prior = 0.5;
  double prior_a = 10.0;
  double prior_b = 0.1;
  int taylor_terms = 10;
  int dec_hidden = 0;
  int dec_mlp = 0;
  int d_exp = 8;
  bool self_loops = true;
  bool no_expander = false;
  bool no_local = false;
  bool no_stick_prior = false;
  bool no_kl_memberships = false;
  bool no_kl_strengths = false;

  // Split ratios
  double r_train = 0.85;
  double r_valid = 0.05;
  double r_test = 0.10;

  // Synthetic generator
  int n = 100;
  int k = 10;
  std::string mode = "inner_product";  // inner_product | full_osbm
  std::string sampling = "threshold";  // bernoulli | threshold
  double bias = 0.0;  // when not set explicitly: 0 (threshold), -2 (bernoulli)
  double hidden_fraction = 0.15;

  // Command-specific
  std::string heuristic = "ra";  // cn | aa | ra
  int dims = -1;                 // reconstruct truncation; -1 = full K
  double fd_step = 1e-5;
  double fd_tolerance = 1e-5;

  void apply(const std::string& key, const std::string& value);
  void validate() const;

  ModelConfig model_config(int num_nodes, int feat_dim) const;
  TrainConfig train_config(int num_nodes, int feat_dim) const;
  SyntheticMode synthetic_mode() const;
  SyntheticSampling synthetic_sampling() const;
};

// File lines then overrides, defaults filled, validated. The mode-dependent
// bias default is resolved here so the snapshot carries concrete values.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides);
RunConfig parse_overrides(const std::vector<std::string>& overrides);

// Sorted key = value lines covering every field; reparsing the snapshot
// reproduces the configuration byte for byte.
std::string config_snapshot(const RunConfig& cfg, const std::string& command);
void write_config_snapshot(const std::string& path, const RunConfig& cfg, const std::string& command);

}  // namespace blocklink
