#include "blocklink/model.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <utility>

#include "blocklink/errors.hpp"
#include "blocklink/special.hpp"

namespace blocklink {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

EncoderConfig ModelConfig::encoder() const {
  EncoderConfig e;
  e.num_nodes = num_nodes;
  e.feat_dim = feat_dim;
  e.layers = layers;
  e.heads = heads;
  e.head_dim = hidden / heads;
  e.dropout = dropout;
  return e;
}

VariationalConfig ModelConfig::variational() const {
  VariationalConfig v;
  v.K = K;
  v.tau = tau;
  v.tau_prior = tau_prior;
  v.prior_a = prior_a;
  v.prior_b = prior_b;
  v.taylor_terms = taylor_terms;
  return v;
}

DecoderConfig ModelConfig::decoder() const {
  DecoderConfig d;
  d.K = K;
  d.d_hidden = dec_hidden;
  d.d_mlp = dec_mlp;
  d.feat_dim = feat_dim;
  return d;
}

TopologyConfig ModelConfig::topology() const {
  TopologyConfig t;
  t.use_local = !no_local;
  t.use_expander = !no_expander;
  t.self_loops = self_loops;
  t.d_exp = d_exp;
  return t;
}

ElboTerms ModelConfig::elbo_terms() const {
  ElboTerms t;
  t.sticks = !no_stick_prior;
  t.memberships = !no_kl_memberships;
  t.strengths = !no_kl_strengths;
  return t;
}

void ModelConfig::validate() const {
  if (num_nodes <= 0) throw ConfigError("model: num_nodes must be positive");
  if (feat_dim < 0) throw ConfigError("model: feat_dim must be non-negative");
  if (layers < 1) throw ConfigError("model: layers must be at least 1");
  if (heads < 1 || hidden < 1) throw ConfigError("model: heads and hidden must be positive");
  if (hidden % heads != 0) throw ConfigError("model: hidden width must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0,1)");
  if (K < 1) throw ConfigError("model: K must be at least 1");
  if (!(tau > 0.0) || !(tau_prior > 0.0)) throw ConfigError("model: temperatures must be positive");
  if (!(prior_a > 0.0) || !(prior_b > 0.0)) throw ConfigError("model: prior shapes must be positive");
  if (taylor_terms < 1) throw ConfigError("model: taylor_terms must be at least 1");
  if (dec_hidden < 0 || dec_mlp < 0) throw ConfigError("model: decoder widths must be non-negative");
  if (d_exp < 0 || d_exp % 2 != 0) throw ConfigError("model: d_exp must be even and non-negative");
}

Model Model::init(const ModelConfig& cfg, SeededRng& init_rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  encoder_init_params(m.params, cfg.encoder(), init_rng);
  variational_init_params(m.params, cfg.encoder().width(), cfg.variational(), init_rng);
  decoder_init_params(m.params, cfg.decoder(), init_rng);
  m.state = encoder_init_state(cfg.encoder());
  return m;
}

Tensor Model::encode(const Tensor* features, const AttentionTopology& topo, bool training,
                     SeededRng* dropout_rng) {
  EncoderConfig ecfg = cfg.encoder();
  return encoder_forward(params, ecfg, state, features, topo, training, dropout_rng);
}

LatentSample Model::sample(const Tensor& h, const LatentNoise& noise) {
  return sample_latents(params, cfg.variational(), h, noise, !cfg.no_stick_prior);
}

LatentSample Model::expected(const Tensor& h) {
  return expected_latents(params, cfg.variational(), h, !cfg.no_stick_prior);
}

ElboLoss Model::loss(const LatentSample& s, const std::vector<int>& us, const std::vector<int>& vs,
                     const std::vector<double>& labels, const Tensor* features, double anneal_w) {
  return elbo_loss(params, s, us, vs, labels, features, cfg.variational(), anneal_w, cfg.elbo_terms());
}

std::vector<double> Model::score_pairs(const Tensor* features, const AttentionTopology& topo,
                                       const std::vector<int>& us, const std::vector<int>& vs) {
  NoGradGuard guard;
  Tensor h = encode(features, topo, false, nullptr);
  LatentSample s = expected(h);
  Tensor logits = pairs_dot(decode(params, s.z), us, vs);
  std::vector<double> out(logits.vec().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(logits.vec()[i]);
  return out;
}

std::vector<double> Model::score_pairs_sampled(const Tensor* features, const AttentionTopology& topo,
                                               const std::vector<int>& us, const std::vector<int>& vs,
                                               SeededRng& noise_rng) {
  NoGradGuard guard;
  Tensor h = encode(features, topo, false, nullptr);
  LatentNoise noise = draw_latent_noise(cfg.num_nodes, cfg.K, noise_rng);
  LatentSample s = sample(h, noise);
  Tensor logits = pairs_dot(decode(params, s.z), us, vs);
  std::vector<double> out(logits.vec().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(logits.vec()[i]);
  return out;
}

namespace {

const char* const kCheckpointHeader = "blocklink-checkpoint";
const int kCheckpointVersion = 1;

void write_meta(std::ofstream& out, const ModelConfig& c) {
  out << "meta num_nodes " << c.num_nodes << "\n";
  out << "meta feat_dim " << c.feat_dim << "\n";
  out << "meta layers " << c.layers << "\n";
  out << "meta heads " << c.heads << "\n";
  out << "meta hidden " << c.hidden << "\n";
  out << "meta dropout " << fmt17(c.dropout) << "\n";
  out << "meta K " << c.K << "\n";
  out << "meta tau " << fmt17(c.tau) << "\n";
  out << "meta tau_prior " << fmt17(c.tau_prior) << "\n";
  out << "meta prior_a " << fmt17(c.prior_a) << "\n";
  out << "meta prior_b " << fmt17(c.prior_b) << "\n";
  out << "meta taylor_terms " << c.taylor_terms << "\n";
  out << "meta dec_hidden " << c.dec_hidden << "\n";
  out << "meta dec_mlp " << c.dec_mlp << "\n";
  out << "meta d_exp " << c.d_exp << "\n";
  out << "meta self_loops " << (c.self_loops ? 1 : 0) << "\n";
  out << "meta no_expander " << (c.no_expander ? 1 : 0) << "\n";
  out << "meta no_local " << (c.no_local ? 1 : 0) << "\n";
  out << "meta no_stick_prior " << (c.no_stick_prior ? 1 : 0) << "\n";
  out << "meta no_kl_memberships " << (c.no_kl_memberships ? 1 : 0) << "\n";
  out << "meta no_kl_strengths " << (c.no_kl_strengths ? 1 : 0) << "\n";
}

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw ParseError("checkpoint: missing meta key " + key);
  try {
    std::size_t pos = 0;
    int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw ParseError("checkpoint: bad integer for " + key);
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError("checkpoint: bad integer for " + key);
  }
}

double meta_real(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw ParseError("checkpoint: missing meta key " + key);
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw ParseError("checkpoint: bad real for " + key);
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError("checkpoint: bad real for " + key);
  }
}

bool meta_flag(const std::map<std::string, std::string>& meta, const std::string& key) {
  int v = meta_int(meta, key);
  if (v != 0 && v != 1) throw ParseError("checkpoint: flag " + key + " must be 0 or 1");
  return v == 1;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const AttentionTopology& topo) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << kCheckpointHeader << " " << kCheckpointVersion << "\n";
  write_meta(out, model.cfg);
  for (const std::string& name : model.params.names()) {
    const Tensor& t = model.params.at(name);
    out << "param " << name << " " << t.ndim();
    for (int d : t.shape()) out << " " << d;
    out << "\n";
    const std::vector<double>& v = t.vec();
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt17(v[i]);
    out << "\n";
  }
  for (std::size_t i = 0; i < model.state.bn_mean.size(); ++i) {
    out << "buffer bn_mean." << i << " " << model.state.bn_mean[i].size() << "\n";
    for (std::size_t j = 0; j < model.state.bn_mean[i].size(); ++j)
      out << (j ? " " : "") << fmt17(model.state.bn_mean[i][j]);
    out << "\n";
    out << "buffer bn_var." << i << " " << model.state.bn_var[i].size() << "\n";
    for (std::size_t j = 0; j < model.state.bn_var[i].size(); ++j)
      out << (j ? " " : "") << fmt17(model.state.bn_var[i][j]);
    out << "\n";
  }
  out << "topology " << topo.num_nodes << " " << topo.num_edges() << "\n";
  for (std::size_t i = 0; i < topo.num_edges(); ++i)
    out << topo.src[i] << " " << topo.dst[i] << " " << topo.type[i] << "\n";
  out << "end\n";
  if (!out) throw IoError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  std::string header;
  int version = -1;
  if (!(in >> header >> version) || header != kCheckpointHeader)
    throw ParseError("checkpoint: bad header in " + path);
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));

  std::map<std::string, std::string> meta;
  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> tensors;
  std::map<std::string, std::vector<double>> buffers;
  int topo_nodes = -1;
  std::vector<int> tsrc, tdst, ttype;
  bool saw_end = false;

  std::string word;
  while (in >> word) {
    if (word == "meta") {
      std::string key, value;
      if (!(in >> key >> value)) throw ParseError("checkpoint: truncated meta line");
      meta[key] = value;
    } else if (word == "param") {
      std::string name;
      int ndim = 0;
      if (!(in >> name >> ndim) || ndim < 1 || ndim > 4)
        throw ParseError("checkpoint: bad param header");
      std::vector<int> shape(ndim);
      std::size_t total = 1;
      for (int& d : shape) {
        if (!(in >> d) || d <= 0) throw ParseError("checkpoint: bad shape for " + name);
        total *= static_cast<std::size_t>(d);
      }
      std::vector<double> values(total);
      for (double& v : values)
        if (!(in >> v)) throw ParseError("checkpoint: truncated values for " + name);
      tensors[name] = {std::move(shape), std::move(values)};
    } else if (word == "buffer") {
      std::string name;
      std::size_t len = 0;
      if (!(in >> name >> len)) throw ParseError("checkpoint: bad buffer header");
      std::vector<double> values(len);
      for (double& v : values)
        if (!(in >> v)) throw ParseError("checkpoint: truncated buffer " + name);
      buffers[name] = std::move(values);
    } else if (word == "topology") {
      std::size_t n_edges = 0;
      if (!(in >> topo_nodes >> n_edges) || topo_nodes <= 0)
        throw ParseError("checkpoint: bad topology header");
      tsrc.resize(n_edges);
      tdst.resize(n_edges);
      ttype.resize(n_edges);
      for (std::size_t i = 0; i < n_edges; ++i) {
        if (!(in >> tsrc[i] >> tdst[i] >> ttype[i])) throw ParseError("checkpoint: truncated topology");
        if (tsrc[i] < 0 || tsrc[i] >= topo_nodes || tdst[i] < 0 || tdst[i] >= topo_nodes)
          throw ParseError("checkpoint: topology edge out of range");
        if (ttype[i] < 0 || ttype[i] > 2) throw ParseError("checkpoint: bad edge type");
      }
    } else if (word == "end") {
      saw_end = true;
      break;
    } else {
      throw ParseError("checkpoint: unknown record '" + word + "'");
    }
  }
  if (!saw_end) throw ParseError("checkpoint: missing end marker");
  if (topo_nodes < 0) throw ParseError("checkpoint: missing topology section");

  ModelConfig cfg;
  cfg.num_nodes = meta_int(meta, "num_nodes");
  cfg.feat_dim = meta_int(meta, "feat_dim");
  cfg.layers = meta_int(meta, "layers");
  cfg.heads = meta_int(meta, "heads");
  cfg.hidden = meta_int(meta, "hidden");
  cfg.dropout = meta_real(meta, "dropout");
  cfg.K = meta_int(meta, "K");
  cfg.tau = meta_real(meta, "tau");
  cfg.tau_prior = meta_real(meta, "tau_prior");
  cfg.prior_a = meta_real(meta, "prior_a");
  cfg.prior_b = meta_real(meta, "prior_b");
  cfg.taylor_terms = meta_int(meta, "taylor_terms");
  cfg.dec_hidden = meta_int(meta, "dec_hidden");
  cfg.dec_mlp = meta_int(meta, "dec_mlp");
  cfg.d_exp = meta_int(meta, "d_exp");
  cfg.self_loops = meta_flag(meta, "self_loops");
  cfg.no_expander = meta_flag(meta, "no_expander");
  cfg.no_local = meta_flag(meta, "no_local");
  cfg.no_stick_prior = meta_flag(meta, "no_stick_prior");
  cfg.no_kl_memberships = meta_flag(meta, "no_kl_memberships");
  cfg.no_kl_strengths = meta_flag(meta, "no_kl_strengths");
  if (topo_nodes != cfg.num_nodes) throw ParseError("checkpoint: topology node count disagrees with meta");

  Checkpoint ck;
  ck.cfg = cfg;
  SeededRng scratch(0);
  ck.model = Model::init(cfg, scratch);

  for (const std::string& name : ck.model.params.names()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParseError("checkpoint: missing tensor " + name);
    Tensor& t = ck.model.params.at(name);
    if (it->second.first != t.shape())
      throw ParseError("checkpoint: shape mismatch for " + name);
    t.vec() = it->second.second;
    tensors.erase(it);
  }
  if (!tensors.empty())
    throw ParseError("checkpoint: unexpected tensor " + tensors.begin()->first);

  for (std::size_t i = 0; i < ck.model.state.bn_mean.size(); ++i) {
    auto want = [&](const std::string& prefix, std::vector<double>& dst) {
      std::string key = prefix + "." + std::to_string(i);
      auto it = buffers.find(key);
      if (it == buffers.end()) throw ParseError("checkpoint: missing buffer " + key);
      if (it->second.size() != dst.size()) throw ParseError("checkpoint: buffer size mismatch for " + key);
      dst = it->second;
      buffers.erase(it);
    };
    want("bn_mean", ck.model.state.bn_mean[i]);
    want("bn_var", ck.model.state.bn_var[i]);
  }
  if (!buffers.empty()) throw ParseError("checkpoint: unexpected buffer " + buffers.begin()->first);

  AttentionTopology& topo = ck.topo;
  topo.num_nodes = topo_nodes;
  topo.src = std::move(tsrc);
  topo.dst = std::move(tdst);
  topo.type = std::move(ttype);
  std::set<std::pair<int, int>> local_set, expander_set;
  std::vector<char> covered(topo_nodes, 0);
  for (std::size_t i = 0; i < topo.num_edges(); ++i) {
    covered[topo.dst[i]] = 1;
    int a = topo.src[i], b = topo.dst[i];
    if (a > b) std::swap(a, b);
    switch (static_cast<EdgeType>(topo.type[i])) {
      case EdgeType::local:
        ++topo.n_local;
        local_set.insert({a, b});
        break;
      case EdgeType::expander:
        ++topo.n_expander;
        expander_set.insert({a, b});
        break;
      case EdgeType::self:
        ++topo.n_self;
        break;
    }
  }
  topo.full_coverage = true;
  for (char c : covered)
    if (!c) topo.full_coverage = false;
  topo.undirected_local.assign(local_set.begin(), local_set.end());
  topo.undirected_expander.assign(expander_set.begin(), expander_set.end());
  return ck;
}

}  // namespace blocklink
