#include "pggat/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pggat {

void PolicyConfig::validate() const {
  if (pad_to < 1) throw std::invalid_argument("pad_to must be >= 1");
  if (k_neighbors < 1) throw std::invalid_argument("k_neighbors must be >= 1");
  if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
    throw std::invalid_argument("embed_dim must be a positive multiple of heads");
  if (tau_embed_dim < 1 || context_dim < 1) throw std::invalid_argument("bad embedding dimensions");
  if (!(clip_C > 0.0)) throw std::invalid_argument("clip_C must be positive");
  if (!(mask_Z < -clip_C)) throw std::invalid_argument("mask_Z must dominate the clipped logits");
}

std::string to_json_string(const PolicyConfig& c) {
  nlohmann::json j;
  j["pad_to"] = c.pad_to;
  j["k_neighbors"] = c.k_neighbors;
  j["embed_dim"] = c.embed_dim;
  j["heads"] = c.heads;
  j["tau_embed_dim"] = c.tau_embed_dim;
  j["context_dim"] = c.context_dim;
  j["clip_C"] = c.clip_C;
  j["mask_Z"] = c.mask_Z;
  j["use_edge_features"] = c.use_edge_features;
  j["use_global_embedding"] = c.use_global_embedding;
  j["use_horizon_in_embedding"] = c.use_horizon_in_embedding;
  return j.dump();
}

PolicyConfig policy_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PolicyConfig c;
  c.pad_to = j.value("pad_to", c.pad_to);
  c.k_neighbors = j.value("k_neighbors", c.k_neighbors);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.heads = j.value("heads", c.heads);
  c.tau_embed_dim = j.value("tau_embed_dim", c.tau_embed_dim);
  c.context_dim = j.value("context_dim", c.context_dim);
  c.clip_C = j.value("clip_C", c.clip_C);
  c.mask_Z = j.value("mask_Z", c.mask_Z);
  c.use_edge_features = j.value("use_edge_features", c.use_edge_features);
  c.use_global_embedding = j.value("use_global_embedding", c.use_global_embedding);
  c.use_horizon_in_embedding = j.value("use_horizon_in_embedding", c.use_horizon_in_embedding);
  c.validate();
  return c;
}

std::vector<NamedMat> parameter_tensors(PolicyParameters& p) {
  std::vector<NamedMat> out;
  out.push_back({"encoder.input_projection", &p.encoder.input_projection});
  const auto add_layer = [&out](const char* prefix, GatLayerParameters& layer) {
    for (std::size_t h = 0; h < layer.head_W.size(); ++h) {
      out.push_back({std::string(prefix) + ".head" + std::to_string(h) + ".W", &layer.head_W[h]});
      out.push_back({std::string(prefix) + ".head" + std::to_string(h) + ".a", &layer.head_a[h]});
    }
    out.push_back({std::string(prefix) + ".merge", &layer.merge});
  };
  add_layer("encoder.layer1", p.encoder.layer1);
  add_layer("encoder.layer2", p.encoder.layer2);
  out.push_back({"head.vehicle_query", &p.head.vehicle_query});
  out.push_back({"head.tau_embed.weight", &p.head.tau_embed_weight});
  out.push_back({"head.tau_embed.bias", &p.head.tau_embed_bias});
  out.push_back({"head.context_projection", &p.head.context_projection});
  out.push_back({"head.compat_query", &p.head.compat_query});
  out.push_back({"head.compat_key", &p.head.compat_key});
  return out;
}

std::vector<std::pair<std::string, std::pair<int, int>>> expected_shapes(const PolicyConfig& c) {
  std::vector<std::pair<std::string, std::pair<int, int>>> out;
  const int hd = c.head_dim();
  out.push_back({"encoder.input_projection", {c.feature_dim(), c.embed_dim}});
  for (const char* layer : {"encoder.layer1", "encoder.layer2"}) {
    for (int h = 0; h < c.heads; ++h) {
      out.push_back({std::string(layer) + ".head" + std::to_string(h) + ".W", {c.embed_dim, hd}});
      out.push_back({std::string(layer) + ".head" + std::to_string(h) + ".a", {1, 2 * hd}});
    }
    out.push_back({std::string(layer) + ".merge", {c.heads * hd, c.embed_dim}});
  }
  out.push_back({"head.vehicle_query", {c.vehicle_dim(), c.embed_dim}});
  out.push_back({"head.tau_embed.weight", {1, c.tau_embed_dim}});
  out.push_back({"head.tau_embed.bias", {1, c.tau_embed_dim}});
  out.push_back({"head.context_projection", {c.context_input_dim(), c.context_dim}});
  out.push_back({"head.compat_query", {c.context_dim, c.context_dim}});
  out.push_back({"head.compat_key", {c.embed_dim, c.context_dim}});
  return out;
}

PolicyParameters init_parameters(const PolicyConfig& c, std::uint64_t seed) {
  c.validate();
  PolicyParameters p;
  p.encoder.layer1.head_W.resize(c.heads);
  p.encoder.layer1.head_a.resize(c.heads);
  p.encoder.layer2.head_W.resize(c.heads);
  p.encoder.layer2.head_a.resize(c.heads);
  p.head.clip_C = c.clip_C;
  p.head.mask_Z = c.mask_Z;
  p.head.use_global_embedding = c.use_global_embedding;
  p.head.use_horizon_in_embedding = c.use_horizon_in_embedding;

  const auto shapes = expected_shapes(c);
  auto tensors = parameter_tensors(p);
  if (shapes.size() != tensors.size()) throw std::logic_error("parameter enumeration mismatch");

  Rng rng(mix_seed(seed, 0x1417ull));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto [rows, cols] = shapes[i].second;
    Mat m(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& x : m.v) x = rng.uniform(-bound, bound);
    *tensors[i].mat = std::move(m);
  }
  return p;
}

PolicyParameters zeros_like(const PolicyParameters& params) {
  PolicyParameters out = params;
  for (auto& t : parameter_tensors(out)) t.mat->fill(0.0);
  return out;
}

void validate_shapes(PolicyParameters& params, const PolicyConfig& config) {
  const auto shapes = expected_shapes(config);
  auto tensors = parameter_tensors(params);
  if (shapes.size() != tensors.size())
    throw std::invalid_argument("parameter count does not match config");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (tensors[i].name != shapes[i].first)
      throw std::invalid_argument("unexpected tensor " + tensors[i].name);
    if (tensors[i].mat->rows != shapes[i].second.first ||
        tensors[i].mat->cols != shapes[i].second.second)
      throw std::invalid_argument("tensor " + tensors[i].name + " has the wrong shape");
  }
}

std::size_t parameter_count(PolicyParameters& params) {
  std::size_t total = 0;
  for (auto& t : parameter_tensors(params)) total += t.mat->size();
  return total;
}

double get_flat(PolicyParameters& params, std::size_t index) {
  for (auto& t : parameter_tensors(params)) {
    if (index < t.mat->size()) return t.mat->v[index];
    index -= t.mat->size();
  }
  throw std::out_of_range("flat parameter index");
}

void add_flat(PolicyParameters& params, std::size_t index, double delta) {
  for (auto& t : parameter_tensors(params)) {
    if (index < t.mat->size()) {
      t.mat->v[index] += delta;
      return;
    }
    index -= t.mat->size();
  }
  throw std::out_of_range("flat parameter index");
}

void save_checkpoint(const std::string& path, const PolicyConfig& config, PolicyParameters& params,
                     const TrainingStateMeta* training) {
  validate_shapes(params, config);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "pggat-checkpoint v1\n";
  out << "config " << to_json_string(config) << "\n";
  if (training) {
    nlohmann::json j;
    j["next_batch"] = training->next_batch;
    j["baseline"] = training->baseline;
    j["baseline_initialized"] = training->baseline_initialized;
    out << "training_state " << j.dump() << "\n";
  }
  auto tensors = parameter_tensors(params);
  out << "tensors " << tensors.size() << "\n";
  char buf[64];
  for (auto& t : tensors) {
    out << "tensor " << t.name << " " << t.mat->rows << " " << t.mat->cols << "\n";
    for (int r = 0; r < t.mat->rows; ++r) {
      for (int c = 0; c < t.mat->cols; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", (*t.mat)(r, c));
        out << (c ? " " : "") << buf;
      }
      out << "\n";
    }
  }
  out << "end\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("truncated checkpoint");
  if (line.rfind("pggat-checkpoint", 0) != 0) throw FormatError("not a pggat checkpoint");
  if (line != "pggat-checkpoint v1") throw VersionError("unsupported checkpoint version: " + line);

  if (!std::getline(in, line) || line.rfind("config ", 0) != 0)
    throw FormatError("missing config line");
  Checkpoint ckpt;
  ckpt.config = policy_config_from_json(line.substr(7));

  if (!std::getline(in, line)) throw FormatError("truncated checkpoint");
  if (line.rfind("training_state ", 0) == 0) {
    const auto j = nlohmann::json::parse(line.substr(15));
    TrainingStateMeta meta;
    meta.next_batch = j.value("next_batch", 0L);
    meta.baseline = j.value("baseline", 0.0);
    meta.baseline_initialized = j.value("baseline_initialized", false);
    ckpt.training = meta;
    if (!std::getline(in, line)) throw FormatError("truncated checkpoint");
  }

  std::size_t tensor_count = 0;
  {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag >> tensor_count) || tag != "tensors") throw FormatError("missing tensors line");
  }

  const auto shapes = expected_shapes(ckpt.config);
  if (tensor_count != shapes.size())
    throw std::invalid_argument("checkpoint tensor count does not match config");

  ckpt.params = init_parameters(ckpt.config, 0);
  auto tensors = parameter_tensors(ckpt.params);
  for (std::size_t i = 0; i < tensor_count; ++i) {
    if (!std::getline(in, line)) throw FormatError("truncated checkpoint");
    std::istringstream ls(line);
    std::string tag, name;
    int rows = 0, cols = 0;
    if (!(ls >> tag >> name >> rows >> cols) || tag != "tensor")
      throw FormatError("malformed tensor header");
    if (name != shapes[i].first) throw std::invalid_argument("unexpected tensor " + name);
    if (rows != shapes[i].second.first || cols != shapes[i].second.second)
      throw std::invalid_argument("tensor " + name + " has the wrong shape for the config");
    Mat& m = *tensors[i].mat;
    for (int r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw FormatError("truncated tensor data");
      std::istringstream vs(line);
      for (int c = 0; c < cols; ++c)
        if (!(vs >> m(r, c))) throw FormatError("malformed tensor row");
    }
  }
  if (!std::getline(in, line) || line != "end") throw FormatError("missing end marker");
  return ckpt;
}

NetworkState derive_for_policy(const PolicyConfig& config, const InstanceSpec& instance) {
  const int n = instance.network.node_count;
  if (config.pad_to < n)
    throw std::invalid_argument("pad_to smaller than the instance node count");
  const int k = std::min(config.k_neighbors, n - 1);
  NetworkState state = derive_network_state(instance, k, config.pad_to);
  if (!config.use_edge_features) state.edge_features_e.fill(1.0);
  return state;
}

ActionDistribution policy_forward(const PolicyConfig& config, const PolicyParameters& params,
                                  const NetworkState& state, const VehicleState& vehicle,
                                  const std::vector<std::uint8_t>& legal, double horizon_U,
                                  int customer_count) {
  if (state.node_features_X.cols != config.feature_dim())
    throw std::invalid_argument("policy_forward: state was derived with a different pad_to");
  const NodeEmbeddings embeddings = encode(state, params.encoder);
  return action_distribution(embeddings, vehicle, legal, params.head, horizon_U, customer_count);
}

PolicyFn make_policy_fn(const PolicyConfig& config, std::shared_ptr<const PolicyParameters> params) {
  return [config, params](const InstanceSpec& instance, const NetworkState& state,
                          const VehicleState& vehicle, const std::vector<std::uint8_t>& legal) {
    const NetworkState* view = &state;
    NetworkState ablated;
    if (!config.use_edge_features) {
      ablated = state;
      ablated.edge_features_e.fill(1.0);
      view = &ablated;
    }
    const ActionDistribution dist = policy_forward(config, *params, *view, vehicle, legal,
                                                   instance.horizon_U, instance.customer_count());
    return dist.probabilities;
  };
}

EpisodeGraph begin_episode_graph(const PolicyConfig& config, const PolicyParameters& params,
                                 PolicyParameters& grads, const NetworkState& state) {
  EpisodeGraph g;
  g.clip_C = params.head.clip_C;
  g.mask_Z = params.head.mask_Z;

  // const_cast-free binding: tape reads values, writes only the grad side.
  const EncoderBinding enc = bind_encoder(g.tape, params.encoder, grads.encoder);
  const EncoderTapeIds ids = encode_on_tape(g.tape, state, enc);
  g.h = ids.h;

  g.vehicle_query = g.tape.param(&params.head.vehicle_query, &grads.head.vehicle_query);
  g.tau_weight = g.tape.param(&params.head.tau_embed_weight, &grads.head.tau_embed_weight);
  g.tau_bias = g.tape.param(&params.head.tau_embed_bias, &grads.head.tau_embed_bias);
  g.context_projection =
      g.tape.param(&params.head.context_projection, &grads.head.context_projection);
  g.compat_query = g.tape.param(&params.head.compat_query, &grads.head.compat_query);
  const Tape::Id compat_key = g.tape.param(&params.head.compat_key, &grads.head.compat_key);
  g.keys = g.tape.matmul(g.h, compat_key);
  (void)config;
  return g;
}

Tape::Id append_action_probs(EpisodeGraph& g, const PolicyConfig& config,
                             const VehicleState& vehicle, const std::vector<std::uint8_t>& legal,
                             double horizon_U, int customer_count) {
  Tape& t = g.tape;
  const Tape::Id h_current = t.row(g.h, vehicle.current_node);

  Mat tau_in(1, 1);
  tau_in(0, 0) = vehicle.remaining_horizon / horizon_U;
  Mat ratio_in(1, 1);
  ratio_in(0, 0) = static_cast<double>(vehicle.active_requests.size()) / customer_count;

  std::vector<Tape::Id> veh_pieces{h_current};
  if (config.use_horizon_in_embedding) veh_pieces.push_back(t.input(tau_in));
  veh_pieces.push_back(t.input(ratio_in));
  const Tape::Id vehicle_enc = t.concat_cols(veh_pieces);

  std::vector<Tape::Id> ctx_pieces;
  if (config.use_global_embedding) {
    const Tape::Id q = t.matmul(vehicle_enc, g.vehicle_query);
    const Tape::Id scores = t.matmul_nt(q, g.h);
    const Tape::Id alpha = t.softmax_row(scores);
    ctx_pieces.push_back(t.matmul(alpha, g.h));
  }
  ctx_pieces.push_back(h_current);
  const std::vector<int> active(vehicle.active_requests.begin(), vehicle.active_requests.end());
  if (active.empty()) {
    ctx_pieces.push_back(t.input(Mat(1, t.value(g.h).cols)));
  } else {
    ctx_pieces.push_back(t.sum_rows(g.h, active));
  }
  const Tape::Id tau_emb = t.add(t.matmul(t.input(tau_in), g.tau_weight), g.tau_bias);
  ctx_pieces.push_back(tau_emb);

  const Tape::Id context = t.concat_cols(ctx_pieces);
  const Tape::Id projected = t.matmul(context, g.context_projection);
  const Tape::Id q = t.matmul(projected, g.compat_query);
  const Tape::Id compat = t.matmul_nt(q, g.keys);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(t.value(q).cols));
  const Tape::Id logits = t.tanh_scaled(compat, inv_sqrt_dk, g.clip_C);
  return t.masked_softmax_row(logits, legal, g.mask_Z);
}

}  // namespace pggat
