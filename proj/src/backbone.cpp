#include <cmath>
#include <random>

#include "unipaint/backbone.hpp"

namespace unipaint {

using nn::Var;

const Eigen::MatrixXd& ParameterSet::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw Error(ErrorKind::NotFound, "parameter '" + name + "' missing");
  return it->second;
}

Eigen::MatrixXd& ParameterSet::get(const std::string& name) {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw Error(ErrorKind::NotFound, "parameter '" + name + "' missing");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, a] : arrays_) n += static_cast<std::size_t>(a.size());
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& [_, a] : arrays_) {
    if (!a.allFinite()) return false;
  }
  return true;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.tag_ != b.tag_ || a.iterations_ != b.iterations_ || a.arrays_.size() != b.arrays_.size()) {
    return false;
  }
  for (auto ia = a.arrays_.begin(), ib = b.arrays_.begin(); ia != a.arrays_.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.rows() != ib->second.rows() ||
        ia->second.cols() != ib->second.cols() || ia->second != ib->second) {
      return false;
    }
  }
  return true;
}

BackboneConfig backbone_preset(const std::string& name) {
  BackboneConfig cfg;
  cfg.preset = name;
  if (name == "small") {
    cfg.base_width = 32;
    cfg.mid_width = 64;
  } else if (name == "tiny") {
    cfg.base_width = 16;
    cfg.mid_width = 32;
    cfg.time_dim = 32;
  } else {
    throw Error(ErrorKind::InvalidInput, "unknown backbone preset '" + name + "'", "preset");
  }
  return cfg;
}

Eigen::VectorXd sinusoidal_embedding(double position, int dim) {
  const int half = dim / 2;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    e(i) = std::sin(position * freq);
    e(half + i) = std::cos(position * freq);
  }
  return e;
}

ToyUNet::ToyUNet(BackboneConfig config) : config_(std::move(config)) {
  if (config_.vocab_size == 0) config_.vocab_size = default_tokenizer().vocab_size();
}

namespace {

constexpr int kTimeInputDim = 32;

class Initializer {
 public:
  Initializer(ParameterSet& params, std::uint64_t seed) : params_(params), rng_(seed) {}

  void normal(const std::string& name, int rows, int cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = dist(rng_);
    }
    params_.set(name, std::move(m));
  }
  void zeros(const std::string& name, int rows, int cols) {
    params_.set(name, Eigen::MatrixXd::Zero(rows, cols));
  }
  void conv(const std::string& name, int cin, int cout, double gain = 1.0) {
    normal(name + ".w", cout, 9 * cin, gain / std::sqrt(9.0 * cin));
    zeros(name + ".b", cout, 1);
  }
  void res(const std::string& name, int cin, int cout, int time_dim) {
    conv(name + ".conv1", cin, cout);
    normal(name + ".temb.w", cout, time_dim, 1.0 / std::sqrt(static_cast<double>(time_dim)));
    zeros(name + ".temb.b", cout, 1);
    conv(name + ".conv2", cout, cout, 0.5);
    if (cin != cout) normal(name + ".skip.w", cout, cin, 1.0 / std::sqrt(static_cast<double>(cin)));
  }
  void attn(const std::string& name, int channels, int key_dim) {
    const double s = 1.0 / std::sqrt(static_cast<double>(channels));
    normal(name + ".q", channels, channels, s);
    normal(name + ".k", key_dim, channels, 1.0 / std::sqrt(static_cast<double>(key_dim)));
    normal(name + ".v", key_dim, channels, 1.0 / std::sqrt(static_cast<double>(key_dim)));
    normal(name + ".o", channels, channels, 0.5 * s);
  }

 private:
  ParameterSet& params_;
  std::mt19937_64 rng_;
};

}  // namespace

ParameterSet ToyUNet::init_parameters(std::uint64_t seed) const {
  ParameterSet params("toy-unet:" + config_.preset);
  Initializer init(params, seed);
  const int c0 = config_.base_width;
  const int c1 = config_.mid_width;
  const int td = config_.time_dim;

  init.normal("text.token_embedding", config_.vocab_size, config_.text_dim, 1.0);
  init.normal("time.w1", td, kTimeInputDim, 1.0 / std::sqrt(double(kTimeInputDim)));
  init.zeros("time.b1", td, 1);
  init.normal("time.w2", td, td, 1.0 / std::sqrt(double(td)));
  init.zeros("time.b2", td, 1);

  init.conv("conv_in", config_.latent_channels(), c0);
  init.res("down0", c0, c0, td);
  init.res("down1", c0, c1, td);
  init.attn("down1.self", c1, c1);
  init.attn("down1.cross", c1, config_.text_dim);
  init.res("mid", c1, c1, td);
  init.attn("mid.self", c1, c1);
  init.attn("mid.cross", c1, config_.text_dim);
  init.res("up1", 2 * c1, c1, td);
  init.attn("up1.self", c1, c1);
  init.attn("up1.cross", c1, config_.text_dim);
  init.res("up0", c1 + c0, c0, td);
  init.conv("conv_out", c0, config_.latent_channels());
  init.normal("skip_gate.w", config_.latent_channels(), td, 0.1 / std::sqrt(double(td)));
  init.zeros("skip_gate.b", config_.latent_channels(), 1);
  return params;
}

Var ToyUNet::Graph::param(const std::string& name) {
  if (auto it = leaves_.find(name); it != leaves_.end()) return it->second;
  Var leaf = track_ ? nn::parameter(params_.get(name)) : nn::constant(params_.get(name));
  leaves_.emplace(name, leaf);
  return leaf;
}

Var ToyUNet::text_forward(Graph& graph, const TokenSequence& tokens) const {
  std::vector<int> ids = tokens.ids;
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw Error(ErrorKind::OutOfRange, "token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  if (ids.empty()) ids = default_tokenizer().null_sequence().ids;
  if (static_cast<int>(ids.size()) > config_.max_text_length) {
    const int last = ids.back();
    ids.resize(static_cast<std::size_t>(config_.max_text_length));
    ids.back() = last;
  }
  Eigen::MatrixXd positions(static_cast<Eigen::Index>(ids.size()), config_.text_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    positions.row(static_cast<Eigen::Index>(i)) =
        sinusoidal_embedding(static_cast<double>(i), config_.text_dim).transpose();
  }
  return nn::add(nn::gather_rows(graph.param("text.token_embedding"), ids),
                 nn::constant(std::move(positions)));
}

Var ToyUNet::conv3x3(Graph& g, const std::string& name, const Var& x, int h, int w) const {
  return nn::add_col_broadcast(nn::matmul(g.param(name + ".w"), nn::im2col3x3(x, h, w)),
                               g.param(name + ".b"));
}

Var ToyUNet::res_block(Graph& g, const std::string& name, const Var& x, const Var& temb, int h,
                       int w) const {
  Var a = conv3x3(g, name + ".conv1", nn::silu(x), h, w);
  Var tproj = nn::add(nn::matmul(g.param(name + ".temb.w"), nn::silu(temb)),
                      g.param(name + ".temb.b"));
  a = nn::add_col_broadcast(a, tproj);
  Var b = conv3x3(g, name + ".conv2", nn::silu(a), h, w);
  Var skip = g.param_exists(name + ".skip.w") ? nn::matmul(g.param(name + ".skip.w"), x) : x;
  return nn::add(skip, b);
}

Var ToyUNet::self_attention(Graph& g, const std::string& name, const Var& x, int h, int w,
                            const AttentionMaskSet* masks) const {
  const Eigen::MatrixXd* mask = nullptr;
  MaskApplication application = MaskApplication::PostSoftmax;
  if (masks) {
    const AttentionMaskLevel* level = masks->find(h, w);
    if (!level) throw Error(ErrorKind::ShapeMismatch, "no attention mask for feature resolution");
    mask = &level->self_mask;
    application = masks->application();
  }
  Var rows = nn::transpose(x);
  Var q = nn::matmul(rows, g.param(name + ".q"));
  Var k = nn::matmul(rows, g.param(name + ".k"));
  Var v = nn::matmul(rows, g.param(name + ".v"));
  Var o = nn::attention(q, k, v, mask, application);
  return nn::add(x, nn::transpose(nn::matmul(o, g.param(name + ".o"))));
}

Var ToyUNet::cross_attention(Graph& g, const std::string& name, const Var& x, const Var& text,
                             int h, int w, const AttentionMaskSet* masks) const {
  Eigen::MatrixXd mask;
  MaskApplication application = MaskApplication::PostSoftmax;
  if (masks) {
    const AttentionMaskLevel* level = masks->find(h, w);
    if (!level) throw Error(ErrorKind::ShapeMismatch, "no attention mask for feature resolution");
    mask = level->cross_mask(static_cast<int>(text->value.rows()));
    application = masks->application();
  }
  Var rows = nn::transpose(x);
  Var q = nn::matmul(rows, g.param(name + ".q"));
  Var k = nn::matmul(text, g.param(name + ".k"));
  Var v = nn::matmul(text, g.param(name + ".v"));
  Var o = nn::attention(q, k, v, masks ? &mask : nullptr, application);
  return nn::add(x, nn::transpose(nn::matmul(o, g.param(name + ".o"))));
}

Var ToyUNet::forward(Graph& g, const Var& x, int height, int width, const Var& text, int t,
                     const AttentionMaskSet* masks) const {
  Var t_in = nn::constant(sinusoidal_embedding(static_cast<double>(t), kTimeInputDim));
  Var temb = nn::add(nn::matmul(g.param("time.w1"), t_in), g.param("time.b1"));
  temb = nn::add(nn::matmul(g.param("time.w2"), nn::silu(temb)), g.param("time.b2"));

  const int h0 = height, w0 = width;
  const int h1 = h0 / 2, w1 = w0 / 2;
  const int h2 = h1 / 2, w2 = w1 / 2;

  Var skip0 = res_block(g, "down0", conv3x3(g, "conv_in", x, h0, w0), temb, h0, w0);

  Var d1 = res_block(g, "down1", nn::avg_pool2(skip0, h0, w0), temb, h1, w1);
  d1 = self_attention(g, "down1.self", d1, h1, w1, masks);
  Var skip1 = cross_attention(g, "down1.cross", d1, text, h1, w1, masks);

  Var m = res_block(g, "mid", nn::avg_pool2(skip1, h1, w1), temb, h2, w2);
  m = self_attention(g, "mid.self", m, h2, w2, masks);
  m = cross_attention(g, "mid.cross", m, text, h2, w2, masks);

  Var u1 = nn::concat_rows(nn::upsample2(m, h2, w2), skip1);
  u1 = res_block(g, "up1", u1, temb, h1, w1);
  u1 = self_attention(g, "up1.self", u1, h1, w1, masks);
  u1 = cross_attention(g, "up1.cross", u1, text, h1, w1, masks);

  Var u0 = nn::concat_rows(nn::upsample2(u1, h1, w1), skip0);
  u0 = res_block(g, "up0", u0, temb, h0, w0);
  Var gate = nn::add(nn::matmul(g.param("skip_gate.w"), nn::silu(temb)), g.param("skip_gate.b"));
  return nn::add(conv3x3(g, "conv_out", nn::silu(u0), h0, w0), nn::mul_col_broadcast(x, gate));
}

void ToyUNet::check_latent(const LatentMap& x) const {
  if (x.channels() != config_.latent_channels()) {
    throw Error(ErrorKind::ShapeMismatch, "latent has " + std::to_string(x.channels()) +
                                              " channels, backbone expects " +
                                              std::to_string(config_.latent_channels()));
  }
  if (x.height() < 4 || x.width() < 4 || x.height() % 4 != 0 || x.width() % 4 != 0) {
    throw Error(ErrorKind::ShapeMismatch, "latent height/width must be positive multiples of 4");
  }
}

TextEmbedding ToyUNet::encode_text(const TokenSequence& tokens, const ParameterSet& params) const {
  Graph g(params, false);
  return TextEmbedding{text_forward(g, tokens)->value};
}

LatentMap ToyUNet::predict_noise(const LatentMap& x_t, const TextEmbedding& c, int t,
                                 const AttentionMaskSet* masks, const ParameterSet& params) const {
  check_latent(x_t);
  if (c.dim() != config_.text_dim || c.length() < 1) {
    throw Error(ErrorKind::ShapeMismatch, "text embedding width does not match backbone");
  }
  if (t < 0) throw Error(ErrorKind::OutOfRange, "negative timestep");
  Graph g(params, false);
  Var out = forward(g, nn::constant(x_t.values()), x_t.height(), x_t.width(),
                    nn::constant(c.values), t, masks);
  return LatentMap(x_t.height(), x_t.width(), out->value);
}

}  // namespace unipaint
