#include "unipaint/finetune.hpp"

#include <chrono>
#include <cmath>

namespace unipaint {

void FinetuneConfig::validate() const {
  if (total_iters < 0) throw Error(ErrorKind::Validation, "total_iters must be >= 0", "iters");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::Validation, "learning_rate must be > 0", "lr");
}

LatentMap gaussian_latent(int channels, int height, int width, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  LatentMap out(channels, height, width);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index j = 0; j < out.values().cols(); ++j) {
    for (Eigen::Index i = 0; i < out.values().rows(); ++i) out.values()(i, j) = dist(rng);
  }
  return out;
}

std::vector<double> smoothed(const std::vector<double>& values, int window) {
  std::vector<double> out(values.size());
  double running = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    running += values[i];
    if (i >= static_cast<std::size_t>(window)) running -= values[i - static_cast<std::size_t>(window)];
    const std::size_t n = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
    out[i] = running / static_cast<double>(n);
  }
  return out;
}

ExemplarBundle make_exemplar_bundle(LatentMap exemplar, int subject_token,
                                    const RegionMask& latent_mask) {
  ExemplarBundle bundle;
  bundle.hole_bbox = hole_bounding_box(latent_mask);
  if (bundle.hole_bbox.empty()) {
    throw Error(ErrorKind::InvalidInput, "exemplar requires a non-empty hole", "exemplar");
  }
  bundle.exemplar = std::move(exemplar);
  bundle.subject_token = subject_token;
  bundle.canvas_height = latent_mask.height();
  bundle.canvas_width = latent_mask.width();
  return bundle;
}

namespace {

struct PlacementSize {
  int height;
  int width;
};

void check_bbox(const Rect& bbox, int canvas_height, int canvas_width) {
  if (bbox.height < kMinPlacementCells || bbox.width < kMinPlacementCells) {
    throw Error(ErrorKind::InvalidInput,
                "hole bounding box smaller than the minimum exemplar placement of " +
                    std::to_string(kMinPlacementCells) + " cells",
                "exemplar");
  }
  if (bbox.y0 < 0 || bbox.x0 < 0 || bbox.y0 + bbox.height > canvas_height ||
      bbox.x0 + bbox.width > canvas_width) {
    throw Error(ErrorKind::InvalidInput, "hole bounding box outside canvas", "exemplar");
  }
}

PlacementSize placement_size(const LatentMap& exemplar, const Rect& bbox, double scale) {
  const double fit = std::min(static_cast<double>(bbox.height) / exemplar.height(),
                              static_cast<double>(bbox.width) / exemplar.width());
  const int h = std::clamp(static_cast<int>(std::floor(scale * fit * exemplar.height() + 0.5)), 1,
                           bbox.height);
  const int w = std::clamp(static_cast<int>(std::floor(scale * fit * exemplar.width() + 0.5)), 1,
                           bbox.width);
  return {h, w};
}

}  // namespace

PlacedExemplar place_exemplar(const LatentMap& exemplar, const Rect& bbox, int canvas_height,
                              int canvas_width, double scale, int offset_y, int offset_x) {
  check_bbox(bbox, canvas_height, canvas_width);
  if (exemplar.height() < 1 || exemplar.width() < 1) {
    throw Error(ErrorKind::InvalidInput, "empty exemplar", "exemplar");
  }
  const auto size = placement_size(exemplar, bbox, scale);
  if (offset_y < 0 || offset_x < 0 || offset_y + size.height > bbox.height ||
      offset_x + size.width > bbox.width) {
    throw Error(ErrorKind::InvalidInput, "exemplar placement leaves the bounding box", "exemplar");
  }
  PlacedExemplar out{LatentMap(exemplar.channels(), canvas_height, canvas_width),
                     RegionMask(canvas_height, canvas_width, 0)};
  for (int y = 0; y < size.height; ++y) {
    const int sy = std::min(exemplar.height() - 1, (2 * y + 1) * exemplar.height() / (2 * size.height));
    for (int x = 0; x < size.width; ++x) {
      const int sx = std::min(exemplar.width() - 1, (2 * x + 1) * exemplar.width() / (2 * size.width));
      const int cy = bbox.y0 + offset_y + y;
      const int cx = bbox.x0 + offset_x + x;
      out.latent.values().col(cy * canvas_width + cx) = exemplar.values().col(sy * exemplar.width() + sx);
      out.valid.at(cy, cx) = 1;
    }
  }
  return out;
}

PlacedExemplar augment_exemplar(const LatentMap& exemplar, const Rect& bbox, int canvas_height,
                                int canvas_width, std::mt19937_64& rng) {
  check_bbox(bbox, canvas_height, canvas_width);
  const double scale = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
  const auto size = placement_size(exemplar, bbox, scale);
  const int oy = std::uniform_int_distribution<int>(0, bbox.height - size.height)(rng);
  const int ox = std::uniform_int_distribution<int>(0, bbox.width - size.width)(rng);
  return place_exemplar(exemplar, bbox, canvas_height, canvas_width, scale, oy, ox);
}

namespace {

TokenSequence subject_sequence(int token) {
  return TokenSequence{{Tokenizer::kBos, token, Tokenizer::kEos}};
}

void check_mask(const LatentMap& x, const RegionMask& m) {
  if (m.height() != x.height() || m.width() != x.width()) {
    throw Error(ErrorKind::ShapeMismatch, "latent mask does not match latent dimensions");
  }
  m.require_binary("finetune");
}

}  // namespace

double bg_loss(const ToyUNet& net, const ParameterSet& params, const LatentMap& x_in,
               const RegionMask& latent_mask, int t, const LatentMap& eps,
               const NoiseSchedule& sched) {
  check_mask(x_in, latent_mask);
  const LatentMap noised = add_noise(x_in, t, eps, sched);
  const TextEmbedding null_text = net.encode_text(default_tokenizer().null_sequence(), params);
  const LatentMap pred = net.predict_noise(noised, null_text, t, nullptr, params);
  return nn::masked_mse_value(pred.values(), eps.values(), latent_mask.as_row<double>().matrix());
}

double ref_loss(const ToyUNet& net, const ParameterSet& params, const ExemplarBundle& bundle,
                int t, const LatentMap& eps, std::mt19937_64& rng, const NoiseSchedule& sched) {
  const PlacedExemplar placed = augment_exemplar(bundle.exemplar, bundle.hole_bbox,
                                                 bundle.canvas_height, bundle.canvas_width, rng);
  const LatentMap noised = add_noise(placed.latent, t, eps, sched);
  const TextEmbedding c = net.encode_text(subject_sequence(bundle.subject_token), params);
  const LatentMap pred = net.predict_noise(noised, c, t, nullptr, params);
  return nn::masked_mse_value(pred.values(), eps.values(), placed.valid.as_row<double>().matrix());
}

namespace {

class Adam {
 public:
  explicit Adam(const FinetuneConfig& cfg) : cfg_(cfg) {}

  void step(ParameterSet& params, const std::map<std::string, nn::Var>& leaves) {
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (const auto& [name, leaf] : leaves) {
      if (leaf->grad.size() == 0) continue;
      auto& m = first_[name];
      auto& v = second_[name];
      if (m.size() == 0) {
        m = Eigen::MatrixXd::Zero(leaf->grad.rows(), leaf->grad.cols());
        v = m;
      }
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * leaf->grad;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * leaf->grad.cwiseProduct(leaf->grad);
      params.get(name).array() -=
          cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
    }
  }

 private:
  FinetuneConfig cfg_;
  int step_ = 0;
  std::map<std::string, Eigen::MatrixXd> first_;
  std::map<std::string, Eigen::MatrixXd> second_;
};

}  // namespace

ParameterSet run_finetune(const ToyUNet& net, ParameterSet params, const LatentMap& x_in,
                          const RegionMask& latent_mask,
                          const std::optional<ExemplarBundle>& exemplar,
                          const FinetuneConfig& config, const NoiseSchedule& sched,
                          const TelemetrySink& telemetry) {
  config.validate();
  net.check_latent(x_in);
  check_mask(x_in, latent_mask);
  const bool use_exemplar = exemplar.has_value() && config.use_exemplar;
  if (use_exemplar) {
    check_bbox(exemplar->hole_bbox, exemplar->canvas_height, exemplar->canvas_width);
    if (exemplar->canvas_height != x_in.height() || exemplar->canvas_width != x_in.width() ||
        exemplar->exemplar.channels() != x_in.channels()) {
      throw Error(ErrorKind::ShapeMismatch, "exemplar bundle does not match the input latent");
    }
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> timestep(1, sched.T());
  const Eigen::RowVectorXd bg_mask = latent_mask.as_row<double>().matrix();
  Adam optimizer(config);
  const auto start = std::chrono::steady_clock::now();

  for (int iter = 0; iter < config.total_iters; ++iter) {
    ToyUNet::Graph graph(params, true);

    const int t1 = timestep(rng);
    const LatentMap eps1 = gaussian_latent(x_in.channels(), x_in.height(), x_in.width(), rng);
    nn::Var pred_bg = net.forward(graph, nn::constant(add_noise(x_in, t1, eps1, sched).values()),
                                  x_in.height(), x_in.width(),
                                  net.text_forward(graph, default_tokenizer().null_sequence()),
                                  t1, nullptr);
    nn::Var loss_bg = nn::masked_mse(pred_bg, eps1.values(), bg_mask);
    nn::Var total = loss_bg;
    double ref_value = 0.0;

    if (use_exemplar) {
      const int t2 = timestep(rng);
      const PlacedExemplar placed =
          augment_exemplar(exemplar->exemplar, exemplar->hole_bbox, exemplar->canvas_height,
                           exemplar->canvas_width, rng);
      const LatentMap eps2 = gaussian_latent(x_in.channels(), x_in.height(), x_in.width(), rng);
      nn::Var pred_ref =
          net.forward(graph, nn::constant(add_noise(placed.latent, t2, eps2, sched).values()),
                      x_in.height(), x_in.width(),
                      net.text_forward(graph, subject_sequence(exemplar->subject_token)), t2,
                      nullptr);
      nn::Var loss_ref = nn::masked_mse(pred_ref, eps2.values(), placed.valid.as_row<double>().matrix());
      ref_value = loss_ref->value(0, 0);
      total = nn::add(loss_bg, loss_ref);
    }

    const double total_value = total->value(0, 0);
    if (!std::isfinite(total_value)) {
      throw Error(ErrorKind::NonFinite, "non-finite finetune loss at iteration " +
                                            std::to_string(iter) + " (bg=" +
                                            std::to_string(loss_bg->value(0, 0)) +
                                            ", ref=" + std::to_string(ref_value) + ")");
    }
    nn::backward(total);
    optimizer.step(params, graph.leaves());

    if (telemetry) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      telemetry(FinetuneTelemetry{iter, loss_bg->value(0, 0), ref_value, total_value, elapsed});
    }
  }
  params.set_finetune_iterations(params.finetune_iterations() +
                                 static_cast<std::uint64_t>(config.total_iters));
  return params;
}

}  // namespace unipaint
