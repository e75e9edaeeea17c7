#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "unipaint/attention.hpp"
#include "unipaint/autograd.hpp"
#include "unipaint/codec.hpp"
#include "unipaint/tensor.hpp"

namespace unipaint {

struct TokenSequence {
  std::vector<int> ids;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Token embeddings, one row per token.
struct TextEmbedding {
  Eigen::MatrixXd values;
  int length() const noexcept { return static_cast<int>(values.rows()); }
  int dim() const noexcept { return static_cast<int>(values.cols()); }
  friend bool operator==(const TextEmbedding& a, const TextEmbedding& b) {
    return a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() &&
           a.values == b.values;
  }
};

/// Lowercase word tokenizer over a fixed built-in vocabulary. Words outside
/// the list hash (FNV-1a) into a fixed out-of-vocabulary id range.
class Tokenizer {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kOovBuckets = 1024;

  Tokenizer();

  TokenSequence tokenize(std::string_view text) const;
  /// [BOS, EOS], the null-text sequence.
  TokenSequence null_sequence() const { return TokenSequence{{kBos, kEos}}; }
  /// Id of a single (already lowercase) word.
  int word_id(std::string_view word) const;
  /// Word for in-vocabulary ids; "<oov:N>" or "<bos>"/"<eos>" otherwise.
  std::string word(int id) const;

  int vocab_size() const noexcept { return first_oov_ + kOovBuckets; }
  int first_oov_id() const noexcept { return first_oov_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> index_;
  int first_oov_ = 0;
};

const Tokenizer& default_tokenizer();

/// Named parameter arrays of the noise predictor, plus provenance.
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::string tag) : tag_(std::move(tag)) {}

  void set(const std::string& name, Eigen::MatrixXd value) { arrays_[name] = std::move(value); }
  const Eigen::MatrixXd& get(const std::string& name) const;
  Eigen::MatrixXd& get(const std::string& name);
  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }

  const std::map<std::string, Eigen::MatrixXd>& arrays() const noexcept { return arrays_; }
  std::size_t scalar_count() const;
  bool all_finite() const;

  const std::string& tag() const noexcept { return tag_; }
  std::uint64_t finetune_iterations() const noexcept { return iterations_; }
  void set_finetune_iterations(std::uint64_t n) noexcept { iterations_ = n; }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::string tag_;
  std::uint64_t iterations_ = 0;
  std::map<std::string, Eigen::MatrixXd> arrays_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ParameterSet& params);
ParameterSet deserialize_checkpoint(std::string_view bytes);
/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path);

struct BackboneConfig {
  std::string preset = "small";
  int codec_factor = kDefaultCodecFactor;
  int image_channels = 3;
  int base_width = 32;
  int mid_width = 64;
  int text_dim = 32;
  int time_dim = 64;
  int max_text_length = 32;
  int vocab_size = 0;  // 0: tokenizer vocabulary

  int latent_channels() const { return image_channels * codec_factor * codec_factor; }
  /// Downsampling factors (relative to the latent) of the attention resolutions.
  std::vector<int> attention_factors() const { return {2, 4}; }
};

/// "small" (32/64 channels) or "tiny" (16/32 channels).
BackboneConfig backbone_preset(const std::string& name);

/// Small U-Net noise predictor: two downsampling stages, residual blocks with
/// sinusoidal timestep embedding, self- and cross-attention at the two lowest
/// resolutions. Stateless; parameters are passed in.
class ToyUNet {
 public:
  explicit ToyUNet(BackboneConfig config);

  const BackboneConfig& config() const noexcept { return config_; }
  ParameterSet init_parameters(std::uint64_t seed) const;

  /// Parameter leaves for one forward/backward pass.
  class Graph {
   public:
    Graph(const ParameterSet& params, bool track_gradients)
        : params_(params), track_(track_gradients) {}
    nn::Var param(const std::string& name);
    bool param_exists(const std::string& name) const { return params_.contains(name); }
    const std::map<std::string, nn::Var>& leaves() const noexcept { return leaves_; }

   private:
    const ParameterSet& params_;
    bool track_;
    std::map<std::string, nn::Var> leaves_;
  };

  nn::Var text_forward(Graph& graph, const TokenSequence& tokens) const;
  nn::Var forward(Graph& graph, const nn::Var& x, int height, int width, const nn::Var& text,
                  int t, const AttentionMaskSet* masks) const;

  TextEmbedding encode_text(const TokenSequence& tokens, const ParameterSet& params) const;
  LatentMap predict_noise(const LatentMap& x_t, const TextEmbedding& c, int t,
                          const AttentionMaskSet* masks, const ParameterSet& params) const;

  void check_latent(const LatentMap& x) const;

 private:
  nn::Var conv3x3(Graph& g, const std::string& name, const nn::Var& x, int h, int w) const;
  nn::Var res_block(Graph& g, const std::string& name, const nn::Var& x, const nn::Var& temb,
                    int h, int w) const;
  nn::Var self_attention(Graph& g, const std::string& name, const nn::Var& x, int h, int w,
                         const AttentionMaskSet* masks) const;
  nn::Var cross_attention(Graph& g, const std::string& name, const nn::Var& x,
                          const nn::Var& text, int h, int w,
                          const AttentionMaskSet* masks) const;

  BackboneConfig config_;
};

/// Sinusoidal embedding of a scalar position: [sin(p·f_i), cos(p·f_i)].
Eigen::VectorXd sinusoidal_embedding(double position, int dim);

/// Pluggable noise predictor + text encoder + codec. ToyBackend is the
/// reference implementation; an adapter for a pretrained latent diffusion
/// model implements the same surface.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  virtual LatentMap predict_noise(const LatentMap& x_t, const TextEmbedding& c, int t,
                                  const AttentionMaskSet* masks) const = 0;
  virtual TextEmbedding encode_text(const TokenSequence& tokens) const = 0;
  /// Downsampling factors of the attention layers relative to the latent.
  virtual std::vector<int> attention_factors() const = 0;

  virtual LatentMap encode_image(const ImageBuffer& image) const {
    return encode(image, codec_factor());
  }
  virtual ImageBuffer decode_latent(const LatentMap& latent) const {
    return decode(latent, image_channels(), codec_factor());
  }
  virtual int codec_factor() const { return kDefaultCodecFactor; }
  virtual int image_channels() const { return 3; }
  virtual const ParameterSet* parameters() const { return nullptr; }
};

class ToyBackend final : public DenoiserBackend {
 public:
  ToyBackend(const ToyUNet& net, const ParameterSet& params) : net_(net), params_(params) {}

  LatentMap predict_noise(const LatentMap& x_t, const TextEmbedding& c, int t,
                          const AttentionMaskSet* masks) const override {
    return net_.predict_noise(x_t, c, t, masks, params_);
  }
  TextEmbedding encode_text(const TokenSequence& tokens) const override {
    return net_.encode_text(tokens, params_);
  }
  std::vector<int> attention_factors() const override { return net_.config().attention_factors(); }
  int codec_factor() const override { return net_.config().codec_factor; }
  int image_channels() const override { return net_.config().image_channels; }
  const ParameterSet* parameters() const override { return &params_; }

 private:
  const ToyUNet& net_;
  const ParameterSet& params_;
};

}  // namespace unipaint
