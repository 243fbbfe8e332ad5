#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgcat/complexity.hpp"
#include "mgcat/nn/ops.hpp"
#include "mgcat/nn/optim.hpp"
#include "mgcat/roadnet.hpp"

namespace mgcat {

struct ModelConfig {
  int d_e = 32;        // embedding width
  int d_h = 64;        // encoder width
  int layers = 2;      // encoder layers
  int heads = 4;       // encoder attention heads
  int ff_mult = 2;     // feed-forward width = ff_mult * d_h
  int buckets = 32;    // soft-mask buckets per view
  int gat_heads = 2;
  double gat_slope = 0.2;
  double delta_init = -4.0;
  int dec_hidden = 64;
  int dec_layers = 2;
  bool dec_attention = true;
  int max_seq_len = 256;

  void validate() const;
};

/// Segments occupy [0, V); specials follow.
struct Vocab {
  int num_segments = 0;
  int pad() const noexcept { return num_segments; }
  int mask() const noexcept { return num_segments + 1; }
  int bos() const noexcept { return num_segments + 2; }
  int eos() const noexcept { return num_segments + 3; }
  int size() const noexcept { return num_segments + 4; }
  bool is_segment(int t) const noexcept { return t >= 0 && t < num_segments; }
};

/// Parameters plus the hyperparameters that shaped them.
struct Model {
  ModelConfig cfg;
  Vocab vocab;
  nn::ParamStore params;

  static Model init(const ModelConfig& cfg, int num_segments, std::uint64_t seed);

  /// Names of encoder-side tensors (everything except the decoder).
  std::vector<std::string> encoder_param_names() const;
  std::vector<std::string> decoder_param_names() const;
  std::vector<std::string> trainable_names() const;
};

/// View graphs and threshold consulted by the encoder. Null views make every
/// segment an isolated GAT node and disable the soft-mask bias.
struct GraphContext {
  const ViewGraph* distance = nullptr;
  const ViewGraph* entropy = nullptr;
  double theta = 0.0;
  bool soft_mask = true;
};

struct EncodeInput {
  std::vector<int> tokens;
  std::vector<double> times;
  double complexity = 0.0;
};

struct EncodeResult {
  nn::Tensor z;      // [n, d_h]
  nn::Tensor alpha;  // [n, 2] view weights
  bool bias_active = false;
  /// attention[layer * heads + head] is a row-major n x n matrix, filled when
  /// requested.
  std::vector<std::vector<double>> attention;
};

// Embedding -----------------------------------------------------------------

nn::Tensor spatial_embed(const Model& m, std::span<const int> ids);
nn::Tensor temporal_embed(const Model& m, std::span<const double> times);
nn::Tensor st_embed(const Model& m, std::span<const int> ids, std::span<const double> times);

/// Initial frequency ladder 1 / 10^(4k / d_e), k = 0 .. d_e/2 - 1.
std::vector<double> frequency_ladder(int d_e);

// Graph encoder -------------------------------------------------------------

/// GAT outputs of view `view` (0 distance, 1 entropy) for `targets`. Each
/// target attends over itself and its knn list; specials are isolated.
nn::Tensor gat_encode(const Model& m, int view, const ViewGraph* graph, std::span<const int> targets);

/// complexity * mean row of x_st.
nn::Tensor trajectory_context(const nn::Tensor& x_st, double complexity);

struct Aggregated {
  nn::Tensor g_hat;  // [n, d_e]
  nn::Tensor alpha;  // [n, R]
};

/// w_r = v^T tanh(g_r W_r + q W), alpha = softmax_r(w), g_hat = sum_r alpha_r g_r.
Aggregated aggregate_views(const Model& m, const std::vector<nn::Tensor>& g, const nn::Tensor& q);

// Encoder -------------------------------------------------------------------

/// [x_st W_st || g_hat W_g]
nn::Tensor hybrid_embed(const Model& m, const nn::Tensor& x_st, const nn::Tensor& g_hat);

/// Bucket of a normalized value in [0, 1].
int bucket_of(double v, int buckets);

/// Row-major n x n bucket indices for the token pairs; -1 where either token
/// is not a segment.
std::vector<int> pair_buckets(const ViewGraph& graph, std::span<const int> tokens, const Vocab& vocab, int buckets);

/// Sum of both views' soft-mask biases, n x n.
nn::Tensor soft_mask_bias(const Model& m, const GraphContext& ctx, std::span<const int> tokens);

EncodeResult encode(const Model& m, const GraphContext& ctx, const EncodeInput& in, bool keep_attention = false);

nn::Tensor mlm_logits(const Model& m, const nn::Tensor& z);

// Decoder -------------------------------------------------------------------

/// Teacher-forced mean cross-entropy over `targets` (segments then EOS).
nn::Tensor decoder_loss(const Model& m, const nn::Tensor& z, std::span<const int> targets);

struct DecodeOptions {
  int max_len = 96;
  int beam_width = 1;
  /// Restrict each generated segment to successors of the previous one.
  const RoadNetwork* legal = nullptr;
};

/// Segments generated from BOS until EOS or max_len (specials stripped).
std::vector<SegId> decode(const Model& m, const nn::Tensor& z, const DecodeOptions& opt);

// Persistence -----------------------------------------------------------------

/// Parameters plus "meta/arch" and, when given, "meta/calib" records.
void save_model(const Model& m, const CorpusCalibration* calib, const std::filesystem::path& path);

struct LoadedModel {
  Model model;
  bool has_calib = false;
  CorpusCalibration calib;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace mgcat
