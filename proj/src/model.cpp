#include "mgcat/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mgcat/rng.hpp"

namespace mgcat {

using nn::Tensor;

void ModelConfig::validate() const {
  auto pos = [](int v, const char* name) {
    if (v <= 0) throw ValidationError(std::string(name) + " must be positive");
  };
  pos(d_e, "d_e");
  pos(d_h, "d_h");
  pos(heads, "heads");
  pos(ff_mult, "ff_mult");
  pos(buckets, "buckets");
  pos(gat_heads, "gat_heads");
  pos(dec_hidden, "dec_hidden");
  pos(dec_layers, "dec_layers");
  pos(max_seq_len, "max_seq_len");
  if (layers < 0) throw ValidationError("layers must be non-negative");
  if (d_e % 2 != 0) throw ValidationError("d_e must be even");
  if (d_h % 2 != 0) throw ValidationError("d_h must be even");
  if (d_h % heads != 0) throw ValidationError("d_h must be divisible by heads");
  if (d_e % gat_heads != 0) throw ValidationError("d_e must be divisible by gat_heads");
}

std::vector<double> frequency_ladder(int d_e) {
  std::vector<double> w(static_cast<std::size_t>(d_e / 2));
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = 1.0 / std::pow(10.0, 4.0 * static_cast<double>(k) / d_e);
  return w;
}

namespace {

const char* kViewTag[2] = {"0", "1"};

std::string layer_prefix(const char* base, int l) { return std::string(base) + std::to_string(l) + "/"; }

}  // namespace

Model Model::init(const ModelConfig& cfg, int num_segments, std::uint64_t seed) {
  cfg.validate();
  if (num_segments <= 0) throw ValidationError("vocabulary needs at least one segment");
  Model m;
  m.cfg = cfg;
  m.vocab.num_segments = num_segments;
  Rng rng(seed);
  auto& p = m.params;
  const auto de = static_cast<std::size_t>(cfg.d_e);
  const auto dh = static_cast<std::size_t>(cfg.d_h);
  const auto V = static_cast<std::size_t>(m.vocab.size());
  const auto F = static_cast<std::size_t>(cfg.ff_mult * cfg.d_h);
  const auto H = static_cast<std::size_t>(cfg.dec_hidden);
  const auto L = static_cast<std::size_t>(cfg.dec_layers);
  const auto gh = static_cast<std::size_t>(cfg.gat_heads);

  auto& se = p.add_uniform("emb/se", {V, de}, de, rng);
  auto row = se.data_mut().subspan(static_cast<std::size_t>(m.vocab.pad()) * de, de);
  std::fill(row.begin(), row.end(), 0.0);
  p.add("emb/te_w", Tensor::from({1, de / 2}, frequency_ladder(cfg.d_e), true));

  for (const char* r : kViewTag) {
    const std::string g = std::string("gat/") + r + "/";
    p.add_uniform(g + "w", {de, de}, de, rng);
    p.add_uniform(g + "a_src", {gh, de / gh}, de / gh, rng);
    p.add_uniform(g + "a_dst", {gh, de / gh}, de / gh, rng);
  }
  p.add_uniform("agg/v", {de, 1}, de, rng);
  for (const char* r : kViewTag) p.add_uniform(std::string("agg/w_") + r, {de, de}, de, rng);
  p.add_uniform("agg/w", {de, de}, de, rng);

  p.add_uniform("enc/w_st", {de, dh / 2}, de, rng);
  p.add_uniform("enc/w_g", {de, dh / 2}, de, rng);
  for (const char* r : kViewTag)
    p.add_constant(std::string("enc/smb_") + r, {1, static_cast<std::size_t>(cfg.buckets)}, cfg.delta_init);
  for (int l = 0; l < cfg.layers; ++l) {
    const auto pre = layer_prefix("enc/L", l);
    p.add_constant(pre + "ln1_g", {1, dh}, 1.0);
    p.add_constant(pre + "ln1_b", {1, dh}, 0.0);
    p.add_uniform(pre + "wq", {dh, dh}, dh, rng);
    p.add_uniform(pre + "wk", {dh, dh}, dh, rng);
    p.add_uniform(pre + "wv", {dh, dh}, dh, rng);
    p.add_uniform(pre + "wo", {dh, dh}, dh, rng);
    p.add_uniform(pre + "bo", {1, dh}, dh, rng);
    p.add_constant(pre + "ln2_g", {1, dh}, 1.0);
    p.add_constant(pre + "ln2_b", {1, dh}, 0.0);
    p.add_uniform(pre + "ff1_w", {dh, F}, dh, rng);
    p.add_uniform(pre + "ff1_b", {1, F}, dh, rng);
    p.add_uniform(pre + "ff2_w", {F, dh}, F, rng);
    p.add_uniform(pre + "ff2_b", {1, dh}, F, rng);
  }
  p.add_uniform("mlm/w", {dh, V}, dh, rng);
  p.add_uniform("mlm/b", {1, V}, dh, rng);

  p.add_uniform("dec/h0_w", {dh, L * H}, dh, rng);
  p.add_uniform("dec/h0_b", {1, L * H}, dh, rng);
  if (cfg.dec_attention) p.add_uniform("dec/att_q", {H, dh}, H, rng);
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const auto pre = layer_prefix("dec/L", l);
    if (l == 0) {
      p.add_uniform(pre + "w_x", {de, 3 * H}, H, rng);
      if (cfg.dec_attention) p.add_uniform(pre + "w_c", {dh, 3 * H}, H, rng);
    } else {
      p.add_uniform(pre + "w_ih", {H, 3 * H}, H, rng);
    }
    p.add_uniform(pre + "w_hh", {H, 3 * H}, H, rng);
    p.add_uniform(pre + "b_ih", {1, 3 * H}, H, rng);
    p.add_uniform(pre + "b_hh", {1, 3 * H}, H, rng);
  }
  p.add_uniform("dec/out_w", {H, V}, H, rng);
  p.add_uniform("dec/out_b", {1, V}, H, rng);
  return m;
}

std::vector<std::string> Model::encoder_param_names() const {
  std::vector<std::string> out;
  for (const auto& n : params.names())
    if (n.rfind("dec/", 0) != 0 && n.rfind("meta/", 0) != 0) out.push_back(n);
  return out;
}

std::vector<std::string> Model::decoder_param_names() const { return params.names_with_prefix({"dec/"}); }

std::vector<std::string> Model::trainable_names() const {
  auto out = encoder_param_names();
  auto dec = decoder_param_names();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

// ---------------------------------------------------------------------------
// Embedding

Tensor spatial_embed(const Model& m, std::span<const int> ids) {
  for (int t : ids)
    if (t < 0 || t >= m.vocab.size()) throw ValidationError("token id " + std::to_string(t) + " outside vocabulary");
  return nn::embedding(m.params.at("emb/se"), ids, m.vocab.pad());
}

Tensor temporal_embed(const Model& m, std::span<const double> times) {
  for (double t : times)
    if (!std::isfinite(t)) throw ValidationError("non-finite timestamp");
  return nn::temporal_encoding(m.params.at("emb/te_w"), times);
}

Tensor st_embed(const Model& m, std::span<const int> ids, std::span<const double> times) {
  if (ids.size() != times.size()) throw ValidationError("token and timestamp counts differ");
  return nn::add(spatial_embed(m, ids), temporal_embed(m, times));
}

// ---------------------------------------------------------------------------
// Graph encoder

Tensor gat_encode(const Model& m, int view, const ViewGraph* graph, std::span<const int> targets) {
  const std::string g = std::string("gat/") + kViewTag[view] + "/";
  std::vector<int> nodes;
  std::map<int, int> local;
  auto index_of = [&](int tok) {
    auto [it, fresh] = local.emplace(tok, static_cast<int>(nodes.size()));
    if (fresh) nodes.push_back(tok);
    return it->second;
  };
  std::vector<std::vector<int>> nbhd(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) nbhd[t].push_back(index_of(targets[t]));
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const int tok = targets[t];
    if (graph && m.vocab.is_segment(tok) && static_cast<std::size_t>(tok) < graph->knn.size())
      for (SegId nb : graph->knn[static_cast<std::size_t>(tok)]) nbhd[t].push_back(index_of(nb));
  }
  auto h = nn::matmul(spatial_embed(m, nodes), m.params.at(g + "w"));
  return nn::graph_attention(h, m.params.at(g + "a_src"), m.params.at(g + "a_dst"), nbhd,
                             static_cast<std::size_t>(m.cfg.gat_heads), m.cfg.gat_slope);
}

Tensor trajectory_context(const Tensor& x_st, double complexity) {
  return nn::scale(nn::mean_rows(x_st), complexity);
}

Aggregated aggregate_views(const Model& m, const std::vector<Tensor>& g, const Tensor& q) {
  if (g.size() != 2) throw ValidationError("aggregate_views expects two views");
  const auto qw = nn::matmul(q, m.params.at("agg/w"));
  const auto& v = m.params.at("agg/v");
  std::vector<Tensor> logits;
  for (std::size_t r = 0; r < g.size(); ++r) {
    const auto pre = nn::add_bias(nn::matmul(g[r], m.params.at(std::string("agg/w_") + kViewTag[r])), qw);
    logits.push_back(nn::matmul(nn::tanh(pre), v));
  }
  Aggregated out;
  out.alpha = nn::softmax_rows(nn::concat_cols(logits));
  out.g_hat = nn::mul_col(g[0], nn::slice_cols(out.alpha, 0, 1));
  for (std::size_t r = 1; r < g.size(); ++r)
    out.g_hat = nn::add(out.g_hat, nn::mul_col(g[r], nn::slice_cols(out.alpha, r, r + 1)));
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

Tensor hybrid_embed(const Model& m, const Tensor& x_st, const Tensor& g_hat) {
  return nn::concat_cols({nn::matmul(x_st, m.params.at("enc/w_st")), nn::matmul(g_hat, m.params.at("enc/w_g"))});
}

int bucket_of(double v, int buckets) {
  const double c = std::clamp(v, 0.0, 1.0);
  return std::min(buckets - 1, static_cast<int>(std::floor(c * buckets)));
}

std::vector<int> pair_buckets(const ViewGraph& graph, std::span<const int> tokens, const Vocab& vocab, int buckets) {
  const std::size_t n = tokens.size();
  std::vector<int> out(n * n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!vocab.is_segment(tokens[i])) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!vocab.is_segment(tokens[j])) continue;
      out[i * n + j] = bucket_of(graph.normalized(tokens[i], tokens[j]), buckets);
    }
  }
  return out;
}

Tensor soft_mask_bias(const Model& m, const GraphContext& ctx, std::span<const int> tokens) {
  if (!ctx.distance || !ctx.entropy) throw ValidationError("soft-mask bias needs both view graphs");
  const std::size_t n = tokens.size();
  const ViewGraph* views[2] = {ctx.distance, ctx.entropy};
  Tensor total;
  for (int r = 0; r < 2; ++r) {
    const auto b = pair_buckets(*views[r], tokens, m.vocab, m.cfg.buckets);
    auto t = nn::bucket_bias(m.params.at(std::string("enc/smb_") + kViewTag[r]), b, n, n);
    total = r == 0 ? t : nn::add(total, t);
  }
  return total;
}

namespace {

Tensor pad_mask(const Model& m, std::span<const int> tokens) {
  const std::size_t n = tokens.size();
  bool any = false;
  std::vector<double> v(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    if (tokens[j] == m.vocab.pad()) {
      any = true;
      for (std::size_t i = 0; i < n; ++i) v[i * n + j] = -std::numeric_limits<double>::infinity();
    }
  return any ? Tensor::from({n, n}, std::move(v)) : Tensor();
}

}  // namespace

EncodeResult encode(const Model& m, const GraphContext& ctx, const EncodeInput& in, bool keep_attention) {
  const std::size_t n = in.tokens.size();
  if (n == 0) throw ValidationError("encode: empty sequence");
  if (n > static_cast<std::size_t>(m.cfg.max_seq_len))
    throw ValidationError("sequence length " + std::to_string(n) + " exceeds max_seq_len");
  const auto& P = m.params;
  const auto x_st = st_embed(m, in.tokens, in.times);

  std::vector<int> uniq(in.tokens.begin(), in.tokens.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<int> pos_idx(n);
  for (std::size_t i = 0; i < n; ++i)
    pos_idx[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), in.tokens[i]) - uniq.begin());
  const ViewGraph* views[2] = {ctx.distance, ctx.entropy};
  std::vector<Tensor> g;
  for (int r = 0; r < 2; ++r) g.push_back(nn::gather_rows(gat_encode(m, r, views[r], uniq), pos_idx));

  const auto agg = aggregate_views(m, g, trajectory_context(x_st, in.complexity));
  Tensor h = hybrid_embed(m, x_st, agg.g_hat);

  EncodeResult res;
  res.alpha = agg.alpha;
  res.bias_active = ctx.soft_mask && ctx.distance && ctx.entropy && in.complexity > ctx.theta;
  const Tensor bias = res.bias_active ? soft_mask_bias(m, ctx, in.tokens) : Tensor();
  const Tensor pmask = pad_mask(m, in.tokens);

  const auto heads = static_cast<std::size_t>(m.cfg.heads);
  const auto dk = static_cast<std::size_t>(m.cfg.d_h) / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int l = 0; l < m.cfg.layers; ++l) {
    const auto pre = layer_prefix("enc/L", l);
    const auto a = nn::layer_norm(h, P.at(pre + "ln1_g"), P.at(pre + "ln1_b"));
    const auto Q = nn::matmul(a, P.at(pre + "wq"));
    const auto K = nn::matmul(a, P.at(pre + "wk"));
    const auto Vv = nn::matmul(a, P.at(pre + "wv"));
    std::vector<Tensor> outs;
    for (std::size_t k = 0; k < heads; ++k) {
      auto s = nn::scale(nn::matmul_nt(nn::slice_cols(Q, k * dk, (k + 1) * dk), nn::slice_cols(K, k * dk, (k + 1) * dk)),
                         inv);
      if (bias) s = nn::add(s, bias);
      if (pmask) s = nn::add(s, pmask);
      const auto att = nn::softmax_rows(s);
      if (keep_attention) res.attention.emplace_back(att.data().begin(), att.data().end());
      outs.push_back(nn::matmul(att, nn::slice_cols(Vv, k * dk, (k + 1) * dk)));
    }
    h = nn::add(h, nn::add_bias(nn::matmul(nn::concat_cols(outs), P.at(pre + "wo")), P.at(pre + "bo")));
    const auto a2 = nn::layer_norm(h, P.at(pre + "ln2_g"), P.at(pre + "ln2_b"));
    const auto f = nn::relu(nn::add_bias(nn::matmul(a2, P.at(pre + "ff1_w")), P.at(pre + "ff1_b")));
    h = nn::add(h, nn::add_bias(nn::matmul(f, P.at(pre + "ff2_w")), P.at(pre + "ff2_b")));
  }
  res.z = h;
  return res;
}

Tensor mlm_logits(const Model& m, const Tensor& z) {
  return nn::add_bias(nn::matmul(z, m.params.at("mlm/w")), m.params.at("mlm/b"));
}

// ---------------------------------------------------------------------------
// Decoder

namespace {

Tensor gru_cell(const Model& m, int layer, const Tensor& gi, const Tensor& h) {
  const auto pre = layer_prefix("dec/L", layer);
  const auto H = static_cast<std::size_t>(m.cfg.dec_hidden);
  const auto gh = nn::add_bias(nn::matmul(h, m.params.at(pre + "w_hh")), m.params.at(pre + "b_hh"));
  const auto r = nn::sigmoid(nn::add(nn::slice_cols(gi, 0, H), nn::slice_cols(gh, 0, H)));
  const auto u = nn::sigmoid(nn::add(nn::slice_cols(gi, H, 2 * H), nn::slice_cols(gh, H, 2 * H)));
  const auto c = nn::tanh(nn::add(nn::slice_cols(gi, 2 * H, 3 * H), nn::mul(r, nn::slice_cols(gh, 2 * H, 3 * H))));
  return nn::add(c, nn::mul(u, nn::sub(h, c)));
}

struct DecoderState {
  std::vector<Tensor> h;
};

DecoderState initial_state(const Model& m, const Tensor& z) {
  const auto H = static_cast<std::size_t>(m.cfg.dec_hidden);
  const auto all = nn::add_bias(nn::matmul(nn::mean_rows(z), m.params.at("dec/h0_w")), m.params.at("dec/h0_b"));
  DecoderState s;
  for (int l = 0; l < m.cfg.dec_layers; ++l) {
    const auto lo = static_cast<std::size_t>(l) * H;
    s.h.push_back(nn::slice_cols(all, lo, lo + H));
  }
  return s;
}

// One recurrent step given the precomputed input-gate term of layer 0's
// token part.
DecoderState step(const Model& m, const Tensor& z, const DecoderState& s, Tensor gi0) {
  if (m.cfg.dec_attention) {
    const auto q = nn::matmul(s.h.back(), m.params.at("dec/att_q"));
    const double inv = 1.0 / std::sqrt(static_cast<double>(m.cfg.d_h));
    const auto a = nn::softmax_rows(nn::scale(nn::matmul_nt(q, z), inv));
    gi0 = nn::add(gi0, nn::matmul(nn::matmul(a, z), m.params.at("dec/L0/w_c")));
  }
  DecoderState out;
  out.h.push_back(gru_cell(m, 0, gi0, s.h[0]));
  for (int l = 1; l < m.cfg.dec_layers; ++l) {
    const auto pre = layer_prefix("dec/L", l);
    const auto gi = nn::add_bias(nn::matmul(out.h.back(), m.params.at(pre + "w_ih")), m.params.at(pre + "b_ih"));
    out.h.push_back(gru_cell(m, l, gi, s.h[static_cast<std::size_t>(l)]));
  }
  return out;
}

Tensor token_gates(const Model& m, std::span<const int> tokens) {
  return nn::add_bias(nn::matmul(spatial_embed(m, tokens), m.params.at("dec/L0/w_x")), m.params.at("dec/L0/b_ih"));
}

Tensor output_logits(const Model& m, const Tensor& top) {
  return nn::add_bias(nn::matmul(top, m.params.at("dec/out_w")), m.params.at("dec/out_b"));
}

}  // namespace

Tensor decoder_loss(const Model& m, const Tensor& z, std::span<const int> targets) {
  if (targets.empty()) throw ValidationError("decoder_loss: empty target");
  const std::size_t T = targets.size();
  std::vector<int> inputs(T);
  inputs[0] = m.vocab.bos();
  for (std::size_t t = 1; t < T; ++t) inputs[t] = targets[t - 1];
  const auto gates = token_gates(m, inputs);
  auto s = initial_state(m, z);
  std::vector<Tensor> tops;
  for (std::size_t t = 0; t < T; ++t) {
    s = step(m, z, s, nn::slice_rows(gates, t, t + 1));
    tops.push_back(s.h.back());
  }
  return nn::cross_entropy(output_logits(m, nn::concat_rows(tops)), targets);
}

namespace {

// Tokens the decoder may emit after `prev`.
std::vector<char> allowed_tokens(const Model& m, const DecodeOptions& opt, int prev) {
  std::vector<char> ok(static_cast<std::size_t>(m.vocab.size()), 0);
  if (opt.legal && m.vocab.is_segment(prev)) {
    for (SegId s : opt.legal->successors(prev)) ok[static_cast<std::size_t>(s)] = 1;
  } else {
    std::fill(ok.begin(), ok.begin() + m.vocab.num_segments, 1);
  }
  ok[static_cast<std::size_t>(m.vocab.eos())] = 1;
  return ok;
}

std::vector<double> log_softmax(std::span<const double> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lz;
  return out;
}

struct Beam {
  std::vector<SegId> segs;
  double logp = 0.0;
  DecoderState state;
  int prev = 0;
  bool done = false;
};

}  // namespace

std::vector<SegId> decode(const Model& m, const Tensor& z, const DecodeOptions& opt) {
  if (opt.max_len < 0) throw ValidationError("max_len must be non-negative");
  if (opt.beam_width < 1) throw ValidationError("beam_width must be >= 1");
  nn::NoGradGuard guard;
  const int eos = m.vocab.eos();
  std::vector<Beam> beams(1);
  beams[0].state = initial_state(m, z);
  beams[0].prev = m.vocab.bos();
  if (opt.max_len == 0) return {};
  const auto width = static_cast<std::size_t>(opt.beam_width);

  while (true) {
    struct Cand {
      double logp;
      std::size_t beam;
      int tok;
    };
    std::vector<Cand> cands;
    std::vector<DecoderState> next_states(beams.size());
    for (std::size_t b = 0; b < beams.size(); ++b) {
      if (beams[b].done) {
        cands.push_back({beams[b].logp, b, -1});
        continue;
      }
      const int prev = beams[b].prev;
      next_states[b] = step(m, z, beams[b].state, token_gates(m, std::span<const int>(&prev, 1)));
      const auto lp = log_softmax(output_logits(m, next_states[b].h.back()).data());
      const auto ok = allowed_tokens(m, opt, prev);
      // Per beam keep the best `width` tokens; ascending scan makes ties go
      // to the smaller id.
      std::vector<Cand> mine;
      for (int t = 0; t < m.vocab.size(); ++t)
        if (ok[static_cast<std::size_t>(t)]) mine.push_back({beams[b].logp + lp[static_cast<std::size_t>(t)], b, t});
      std::stable_sort(mine.begin(), mine.end(), [](const Cand& x, const Cand& y) { return x.logp > y.logp; });
      if (mine.size() > width) mine.resize(width);
      cands.insert(cands.end(), mine.begin(), mine.end());
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.logp > y.logp; });
    if (cands.size() > width) cands.resize(width);

    std::vector<Beam> next;
    bool all_done = true;
    for (const auto& c : cands) {
      Beam nb;
      const Beam& src = beams[c.beam];
      nb.segs = src.segs;
      nb.logp = c.logp;
      if (c.tok < 0) {
        nb.done = true;
      } else if (c.tok == eos) {
        nb.done = true;
      } else {
        nb.segs.push_back(static_cast<SegId>(c.tok));
        nb.state = next_states[c.beam];
        nb.prev = c.tok;
        nb.done = static_cast<int>(nb.segs.size()) >= opt.max_len;
      }
      all_done = all_done && nb.done;
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
    if (all_done) break;
  }
  return beams.front().segs;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::vector<double> arch_record(const Model& m) {
  const auto& c = m.cfg;
  return {double(c.d_e),        double(c.d_h),        double(c.layers),          double(c.heads),
          double(c.ff_mult),    double(c.buckets),    double(c.gat_heads),       c.gat_slope,
          c.delta_init,         double(c.dec_hidden), double(c.dec_layers),      c.dec_attention ? 1.0 : 0.0,
          double(c.max_seq_len), double(m.vocab.num_segments)};
}

std::vector<double> calib_record(const CorpusCalibration& c) {
  return {c.ds_min, c.ds_max, c.es_min, c.es_max, c.q25, c.q75, c.theta, c.mu, c.nu};
}

}  // namespace

void save_model(const Model& m, const CorpusCalibration* calib, const std::filesystem::path& path) {
  nn::ParamStore store = m.params.clone();
  auto arch = arch_record(m);
  store.add("meta/arch", Tensor::from({arch.size()}, arch));
  if (calib) {
    auto c = calib_record(*calib);
    store.add("meta/calib", Tensor::from({c.size()}, c));
  }
  nn::save_checkpoint(store, path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const auto store = nn::load_checkpoint(path);
  if (!store.contains("meta/arch")) throw ValidationError(path.string() + ": checkpoint lacks model architecture");
  const auto a = store.at("meta/arch").data();
  if (a.size() != 14) throw ValidationError(path.string() + ": bad architecture record");
  ModelConfig c;
  c.d_e = int(a[0]);
  c.d_h = int(a[1]);
  c.layers = int(a[2]);
  c.heads = int(a[3]);
  c.ff_mult = int(a[4]);
  c.buckets = int(a[5]);
  c.gat_heads = int(a[6]);
  c.gat_slope = a[7];
  c.delta_init = a[8];
  c.dec_hidden = int(a[9]);
  c.dec_layers = int(a[10]);
  c.dec_attention = a[11] != 0.0;
  c.max_seq_len = int(a[12]);
  LoadedModel out{Model::init(c, int(a[13]), 0), false, {}};
  out.model.params.copy_values_from(store);
  if (store.contains("meta/calib")) {
    const auto v = store.at("meta/calib").data();
    if (v.size() != 9) throw ValidationError(path.string() + ": bad calibration record");
    out.has_calib = true;
    out.calib = CorpusCalibration{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
  }
  return out;
}

}  // namespace mgcat
