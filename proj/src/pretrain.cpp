#include "mgcat/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mgcat/csv.hpp"
#include "mgcat/rng.hpp"

namespace mgcat {

std::size_t MaskedExample::masked_count() const {
  return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](int t) { return t >= 0; }));
}

std::optional<MaskedExample> mask_sequence(const Trajectory& traj, double ratio, std::uint64_t seed,
                                           const Vocab& vocab) {
  const std::size_t n = traj.size();
  if (n < 2) return std::nullopt;
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ValidationError("mask ratio must lie in [0, 1]");
  auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  count = std::clamp<std::size_t>(count, 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  MaskedExample ex;
  ex.id = traj.id;
  ex.tokens.assign(traj.segs.begin(), traj.segs.end());
  ex.times = traj.times.empty() ? std::vector<double>(n, 0.0) : traj.times;
  ex.targets.assign(n, -1);
  for (std::size_t k = 0; k < count; ++k) {
    const auto p = order[k];
    ex.targets[p] = ex.tokens[p];
    ex.tokens[p] = vocab.mask();
  }
  return ex;
}

void save_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,step,loss\n";
  for (const auto& r : log) out << r.epoch << ',' << r.step << ',' << csv::fmt(r.loss) << '\n';
}

std::vector<LossRecord> load_loss_log(const std::filesystem::path& path) {
  csv::Reader rd(path);
  rd.expect_header("epoch,step,loss");
  std::vector<LossRecord> out;
  std::vector<std::string> f;
  while (rd.next(f)) {
    if (f.size() != 3) rd.fail("expected 3 fields");
    out.push_back({static_cast<int>(rd.to_int(f[0])), rd.to_int(f[1]), rd.to_double(f[2])});
  }
  return out;
}

std::vector<double> epoch_means(const std::vector<LossRecord>& log) {
  std::vector<double> sum, cnt;
  for (const auto& r : log) {
    const auto e = static_cast<std::size_t>(r.epoch);
    if (e == 0) continue;
    if (sum.size() < e) {
      sum.resize(e, 0.0);
      cnt.resize(e, 0.0);
    }
    sum[e - 1] += r.loss;
    cnt[e - 1] += 1.0;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = cnt[i] > 0 ? sum[i] / cnt[i] : std::nan("");
  return sum;
}

nn::Tensor mlm_loss(const Model& m, const GraphContext& ctx, const MaskedExample& ex) {
  const auto enc = encode(m, ctx, EncodeInput{ex.tokens, ex.times, ex.complexity});
  return nn::cross_entropy(mlm_logits(m, enc.z), ex.targets);
}

std::vector<LossRecord> pretrain(Model& m, const GraphContext& ctx, std::span<const Trajectory> corpus,
                                 std::span<const double> complexity, const PretrainConfig& cfg,
                                 const std::function<void(int, double)>& on_epoch) {
  if (corpus.size() != complexity.size()) throw ValidationError("pretrain: complexity count differs from corpus");
  if (cfg.batch < 1 || cfg.epochs < 0) throw ValidationError("pretrain: bad batch or epoch count");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].size() >= 2) usable.push_back(i);
  const auto batch = static_cast<std::size_t>(cfg.batch);
  if (usable.size() < batch) throw ValidationError("pretrain: fewer usable trajectories than one batch");

  nn::ParamGroup group(m.params, m.encoder_param_names());
  Rng order_rng(derive_seed(cfg.seed, {0x5052ULL}));
  std::vector<LossRecord> log;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = usable;
    order_rng.shuffle(order);
    double epoch_sum = 0.0;
    std::size_t nb = 0;
    for (std::size_t b = 0; b + batch <= order.size(); b += batch, ++nb) {
      std::vector<MaskedExample> exs;
      std::size_t total = 0;
      for (std::size_t k = 0; k < batch; ++k) {
        const auto i = order[b + k];
        auto ex = mask_sequence(corpus[i], cfg.mask_ratio,
                                derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch),
                                                       static_cast<std::uint64_t>(corpus[i].id)}),
                                m.vocab);
        ex->complexity = complexity[i];
        total += ex->masked_count();
        exs.push_back(std::move(*ex));
      }
      // Mean over all masked positions in the batch.
      nn::Tensor loss;
      for (const auto& ex : exs) {
        auto l = nn::scale(mlm_loss(m, ctx, ex), static_cast<double>(ex.masked_count()) / static_cast<double>(total));
        loss = loss ? nn::add(loss, l) : l;
      }
      const double value = loss.item();
      if (!std::isfinite(value))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(nb));
      nn::backward(loss);
      group.adam_step(cfg.adam);
      m.params.zero_grad();
      ++step;
      log.push_back({epoch, step, value});
      epoch_sum += value;
    }
    if (on_epoch) on_epoch(epoch, nb ? epoch_sum / static_cast<double>(nb) : 0.0);
  }
  return log;
}

}  // namespace mgcat
