#include "mgcat/recovery.hpp"

#include <cmath>

#include "mgcat/rng.hpp"
#include "mgcat/synthgen.hpp"

namespace mgcat {

namespace {

constexpr std::uint64_t kValKey = 0x56414cULL;
constexpr std::uint64_t kSparseKey = 0x535053ULL;

std::vector<int> targets_of(const Model& m, const Trajectory& dense) {
  std::vector<int> t(dense.segs.begin(), dense.segs.end());
  t.push_back(m.vocab.eos());
  return t;
}

}  // namespace

EncodeInput make_input(const Trajectory& sparse, double complexity) {
  EncodeInput in;
  in.tokens.assign(sparse.segs.begin(), sparse.segs.end());
  in.times = sparse.times.empty() ? std::vector<double>(sparse.size(), 0.0) : sparse.times;
  in.complexity = complexity;
  return in;
}

nn::Tensor recovery_loss(const Model& m, const GraphContext& ctx, const Trajectory& sparse, double complexity,
                         const Trajectory& dense) {
  const auto enc = encode(m, ctx, make_input(sparse, complexity));
  return decoder_loss(m, enc.z, targets_of(m, dense));
}

FinetuneResult finetune(Model& m, const GraphContext& ctx, std::span<const Trajectory> dense,
                        const SparseComplexityFn& complexity, const FinetuneConfig& cfg,
                        const std::function<void(int, double, double)>& on_epoch) {
  if (cfg.batch < 1 || cfg.max_epochs < 0 || cfg.patience < 1) throw ValidationError("finetune: bad schedule");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) throw ValidationError("finetune: bad validation fraction");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dense.size(); ++i)
    if (dense[i].size() >= 3) usable.push_back(i);
  Rng split_rng(derive_seed(cfg.seed, {kValKey}));
  split_rng.shuffle(usable);
  const auto n_val = static_cast<std::size_t>(std::ceil(cfg.val_fraction * static_cast<double>(usable.size())));
  const std::vector<std::size_t> val(usable.begin(), usable.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> train(usable.begin() + static_cast<std::ptrdiff_t>(n_val), usable.end());
  const auto batch = static_cast<std::size_t>(cfg.batch);
  if (train.size() < batch) throw ValidationError("finetune: fewer training trajectories than one batch");

  auto sparse_of = [&](std::size_t i, std::uint64_t round) {
    return sparsify(dense[i], cfg.keep_ratio,
                    derive_seed(cfg.seed, {kSparseKey, round, static_cast<std::uint64_t>(dense[i].id)}));
  };
  // Validation inputs stay fixed across epochs.
  std::vector<Trajectory> val_sparse;
  std::vector<double> val_cx;
  for (auto i : val) {
    val_sparse.push_back(sparse_of(i, 0));
    val_cx.push_back(complexity(val_sparse.back()));
  }
  auto validation_loss = [&]() {
    if (val.empty()) return 0.0;
    nn::NoGradGuard guard;
    double total = 0.0;
    for (std::size_t k = 0; k < val.size(); ++k)
      total += recovery_loss(m, ctx, val_sparse[k], val_cx[k], dense[val[k]]).item();
    return total / static_cast<double>(val.size());
  };

  auto names = cfg.freeze_encoder ? m.decoder_param_names() : m.trainable_names();
  nn::ParamGroup group(m.params, names);
  Rng order_rng(derive_seed(cfg.seed, {0x4f5244ULL}));
  FinetuneResult res;
  double best = std::numeric_limits<double>::infinity();
  nn::ParamStore best_params = m.params.clone();
  int since_best = 0;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto order = train;
    order_rng.shuffle(order);
    const std::uint64_t round = cfg.resample_inputs ? static_cast<std::uint64_t>(epoch) : 1;
    double sum = 0.0;
    std::size_t nb = 0;
    for (std::size_t b = 0; b + batch <= order.size(); b += batch, ++nb) {
      nn::Tensor loss;
      for (std::size_t k = 0; k < batch; ++k) {
        const auto i = order[b + k];
        const auto sp = sparse_of(i, round);
        auto l = nn::scale(recovery_loss(m, ctx, sp, complexity(sp), dense[i]), 1.0 / static_cast<double>(batch));
        loss = loss ? nn::add(loss, l) : l;
      }
      const double value = loss.item();
      if (!std::isfinite(value))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(nb));
      nn::backward(loss);
      group.adam_step(cfg.adam);
      m.params.zero_grad();
      res.train_log.push_back({epoch, ++step, value});
      sum += value;
    }
    const double v = validation_loss();
    res.val_loss.push_back(v);
    res.epochs_run = epoch;
    if (on_epoch) on_epoch(epoch, nb ? sum / static_cast<double>(nb) : 0.0, v);
    if (v < best) {
      best = v;
      res.best_epoch = epoch;
      best_params = m.params.clone();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (res.best_epoch > 0) m.params.copy_values_from(best_params);
  return res;
}

std::vector<SegId> recover(const Model& m, const GraphContext& ctx, const Trajectory& sparse, double complexity,
                           const DecodeOptions& opt) {
  if (sparse.empty()) throw ValidationError("recover: empty input");
  nn::NoGradGuard guard;
  const auto enc = encode(m, ctx, make_input(sparse, complexity));
  return decode(m, enc.z, opt);
}

std::vector<std::vector<SegId>> recover_all(const Model& m, const GraphContext& ctx,
                                            std::span<const Trajectory> sparse, std::span<const double> complexity,
                                            const DecodeOptions& opt) {
  if (sparse.size() != complexity.size()) throw ValidationError("recover_all: complexity count differs");
  for (const auto& s : sparse)
    if (s.empty()) throw ValidationError("recover: empty input");
  std::vector<std::vector<SegId>> out(sparse.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t i = 0; i < sparse.size(); ++i) out[i] = recover(m, ctx, sparse[i], complexity[i], opt);
  return out;
}

LegalityReport legality(const RoadNetwork& net, std::span<const SegId> segs) {
  LegalityReport r;
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    ++r.transitions;
    if (!net.is_successor(segs[i], segs[i + 1])) ++r.illegal;
  }
  return r;
}

}  // namespace mgcat
