#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mgcat/model.hpp"
#include "mgcat/pretrain.hpp"

namespace mgcat {

struct FinetuneConfig {
  int max_epochs = 20;
  int batch = 16;
  double keep_ratio = 2.0 / 3.0;
  double val_fraction = 0.1;
  int patience = 3;
  bool freeze_encoder = false;
  /// Draw a fresh sparse input per trajectory every epoch.
  bool resample_inputs = true;
  nn::AdamOptions adam{};
  std::uint64_t seed = 0;
};

/// Complexity of a sparse input (as the encoder's soft-mask gate sees it).
using SparseComplexityFn = std::function<double(const Trajectory& sparse)>;

/// Encoder input for a sparse trajectory.
EncodeInput make_input(const Trajectory& sparse, double complexity);

/// Teacher-forced loss for recovering `dense` from `sparse`.
nn::Tensor recovery_loss(const Model& m, const GraphContext& ctx, const Trajectory& sparse, double complexity,
                         const Trajectory& dense);

struct FinetuneResult {
  std::vector<LossRecord> train_log;  // one row per optimizer step
  std::vector<double> val_loss;       // per epoch
  int best_epoch = 0;
  int epochs_run = 0;
};

/// Fine-tunes the decoder (and the encoder unless frozen) with early
/// stopping on a held-out fraction of `dense`. Parameters of the best epoch
/// are restored.
FinetuneResult finetune(Model& m, const GraphContext& ctx, std::span<const Trajectory> dense,
                        const SparseComplexityFn& complexity, const FinetuneConfig& cfg,
                        const std::function<void(int epoch, double train, double val)>& on_epoch = {});

/// Greedy (or beam) recovery of one sparse trajectory.
std::vector<SegId> recover(const Model& m, const GraphContext& ctx, const Trajectory& sparse, double complexity,
                           const DecodeOptions& opt);

/// Recovers every input; parallel over trajectories, deterministic.
std::vector<std::vector<SegId>> recover_all(const Model& m, const GraphContext& ctx,
                                            std::span<const Trajectory> sparse, std::span<const double> complexity,
                                            const DecodeOptions& opt);

struct LegalityReport {
  std::size_t transitions = 0;
  std::size_t illegal = 0;
};

/// Counts consecutive pairs of the recovered sequence that are not successors.
LegalityReport legality(const RoadNetwork& net, std::span<const SegId> segs);

}  // namespace mgcat
