#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mgcat/model.hpp"

namespace mgcat {

struct MaskedExample {
  std::int64_t id = 0;
  std::vector<int> tokens;     // MASK substituted
  std::vector<double> times;   // untouched
  std::vector<int> targets;    // original token at masked positions, -1 elsewhere
  double complexity = 0.0;

  std::size_t masked_count() const;
};

/// Masks floor(ratio * n) positions (at least 1) chosen uniformly. Returns
/// nullopt for trajectories shorter than 2.
std::optional<MaskedExample> mask_sequence(const Trajectory& traj, double ratio, std::uint64_t seed,
                                           const Vocab& vocab);

struct LossRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
};

void save_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path);
std::vector<LossRecord> load_loss_log(const std::filesystem::path& path);
/// Mean loss per epoch, indexed by epoch - 1.
std::vector<double> epoch_means(const std::vector<LossRecord>& log);

struct PretrainConfig {
  int epochs = 10;
  int batch = 16;
  double mask_ratio = 2.0 / 3.0;
  nn::AdamOptions adam{};
  std::uint64_t seed = 0;
};

/// MLM loss of one masked example (mean over its masked positions).
nn::Tensor mlm_loss(const Model& m, const GraphContext& ctx, const MaskedExample& ex);

/// Trains all encoder-side parameters. `complexity[i]` belongs to corpus[i].
/// One log row per optimizer step. Throws std::runtime_error on a non-finite
/// loss, naming epoch and batch.
std::vector<LossRecord> pretrain(Model& m, const GraphContext& ctx, std::span<const Trajectory> corpus,
                                 std::span<const double> complexity, const PretrainConfig& cfg,
                                 const std::function<void(int epoch, double mean_loss)>& on_epoch = {});

}  // namespace mgcat
