#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgcat/complexity.hpp"
#include "mgcat/config.hpp"
#include "mgcat/metrics.hpp"
#include "mgcat/model.hpp"
#include "mgcat/pretrain.hpp"
#include "mgcat/recovery.hpp"
#include "mgcat/roadnet.hpp"
#include "mgcat/synthgen.hpp"

namespace mgcat {

/// Every knob of the end-to-end pipeline, read from a flat Config.
struct Settings {
  std::uint64_t seed = 7;
  int threads = 0;  // 0 keeps the OpenMP default
  bool verbose = true;

  GenConfig gen;
  int route_samples = 3;  // k
  int knn = 8;            // K
  int pair_hops = 4;
  double mu = 0.5;
  double nu = 0.5;
  std::optional<double> theta;
  bool soft_mask = true;

  double pretrain_fraction = 0.8;
  double test_fraction = 0.3;

  ModelConfig model;
  PretrainConfig pre;
  FinetuneConfig fine;
  int max_decode_len = 96;
  int beam_width = 1;
  bool legal_decoding = false;
  double sample_step = 0.0;

  static Settings from_config(const Config& c);
  Config to_config() const;
};

/// Known config keys (anything else is rejected).
const std::vector<std::string>& settings_keys();

void log_event(const Settings& s, const std::string& event, const std::string& detail);

/// Loaded artifacts shared by the later stages.
struct Workspace {
  RoadNetwork net;
  std::vector<Trajectory> pretrain_set;
  std::vector<Trajectory> finetune_set;
  std::vector<Trajectory> test_set;
  std::vector<Trajectory> test_sparse;
  TransitionStats stats;           // from the pretraining split
  TransitionStats baseline_stats;  // from all non-test trajectories
  ViewGraph distance;
  ViewGraph entropy;
  CorpusCalibration calib;

  GraphContext context(const Settings& s) const;
  double dense_complexity(const Trajectory& t) const;
  ComplexityProfile dense_profile(const Trajectory& t) const;
  double sparse_complexity(const Trajectory& t) const;
};

namespace paths {
inline const char* network = "network.csv";
inline const char* trajectories = "trajectories.csv";
inline const char* split_pretrain = "split_pretrain.csv";
inline const char* split_finetune = "split_finetune.csv";
inline const char* split_test = "split_test.csv";
inline const char* test_sparse = "test_sparse.csv";
inline const char* view_distance = "view_distance.csv";
inline const char* view_distance_meta = "view_distance.meta";
inline const char* view_entropy = "view_entropy.csv";
inline const char* view_entropy_meta = "view_entropy.meta";
inline const char* calibration = "calibration.txt";
inline const char* scores = "scores.csv";
inline const char* pretrain_ckpt = "pretrain.ckpt";
inline const char* pretrain_loss = "pretrain_loss.csv";
inline const char* model_ckpt = "model.ckpt";
inline const char* finetune_loss = "finetune_loss.csv";
inline const char* finetune_val = "finetune_val.csv";
inline const char* recovered = "recovered.csv";
inline const char* eval_model = "eval_model.csv";
inline const char* eval_baseline = "eval_baseline.csv";
inline const char* effective_config = "config.effective.txt";
}  // namespace paths

void save_calibration(const CorpusCalibration& c, const std::filesystem::path& path);
CorpusCalibration load_calibration(const std::filesystem::path& path);

/// Splits: first pretrain_fraction for pretraining; of the rest, the last
/// test_fraction is the test set.
void split_corpus(const std::vector<Trajectory>& all, const Settings& s, std::vector<Trajectory>& pre,
                  std::vector<Trajectory>& fine, std::vector<Trajectory>& test);

// Stages. Each reads its inputs from and writes its outputs to `dir`.
void stage_gen_data(const Settings& s, const std::filesystem::path& dir);
void stage_build_graphs(const Settings& s, const std::filesystem::path& dir);
Workspace load_workspace(const Settings& s, const std::filesystem::path& dir);
void stage_score(const Settings& s, const std::filesystem::path& dir, const std::filesystem::path& input,
                 const std::filesystem::path& output);
std::vector<LossRecord> stage_pretrain(const Settings& s, const std::filesystem::path& dir);
FinetuneResult stage_finetune(const Settings& s, const std::filesystem::path& dir,
                              const std::filesystem::path& init_ckpt);
void stage_recover(const Settings& s, const std::filesystem::path& dir, const std::filesystem::path& ckpt,
                   const std::filesystem::path& input, const std::filesystem::path& output);

struct EvalRow {
  std::int64_t id = 0;
  PRF1 prf;
  double owd = 0.0;
  double md = 0.0;
  double complexity = 0.0;
  Level level = Level::Low;
};

struct LevelAggregate {
  std::string level;
  std::size_t count = 0;
  double p = 0.0, r = 0.0, f1 = 0.0, owd = 0.0, md = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<LevelAggregate> levels;  // Low, Mid, High, All
  const LevelAggregate& level(const std::string& name) const;
};

EvalReport evaluate_predictions(const Workspace& ws, const std::vector<std::vector<SegId>>& predictions,
                                double sample_step);
void save_eval(const EvalReport& rep, const std::filesystem::path& rows_path, const std::filesystem::path& levels_path);

/// Model evaluation reads `recovered` (default recovered.csv); the baseline
/// recomputes its predictions from the test sparse inputs.
EvalReport stage_evaluate(const Settings& s, const std::filesystem::path& dir, bool baseline,
                          const std::filesystem::path& recovered);

void stage_dump_attention(const Settings& s, const std::filesystem::path& dir, const std::filesystem::path& ckpt,
                          const std::filesystem::path& input, const std::vector<std::int64_t>& ids);

}  // namespace mgcat
