#include "mgcat/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include "mgcat/common.hpp"
#include "mgcat/kernels.hpp"
#include "mgcat/pipeline.hpp"

namespace mgcat::cli {

namespace fs = std::filesystem;

namespace {

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& ch : f)
    if (ch == '_') ch = '-';
  return f;
}

struct Paths {
  std::string input;
  std::string output;
  std::string checkpoint;
  std::string recovered;
  std::vector<std::int64_t> traj_ids;
  bool baseline = false;
};

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Complexity-aware trajectory recovery toolkit", "mgcat"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "run";
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--out-dir", out_dir, "directory for every artifact")->capture_default_str();

  // One flag per config key; flags override the config file.
  std::map<std::string, std::string> overrides;
  for (const auto& key : settings_keys()) {
    const std::string name = key == "K" ? "--knn" : "--" + flag_name(key);
    app.add_option_function<std::string>(
        name, [&overrides, key](const std::string& v) { overrides[key] = v; }, "config key '" + key + "'");
  }

  Paths p;
  auto* gen = app.add_subcommand("gen-data", "generate a grid network and trajectory corpus");
  auto* graphs = app.add_subcommand("build-graphs", "split the corpus, build view graphs and calibration");
  auto* score = app.add_subcommand("score", "complexity scores of a trajectory file");
  score->add_option("--input", p.input, "trajectory CSV (default: trajectories.csv)");
  score->add_option("--output", p.output, "score CSV (default: scores.csv)");
  auto* pre = app.add_subcommand("pretrain", "masked-segment pretraining of the encoder");
  auto* fine = app.add_subcommand("finetune", "train the recovery decoder");
  fine->add_option("--init", p.checkpoint, "initial checkpoint (default: pretrain.ckpt)");
  auto* rec = app.add_subcommand("recover", "recover dense trajectories from sparse inputs");
  rec->add_option("--checkpoint", p.checkpoint, "model checkpoint (default: model.ckpt)");
  rec->add_option("--input", p.input, "sparse trajectory CSV (default: test_sparse.csv)");
  rec->add_option("--output", p.output, "recovered CSV (default: recovered.csv)");
  auto* eval = app.add_subcommand("evaluate", "score recoveries against the test set");
  eval->add_flag("--baseline", p.baseline, "evaluate the frequency baseline instead of the model");
  eval->add_option("--recovered", p.recovered, "recovered CSV (default: recovered.csv)");
  auto* dump = app.add_subcommand("dump-attention", "write view weights and attention maps");
  dump->add_option("--checkpoint", p.checkpoint, "model checkpoint (default: model.ckpt)");
  dump->add_option("--input", p.input, "trajectory CSV (default: test_sparse.csv)");
  dump->add_option("--traj", p.traj_ids, "trajectory ids (default: all)");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    Config cfg;
    if (!config_path.empty()) cfg = Config::load(config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    const auto s = Settings::from_config(cfg);
    if (s.threads > 0) kernels::set_threads(s.threads);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    s.to_config().save(dir / paths::effective_config);
    auto or_default = [&dir](const std::string& v, const char* name) { return v.empty() ? dir / name : fs::path(v); };

    if (gen->parsed()) {
      stage_gen_data(s, dir);
    } else if (graphs->parsed()) {
      stage_build_graphs(s, dir);
    } else if (score->parsed()) {
      stage_score(s, dir, or_default(p.input, paths::trajectories), or_default(p.output, paths::scores));
    } else if (pre->parsed()) {
      stage_pretrain(s, dir);
    } else if (fine->parsed()) {
      stage_finetune(s, dir, or_default(p.checkpoint, paths::pretrain_ckpt));
    } else if (rec->parsed()) {
      stage_recover(s, dir, or_default(p.checkpoint, paths::model_ckpt), or_default(p.input, paths::test_sparse),
                    or_default(p.output, paths::recovered));
    } else if (eval->parsed()) {
      stage_evaluate(s, dir, p.baseline, or_default(p.recovered, paths::recovered));
    } else if (dump->parsed()) {
      stage_dump_attention(s, dir, or_default(p.checkpoint, paths::model_ckpt),
                           or_default(p.input, paths::test_sparse), p.traj_ids);
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "mgcat: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "mgcat: runtime error: " << e.what() << '\n';
    return 2;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"mgcat"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mgcat::cli
