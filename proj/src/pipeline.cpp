#include "mgcat/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "mgcat/baseline.hpp"
#include "mgcat/csv.hpp"
#include "mgcat/kernels.hpp"
#include "mgcat/rng.hpp"
#include "mgcat/trajio.hpp"

namespace mgcat {

namespace fs = std::filesystem;

namespace {

// Substream keys for the pipeline stages.
enum : std::uint64_t { kGen = 1, kViews = 2, kInit = 3, kPre = 4, kFine = 5, kTest = 6 };

std::pair<int, int> parse_grid(const std::string& g) {
  const auto x = g.find('x');
  if (x == std::string::npos) throw ValidationError("grid must look like 8x8, got '" + g + "'");
  try {
    std::size_t p1 = 0, p2 = 0;
    const int r = std::stoi(g.substr(0, x), &p1);
    const int c = std::stoi(g.substr(x + 1), &p2);
    if (p1 != x || p2 != g.size() - x - 1) throw std::invalid_argument("trailing");
    return {r, c};
  } catch (const std::exception&) {
    throw ValidationError("grid must look like 8x8, got '" + g + "'");
  }
}

std::string b2s(bool b) { return b ? "true" : "false"; }

}  // namespace

const std::vector<std::string>& settings_keys() {
  static const std::vector<std::string> keys = {
      "seed", "threads", "verbose", "grid", "spacing", "n", "p_detour", "turn_bias", "away_weight", "speed",
      "jitter", "min_segments", "k", "K", "hops", "mu", "nu", "theta", "soft_mask", "pretrain_fraction",
      "test_fraction", "d_e", "d_h", "layers", "heads", "ff_mult", "B", "gat_heads", "dec_hidden", "dec_layers",
      "dec_attention", "max_seq_len", "epochs", "batch", "mask_ratio", "lr", "ft_epochs", "ft_batch",
      "keep_ratio", "val_fraction", "patience", "freeze_encoder", "resample_inputs", "ft_lr", "max_len",
      "beam_width", "legal_decoding", "sample_step"};
  return keys;
}

Settings Settings::from_config(const Config& c) {
  const auto& keys = settings_keys();
  for (const auto& [k, v] : c.values())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ValidationError("unknown config key '" + k + "'");
  Settings s;
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<std::int64_t>(s.seed)));
  s.threads = static_cast<int>(c.get_int("threads", s.threads));
  s.verbose = c.get_bool("verbose", s.verbose);

  auto [r, cols] = parse_grid(c.get_string("grid", "8x8"));
  s.gen.rows = r;
  s.gen.cols = cols;
  s.gen.spacing = c.get_double("spacing", s.gen.spacing);
  s.gen.count = static_cast<int>(c.get_int("n", s.gen.count));
  s.gen.p_detour = c.get_double("p_detour", s.gen.p_detour);
  s.gen.turn_bias = c.get_double("turn_bias", s.gen.turn_bias);
  s.gen.away_weight = c.get_double("away_weight", s.gen.away_weight);
  s.gen.speed = c.get_double("speed", s.gen.speed);
  s.gen.jitter = c.get_double("jitter", s.gen.jitter);
  s.gen.min_segments = static_cast<int>(c.get_int("min_segments", s.gen.min_segments));
  s.gen.seed = derive_seed(s.seed, {kGen});
  s.gen.validate();

  s.route_samples = static_cast<int>(c.get_int("k", s.route_samples));
  s.knn = static_cast<int>(c.get_int("K", s.knn));
  s.pair_hops = static_cast<int>(c.get_int("hops", s.pair_hops));
  s.mu = c.get_double("mu", s.mu);
  s.nu = c.get_double("nu", s.nu);
  if (c.has("theta")) s.theta = c.get_double("theta", 0.0);
  s.soft_mask = c.get_bool("soft_mask", s.soft_mask);
  if (s.route_samples < 1 || s.knn < 0 || s.pair_hops < 0) throw ValidationError("k >= 1, K >= 0, hops >= 0 required");

  s.pretrain_fraction = c.get_double("pretrain_fraction", s.pretrain_fraction);
  s.test_fraction = c.get_double("test_fraction", s.test_fraction);
  if (!(s.pretrain_fraction > 0.0 && s.pretrain_fraction < 1.0) || !(s.test_fraction > 0.0 && s.test_fraction < 1.0))
    throw ValidationError("split fractions must lie in (0, 1)");

  auto& m = s.model;
  m.d_e = static_cast<int>(c.get_int("d_e", m.d_e));
  m.d_h = static_cast<int>(c.get_int("d_h", m.d_h));
  m.layers = static_cast<int>(c.get_int("layers", m.layers));
  m.heads = static_cast<int>(c.get_int("heads", m.heads));
  m.ff_mult = static_cast<int>(c.get_int("ff_mult", m.ff_mult));
  m.buckets = static_cast<int>(c.get_int("B", m.buckets));
  m.gat_heads = static_cast<int>(c.get_int("gat_heads", m.gat_heads));
  m.dec_hidden = static_cast<int>(c.get_int("dec_hidden", m.dec_hidden));
  m.dec_layers = static_cast<int>(c.get_int("dec_layers", m.dec_layers));
  m.dec_attention = c.get_bool("dec_attention", m.dec_attention);
  m.max_seq_len = static_cast<int>(c.get_int("max_seq_len", m.max_seq_len));
  m.validate();

  s.pre.epochs = static_cast<int>(c.get_int("epochs", 10));
  s.pre.batch = static_cast<int>(c.get_int("batch", 16));
  s.pre.mask_ratio = c.get_double("mask_ratio", 2.0 / 3.0);
  s.pre.adam.lr = c.get_double("lr", 1e-3);
  s.pre.seed = derive_seed(s.seed, {kPre});

  s.fine.max_epochs = static_cast<int>(c.get_int("ft_epochs", s.fine.max_epochs));
  s.fine.batch = static_cast<int>(c.get_int("ft_batch", s.fine.batch));
  s.fine.keep_ratio = c.get_double("keep_ratio", s.fine.keep_ratio);
  s.fine.val_fraction = c.get_double("val_fraction", s.fine.val_fraction);
  s.fine.patience = static_cast<int>(c.get_int("patience", s.fine.patience));
  s.fine.freeze_encoder = c.get_bool("freeze_encoder", s.fine.freeze_encoder);
  s.fine.resample_inputs = c.get_bool("resample_inputs", s.fine.resample_inputs);
  s.fine.adam.lr = c.get_double("ft_lr", 1e-3);
  s.fine.seed = derive_seed(s.seed, {kFine});

  s.max_decode_len = static_cast<int>(c.get_int("max_len", s.max_decode_len));
  s.beam_width = static_cast<int>(c.get_int("beam_width", s.beam_width));
  s.legal_decoding = c.get_bool("legal_decoding", s.legal_decoding);
  s.sample_step = c.get_double("sample_step", s.sample_step);
  if (s.max_decode_len < 1 || s.beam_width < 1) throw ValidationError("max_len and beam_width must be >= 1");
  if (!(s.fine.keep_ratio > 0.0 && s.fine.keep_ratio <= 1.0)) throw ValidationError("keep_ratio must lie in (0, 1]");
  if (!(s.pre.mask_ratio >= 0.0 && s.pre.mask_ratio <= 1.0)) throw ValidationError("mask_ratio must lie in [0, 1]");
  if (!(s.pre.adam.lr > 0.0) || !(s.fine.adam.lr > 0.0)) throw ValidationError("learning rates must be positive");
  return s;
}

Config Settings::to_config() const {
  Config c;
  c.set("seed", std::to_string(seed));
  c.set("threads", std::to_string(threads));
  c.set("verbose", b2s(verbose));
  c.set("grid", std::to_string(gen.rows) + "x" + std::to_string(gen.cols));
  c.set("spacing", csv::fmt(gen.spacing));
  c.set("n", std::to_string(gen.count));
  c.set("p_detour", csv::fmt(gen.p_detour));
  c.set("turn_bias", csv::fmt(gen.turn_bias));
  c.set("away_weight", csv::fmt(gen.away_weight));
  c.set("speed", csv::fmt(gen.speed));
  c.set("jitter", csv::fmt(gen.jitter));
  c.set("min_segments", std::to_string(gen.min_segments));
  c.set("k", std::to_string(route_samples));
  c.set("K", std::to_string(knn));
  c.set("hops", std::to_string(pair_hops));
  c.set("mu", csv::fmt(mu));
  c.set("nu", csv::fmt(nu));
  if (theta) c.set("theta", csv::fmt(*theta));
  c.set("soft_mask", b2s(soft_mask));
  c.set("pretrain_fraction", csv::fmt(pretrain_fraction));
  c.set("test_fraction", csv::fmt(test_fraction));
  c.set("d_e", std::to_string(model.d_e));
  c.set("d_h", std::to_string(model.d_h));
  c.set("layers", std::to_string(model.layers));
  c.set("heads", std::to_string(model.heads));
  c.set("ff_mult", std::to_string(model.ff_mult));
  c.set("B", std::to_string(model.buckets));
  c.set("gat_heads", std::to_string(model.gat_heads));
  c.set("dec_hidden", std::to_string(model.dec_hidden));
  c.set("dec_layers", std::to_string(model.dec_layers));
  c.set("dec_attention", b2s(model.dec_attention));
  c.set("max_seq_len", std::to_string(model.max_seq_len));
  c.set("epochs", std::to_string(pre.epochs));
  c.set("batch", std::to_string(pre.batch));
  c.set("mask_ratio", csv::fmt(pre.mask_ratio));
  c.set("lr", csv::fmt(pre.adam.lr));
  c.set("ft_epochs", std::to_string(fine.max_epochs));
  c.set("ft_batch", std::to_string(fine.batch));
  c.set("keep_ratio", csv::fmt(fine.keep_ratio));
  c.set("val_fraction", csv::fmt(fine.val_fraction));
  c.set("patience", std::to_string(fine.patience));
  c.set("freeze_encoder", b2s(fine.freeze_encoder));
  c.set("resample_inputs", b2s(fine.resample_inputs));
  c.set("ft_lr", csv::fmt(fine.adam.lr));
  c.set("max_len", std::to_string(max_decode_len));
  c.set("beam_width", std::to_string(beam_width));
  c.set("legal_decoding", b2s(legal_decoding));
  c.set("sample_step", csv::fmt(sample_step));
  return c;
}

void log_event(const Settings& s, const std::string& event, const std::string& detail) {
  if (!s.verbose) return;
  std::fprintf(stderr, "[mgcat] event=%s %s\n", event.c_str(), detail.c_str());
}

// ---------------------------------------------------------------------------
// Workspace

GraphContext Workspace::context(const Settings& s) const {
  return GraphContext{&distance, &entropy, calib.theta, s.soft_mask};
}

double Workspace::dense_complexity(const Trajectory& t) const { return dense_profile(t).complexity; }

ComplexityProfile Workspace::dense_profile(const Trajectory& t) const { return score(t, net, stats, calib); }

double Workspace::sparse_complexity(const Trajectory& t) const {
  return score_sparse(t, net, stats, distance, calib).complexity;
}

void save_calibration(const CorpusCalibration& c, const fs::path& path) {
  Config cfg;
  cfg.set("ds_min", csv::fmt(c.ds_min));
  cfg.set("ds_max", csv::fmt(c.ds_max));
  cfg.set("es_min", csv::fmt(c.es_min));
  cfg.set("es_max", csv::fmt(c.es_max));
  cfg.set("q25", csv::fmt(c.q25));
  cfg.set("q75", csv::fmt(c.q75));
  cfg.set("theta", csv::fmt(c.theta));
  cfg.set("mu", csv::fmt(c.mu));
  cfg.set("nu", csv::fmt(c.nu));
  cfg.save(path);
}

CorpusCalibration load_calibration(const fs::path& path) {
  const auto cfg = Config::load(path);
  for (const char* k : {"ds_min", "ds_max", "es_min", "es_max", "q25", "q75", "theta", "mu", "nu"})
    if (!cfg.has(k)) throw ValidationError(path.string() + ": missing " + k);
  CorpusCalibration c;
  c.ds_min = cfg.get_double("ds_min", 0);
  c.ds_max = cfg.get_double("ds_max", 0);
  c.es_min = cfg.get_double("es_min", 0);
  c.es_max = cfg.get_double("es_max", 0);
  c.q25 = cfg.get_double("q25", 0);
  c.q75 = cfg.get_double("q75", 0);
  c.theta = cfg.get_double("theta", 0);
  c.mu = cfg.get_double("mu", 0);
  c.nu = cfg.get_double("nu", 0);
  return c;
}

void split_corpus(const std::vector<Trajectory>& all, const Settings& s, std::vector<Trajectory>& pre,
                  std::vector<Trajectory>& fine, std::vector<Trajectory>& test) {
  const auto n = all.size();
  const auto n_pre = static_cast<std::size_t>(std::floor(s.pretrain_fraction * static_cast<double>(n)));
  const auto n_down = n - n_pre;
  const auto n_test = static_cast<std::size_t>(std::ceil(s.test_fraction * static_cast<double>(n_down)));
  pre.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_pre));
  fine.assign(all.begin() + static_cast<std::ptrdiff_t>(n_pre), all.end() - static_cast<std::ptrdiff_t>(n_test));
  test.assign(all.end() - static_cast<std::ptrdiff_t>(n_test), all.end());
}

// ---------------------------------------------------------------------------
// Stages

void stage_gen_data(const Settings& s, const fs::path& dir) {
  fs::create_directories(dir);
  const auto net = gen_grid_network(s.gen.rows, s.gen.cols, s.gen.spacing);
  const auto trajs = gen_trajectories(net, s.gen);
  save_network(net, dir / paths::network);
  save_trajectories(trajs, dir / paths::trajectories);
  log_event(s, "gen-data", "segments=" + std::to_string(net.size()) + " trajectories=" + std::to_string(trajs.size()));
}

void stage_build_graphs(const Settings& s, const fs::path& dir) {
  const auto net = load_network(dir / paths::network);
  const auto all = load_trajectories(dir / paths::trajectories, &net);
  std::vector<Trajectory> pre, fine, test;
  split_corpus(all, s, pre, fine, test);
  if (pre.empty() || test.empty()) throw ValidationError("corpus too small to split");
  save_trajectories(pre, dir / paths::split_pretrain);
  save_trajectories(fine, dir / paths::split_finetune);
  save_trajectories(test, dir / paths::split_test);
  std::vector<Trajectory> sparse;
  for (const auto& t : test)
    sparse.push_back(sparsify(t, s.fine.keep_ratio, derive_seed(s.seed, {kTest, static_cast<std::uint64_t>(t.id)})));
  save_trajectories(sparse, dir / paths::test_sparse);

  const auto stats = build_transition_stats(pre, net);
  if (!stats.rejected().empty())
    log_event(s, "build-graphs", "rejected_trajectories=" + std::to_string(stats.rejected().size()));
  const auto pairs = build_pair_set(net, pre, s.pair_hops);
  ViewBuildOptions opt;
  opt.k = s.route_samples;
  opt.seed = derive_seed(s.seed, {kViews});
  auto [dist, ent] = build_view_graphs(net, stats, pairs, opt);
  dist = sparsify_knn(std::move(dist), s.knn);
  ent = sparsify_knn(std::move(ent), s.knn);
  save_view_graph(dist, dir / paths::view_distance, dir / paths::view_distance_meta);
  save_view_graph(ent, dir / paths::view_entropy, dir / paths::view_entropy_meta);

  auto calib = calibrate(pre, net, stats, s.mu, s.nu);
  if (s.theta) calib.theta = *s.theta;
  save_calibration(calib, dir / paths::calibration);
  log_event(s, "build-graphs",
            "pairs=" + std::to_string(pairs.size()) + " theta=" + csv::fmt(calib.theta) +
                " pretrain=" + std::to_string(pre.size()) + " finetune=" + std::to_string(fine.size()) +
                " test=" + std::to_string(test.size()));
}

Workspace load_workspace(const Settings& s, const fs::path& dir) {
  Workspace ws;
  ws.net = load_network(dir / paths::network);
  ws.pretrain_set = load_trajectories(dir / paths::split_pretrain, &ws.net);
  ws.finetune_set = load_trajectories(dir / paths::split_finetune, &ws.net);
  ws.test_set = load_trajectories(dir / paths::split_test, &ws.net);
  ws.test_sparse = load_trajectories(dir / paths::test_sparse, &ws.net);
  ws.stats = build_transition_stats(ws.pretrain_set, ws.net);
  std::vector<Trajectory> known = ws.pretrain_set;
  known.insert(known.end(), ws.finetune_set.begin(), ws.finetune_set.end());
  ws.baseline_stats = build_transition_stats(known, ws.net);
  ws.distance = load_view_graph(dir / paths::view_distance, dir / paths::view_distance_meta);
  ws.entropy = load_view_graph(dir / paths::view_entropy, dir / paths::view_entropy_meta);
  ws.calib = load_calibration(dir / paths::calibration);
  if (s.theta) ws.calib.theta = *s.theta;
  return ws;
}

void stage_score(const Settings& s, const fs::path& dir, const fs::path& input, const fs::path& output) {
  const auto ws = load_workspace(s, dir);
  const auto trajs = load_trajectories(input, &ws.net);
  std::ofstream out(output);
  if (!out) throw std::runtime_error("cannot write " + output.string());
  out << "traj_id,ds,es,complexity,level\n";
  for (const auto& t : trajs) {
    const auto p = ws.dense_profile(t);
    out << t.id << ',' << csv::fmt(p.ds) << ',' << csv::fmt(p.es) << ',' << csv::fmt(p.complexity) << ','
        << to_string(p.level) << '\n';
  }
  log_event(s, "score", "trajectories=" + std::to_string(trajs.size()));
}

std::vector<LossRecord> stage_pretrain(const Settings& s, const fs::path& dir) {
  const auto ws = load_workspace(s, dir);
  auto model = Model::init(s.model, static_cast<int>(ws.net.size()), derive_seed(s.seed, {kInit}));
  std::vector<double> cx;
  for (const auto& t : ws.pretrain_set) cx.push_back(ws.dense_complexity(t));
  const auto log = pretrain(model, ws.context(s), ws.pretrain_set, cx, s.pre, [&](int e, double l) {
    log_event(s, "pretrain-epoch", "epoch=" + std::to_string(e) + " loss=" + csv::fmt(l));
  });
  save_loss_log(log, dir / paths::pretrain_loss);
  save_model(model, &ws.calib, dir / paths::pretrain_ckpt);
  return log;
}

FinetuneResult stage_finetune(const Settings& s, const fs::path& dir, const fs::path& init_ckpt) {
  const auto ws = load_workspace(s, dir);
  auto loaded = load_model(init_ckpt);
  if (loaded.model.vocab.num_segments != static_cast<int>(ws.net.size()))
    throw ValidationError("checkpoint vocabulary does not match the network");
  auto fn = [&ws](const Trajectory& sp) { return ws.sparse_complexity(sp); };
  auto res = finetune(loaded.model, ws.context(s), ws.finetune_set, fn, s.fine, [&](int e, double tr, double v) {
    log_event(s, "finetune-epoch", "epoch=" + std::to_string(e) + " train=" + csv::fmt(tr) + " val=" + csv::fmt(v));
  });
  save_loss_log(res.train_log, dir / paths::finetune_loss);
  {
    std::ofstream out(dir / paths::finetune_val);
    out << "epoch,val_loss\n";
    for (std::size_t e = 0; e < res.val_loss.size(); ++e) out << e + 1 << ',' << csv::fmt(res.val_loss[e]) << '\n';
  }
  save_model(loaded.model, &ws.calib, dir / paths::model_ckpt);
  log_event(s, "finetune", "best_epoch=" + std::to_string(res.best_epoch));
  return res;
}

void stage_recover(const Settings& s, const fs::path& dir, const fs::path& ckpt, const fs::path& input,
                   const fs::path& output) {
  const auto ws = load_workspace(s, dir);
  const auto loaded = load_model(ckpt);
  if (loaded.model.vocab.num_segments != static_cast<int>(ws.net.size()))
    throw ValidationError("checkpoint vocabulary does not match the network");
  const auto sparse = load_trajectories(input, &ws.net);
  std::vector<double> cx;
  for (const auto& t : sparse) cx.push_back(ws.sparse_complexity(t));
  DecodeOptions opt;
  opt.max_len = s.max_decode_len;
  opt.beam_width = s.beam_width;
  opt.legal = s.legal_decoding ? &ws.net : nullptr;
  const auto preds = recover_all(loaded.model, ws.context(s), sparse, cx, opt);
  std::vector<RecoveredTrajectory> recs;
  std::size_t illegal = 0, transitions = 0;
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    recs.push_back(annotate_recovery(sparse[i], preds[i]));
    const auto rep = legality(ws.net, preds[i]);
    illegal += rep.illegal;
    transitions += rep.transitions;
  }
  save_recovered(recs, output);
  log_event(s, "recover",
            "trajectories=" + std::to_string(sparse.size()) + " illegal_transitions=" + std::to_string(illegal) + "/" +
                std::to_string(transitions));
}

// ---------------------------------------------------------------------------
// Evaluation

const LevelAggregate& EvalReport::level(const std::string& name) const {
  for (const auto& l : levels)
    if (l.level == name) return l;
  throw ValidationError("no level " + name);
}

EvalReport evaluate_predictions(const Workspace& ws, const std::vector<std::vector<SegId>>& predictions,
                                double sample_step) {
  if (predictions.size() != ws.test_set.size()) throw ValidationError("prediction count differs from test set");
  EvalReport rep;
  const double nan = std::nan("");
  for (std::size_t i = 0; i < ws.test_set.size(); ++i) {
    const auto& truth = ws.test_set[i];
    const auto& pred = predictions[i];
    EvalRow row;
    row.id = truth.id;
    row.prf = prf1(pred, truth.segs);
    if (pred.empty()) {
      row.owd = row.md = nan;
    } else {
      const auto a = to_points(ws.net, pred, sample_step);
      const auto b = to_points(ws.net, truth.segs, sample_step);
      row.owd = owd(a, b);
      row.md = merge_distance(a, b);
    }
    const auto prof = ws.dense_profile(truth);
    row.complexity = prof.complexity;
    row.level = prof.level;
    rep.rows.push_back(row);
  }
  for (const char* name : {"Low", "Mid", "High", "All"}) {
    LevelAggregate agg;
    agg.level = name;
    std::size_t n_owd = 0, n_md = 0;
    for (const auto& r : rep.rows) {
      if (agg.level != "All" && to_string(r.level) != agg.level) continue;
      ++agg.count;
      agg.p += r.prf.p;
      agg.r += r.prf.r;
      agg.f1 += r.prf.f1;
      if (std::isfinite(r.owd)) agg.owd += r.owd, ++n_owd;
      if (std::isfinite(r.md)) agg.md += r.md, ++n_md;
    }
    const double c = static_cast<double>(agg.count);
    agg.p = agg.count ? agg.p / c : nan;
    agg.r = agg.count ? agg.r / c : nan;
    agg.f1 = agg.count ? agg.f1 / c : nan;
    agg.owd = n_owd ? agg.owd / static_cast<double>(n_owd) : nan;
    agg.md = n_md ? agg.md / static_cast<double>(n_md) : nan;
    rep.levels.push_back(agg);
  }
  return rep;
}

void save_eval(const EvalReport& rep, const fs::path& rows_path, const fs::path& levels_path) {
  {
    std::ofstream out(rows_path);
    if (!out) throw std::runtime_error("cannot write " + rows_path.string());
    out << "traj_id,p,r,f1,owd,md,complexity,level\n";
    for (const auto& r : rep.rows)
      out << r.id << ',' << csv::fmt(r.prf.p) << ',' << csv::fmt(r.prf.r) << ',' << csv::fmt(r.prf.f1) << ','
          << csv::fmt(r.owd) << ',' << csv::fmt(r.md) << ',' << csv::fmt(r.complexity) << ',' << to_string(r.level)
          << '\n';
  }
  std::ofstream out(levels_path);
  if (!out) throw std::runtime_error("cannot write " + levels_path.string());
  out << "level,count,p,r,f1,owd,md\n";
  for (const auto& l : rep.levels)
    out << l.level << ',' << l.count << ',' << csv::fmt(l.p) << ',' << csv::fmt(l.r) << ',' << csv::fmt(l.f1) << ','
        << csv::fmt(l.owd) << ',' << csv::fmt(l.md) << '\n';
}

EvalReport stage_evaluate(const Settings& s, const fs::path& dir, bool baseline, const fs::path& recovered) {
  const auto ws = load_workspace(s, dir);
  std::vector<std::vector<SegId>> preds(ws.test_set.size());
  if (baseline) {
    if (ws.test_sparse.size() != ws.test_set.size()) throw ValidationError("test sparse inputs do not match test set");
#pragma omp parallel for schedule(dynamic, 8)
    for (std::size_t i = 0; i < ws.test_sparse.size(); ++i)
      preds[i] = frequency_recover(ws.test_sparse[i], ws.net, ws.baseline_stats).traj.segs;
  } else {
    std::map<std::int64_t, std::vector<SegId>> by_id;
    for (auto& t : load_recovered(recovered)) by_id[t.id] = std::move(t.segs);
    for (std::size_t i = 0; i < ws.test_set.size(); ++i) {
      auto it = by_id.find(ws.test_set[i].id);
      if (it != by_id.end()) preds[i] = it->second;
    }
  }
  auto rep = evaluate_predictions(ws, preds, s.sample_step);
  const std::string stem = baseline ? "eval_baseline" : "eval_model";
  save_eval(rep, dir / (stem + ".csv"), dir / (stem + "_levels.csv"));
  for (const auto& l : rep.levels)
    log_event(s, baseline ? "evaluate-baseline" : "evaluate",
              "level=" + l.level + " count=" + std::to_string(l.count) + " f1=" + csv::fmt(l.f1));
  return rep;
}

void stage_dump_attention(const Settings& s, const fs::path& dir, const fs::path& ckpt, const fs::path& input,
                          const std::vector<std::int64_t>& ids) {
  const auto ws = load_workspace(s, dir);
  const auto loaded = load_model(ckpt);
  const auto trajs = load_trajectories(input, &ws.net);
  const std::set<std::int64_t> want(ids.begin(), ids.end());
  std::ofstream alpha(dir / "alpha.csv");
  if (!alpha) throw std::runtime_error("cannot write attention dumps in " + dir.string());
  alpha << "traj_id,pos,alpha_d,alpha_e\n";
  nn::NoGradGuard guard;
  std::size_t dumped = 0;
  for (const auto& t : trajs) {
    if (!want.empty() && !want.count(t.id)) continue;
    const auto enc = encode(loaded.model, ws.context(s), make_input(t, ws.sparse_complexity(t)), true);
    const std::size_t n = t.size();
    for (std::size_t i = 0; i < n; ++i)
      alpha << t.id << ',' << i << ',' << csv::fmt(enc.alpha.at(i, 0)) << ',' << csv::fmt(enc.alpha.at(i, 1)) << '\n';
    // One attention file per trajectory.
    std::ofstream att(dir / ("attention_" + std::to_string(t.id) + ".csv"));
    att << "layer,head,i,j,weight\n";
    const auto heads = static_cast<std::size_t>(loaded.model.cfg.heads);
    for (std::size_t m = 0; m < enc.attention.size(); ++m)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          att << m / heads << ',' << m % heads << ',' << i << ',' << j << ','
              << csv::fmt(enc.attention[m][i * n + j]) << '\n';
    ++dumped;
  }
  log_event(s, "dump-attention", "trajectories=" + std::to_string(dumped));
}

}  // namespace mgcat
