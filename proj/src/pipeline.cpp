#include "glitr/pipeline.hpp"

#include <fstream>

#include "glitr/checkpoint.hpp"
#include "glitr/optimizer.hpp"
#include "glitr/parallel.hpp"
#include "glitr/report.hpp"
#include "glitr/strategies.hpp"

namespace glitr::pipeline {

namespace fs = std::filesystem;

namespace {

// ------------------------------------------------------------ config schema

const std::set<std::string> kKeys = {
    // geometry
    "frame", "glimpse", "patch", "channels",
    // data
    "classes", "t", "n_train", "n_val", "variant", "data_seed",
    // model
    "embed_dim", "spatial_depth", "spatial_heads", "temporal_depth", "temporal_heads",
    "mlp_ratio",
    // training
    "epochs", "batch", "seed", "threads", "weight_decay", "lr", "lr_tf", "lr_tc", "lr_tl",
    "warmup_epochs", "log_every",
    // losses
    "w_cls", "w_spatial", "w_temporal", "w_dist", "loss",
    // student options
    "loc_override",
    // evaluation
    "eval_seeds",
};

double lr_of(const Config& cfg, const std::string& key) {
  return cfg.get_double(key, cfg.get_double("lr", 1e-3));
}

struct LoopSettings {
  int epochs = 30;
  int batch = 16;
  int threads = 0;
  uint64_t seed = 0;
  int log_every = 1;
};

LoopSettings loop_from(const Config& cfg) {
  LoopSettings s;
  s.epochs = cfg.get_int("epochs", 30);
  s.batch = cfg.get_int("batch", 16);
  s.threads = resolve_threads(cfg.get_int("threads", 0));
  s.seed = uint64_t(cfg.get_int64("seed", 0));
  s.log_every = cfg.get_int("log_every", 1);
  if (s.epochs < 1 || s.batch < 1) throw std::runtime_error("epochs and batch must be positive");
  return s;
}

// --------------------------------------------------------------- batch steps

template <typename ModelT>
std::vector<ParamSet<float>*> param_sets(ModelT& m);

template <>
std::vector<ParamSet<float>*> param_sets(TeacherModel<float>& m) {
  return {&m.stack.params, &m.extra};
}
template <>
std::vector<ParamSet<float>*> param_sets(GlitrModel<float>& m) {
  return {&m.stack.params};
}
template <>
std::vector<ParamSet<float>*> param_sets(OracleModel<float>& m) {
  return {&m.params};
}

// One optimizer step over a batch. Workers own value clones of the model;
// per-clip gradients land in the worker's parameters and merge into the
// main model in worker order, so results are reproducible for a fixed
// thread setting.
template <typename ModelT, typename ClipObj>
LossBreakdown parallel_train_step(ModelT& model, std::vector<ModelT>& workers,
                                  const std::vector<int>& batch, ClipObj&& per_clip) {
  int n = int(batch.size());
  float inv = 1.0f / float(n);
  for (auto* ps : param_sets(model)) ps->zero_grad();

  LossBreakdown out;
  if (workers.empty() || n == 1) {
    for (int i : batch) backward(scale(per_clip(model, i, out), inv));
  } else {
    int w_used = std::min<int>(int(workers.size()), n);
    std::vector<LossBreakdown> parts(size_t(w_used), LossBreakdown{});
    for (int w = 0; w < w_used; ++w) {
      workers[size_t(w)].copy_values_from(model);
      for (auto* ps : param_sets(workers[size_t(w)])) ps->zero_grad();
    }
    parallel_chunks(n, w_used, [&](int w, int begin, int end) {
      for (int i = begin; i < end; ++i)
        backward(scale(per_clip(workers[size_t(w)], batch[size_t(i)], parts[size_t(w)]), inv));
    });
    auto main_sets = param_sets(model);
    for (int w = 0; w < w_used; ++w) {
      auto wsets = param_sets(workers[size_t(w)]);
      for (size_t s = 0; s < main_sets.size(); ++s)
        for (size_t p = 0; p < main_sets[s]->items.size(); ++p) {
          auto& wvar = wsets[s]->items[p].second;
          if (!wvar.raw()->has_grad) continue;
          auto& mvar = main_sets[s]->items[p].second;
          kernels::axpy(wvar.raw()->grad.numel(), 1.0f, wvar.raw()->grad.data(),
                        mvar.raw()->grad_ref().data());
        }
      out.cls += parts[size_t(w)].cls;
      out.spatial += parts[size_t(w)].spatial;
      out.temporal += parts[size_t(w)].temporal;
      out.dist += parts[size_t(w)].dist;
    }
  }
  out.cls /= n;
  out.spatial /= n;
  out.temporal /= n;
  out.dist /= n;
  return out;
}

template <typename ModelT, typename ClipObj>
std::vector<report::TrainLogRow> train_loop(ModelT& model, AdamW<float>& opt, const Dataset& train,
                                            const LoopSettings& ls, Role role, ClipObj&& per_clip,
                                            const std::function<void()>& pre_step = {}) {
  int n = train.size();
  std::vector<ModelT> workers;
  if (ls.threads > 1)
    for (int w = 0; w < ls.threads; ++w) workers.push_back(model.clone(true));

  std::vector<report::TrainLogRow> rows;
  std::vector<int> order(size_t(n), 0);
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;

  long long step = 0;
  for (int epoch = 0; epoch < ls.epochs; ++epoch) {
    Pcg32 shuffle_rng(derive_seed(ls.seed, uint64_t(epoch), 0x5a0ffull));
    for (int i = n - 1; i > 0; --i) std::swap(order[size_t(i)], order[size_t(shuffle_rng.next_int(0, i))]);
    for (int b = 0; b < n; b += ls.batch) {
      std::vector<int> batch(order.begin() + b, order.begin() + std::min(n, b + ls.batch));
      for (int i : batch) train.clip(i);  // materialize on the main thread
      if (pre_step) pre_step();
      LossBreakdown parts = parallel_train_step(model, workers, batch, per_clip);
      parts.total = total_objective(parts, role);
      if (!std::isfinite(parts.total))
        throw std::runtime_error("non-finite loss at step " + std::to_string(step) +
                                 " (cls=" + std::to_string(parts.cls) +
                                 " spatial=" + std::to_string(parts.spatial) +
                                 " temporal=" + std::to_string(parts.temporal) +
                                 " dist=" + std::to_string(parts.dist) + "); aborting");
      opt.step();
      ++step;
      if (step % ls.log_every == 0)
        rows.push_back({epoch, step, parts.cls, parts.spatial, parts.temporal, parts.dist,
                        parts.total, opt.group_lr(0)});
    }
  }
  return rows;
}

// ------------------------------------------------------------ run directories

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

Dataset load_split(const Config& cfg, const fs::path& data_dir, const std::string& split) {
  auto m = load_manifest(data_dir / (split + ".manifest"));
  GlimpseGeometry want = geometry_from(cfg);
  if (m.geom.frame_h != want.frame_h || m.geom.frame_w != want.frame_w ||
      m.geom.glimpse_g != want.glimpse_g || m.geom.patch_p != want.patch_p ||
      m.geom.channels != want.channels)
    throw std::runtime_error("dataset geometry does not match the config");
  if (m.t != cfg.get_int("t", 8)) throw std::runtime_error("dataset t does not match the config");
  return Dataset(m);
}

std::vector<double> policy_val_accuracy(const GlitrModel<float>& model, const Dataset& val,
                                        int threads) {
  return run_strategy_once(model, val, StrategyKind::glitr_policy, 0,
                           static_cast<const TeacherModel<float>*>(nullptr), threads).accuracy;
}

void write_val_accuracy_csv(const fs::path& p, const std::vector<double>& acc, int t_start = 1) {
  std::string s = "t,accuracy\n";
  for (size_t i = 0; i < acc.size(); ++i)
    s += std::to_string(t_start + int(i)) + "," + report::format_double(acc[i]) + "\n";
  write_file(p, s);
}

}  // namespace

const std::set<std::string>& allowed_keys() { return kKeys; }

GlimpseGeometry geometry_from(const Config& cfg) {
  GlimpseGeometry g;
  g.frame_h = g.frame_w = cfg.get_int("frame", 64);
  g.glimpse_g = cfg.get_int("glimpse", 24);
  g.patch_p = cfg.get_int("patch", 8);
  g.channels = cfg.get_int("channels", 1);
  g.validate();
  return g;
}

EncoderConfig encoder_from(const Config& cfg) {
  EncoderConfig e;
  e.embed_dim = cfg.get_int("embed_dim", 64);
  e.spatial_depth = cfg.get_int("spatial_depth", 4);
  e.spatial_heads = cfg.get_int("spatial_heads", 4);
  e.temporal_depth = cfg.get_int("temporal_depth", 2);
  e.temporal_heads = cfg.get_int("temporal_heads", 4);
  e.mlp_ratio = cfg.get_int("mlp_ratio", 4);
  e.num_classes = cfg.get_int("classes", 8);
  e.max_t = cfg.get_int("t", 8);
  e.validate();
  return e;
}

LossWeights weights_from_loss_list(const std::string& losses) {
  LossWeights w{0.0, 0.0, 0.0, 0.0};
  std::string cur;
  auto apply = [&](const std::string& name) {
    if (name.empty()) return;
    if (name == "cls") w.cls = 1.0;
    else if (name == "spatial") w.spatial = 1.0;
    else if (name == "temporal") w.temporal = 1.0;
    else if (name == "dist") w.dist = 1.0;
    else throw std::runtime_error("unknown loss term: " + name);
  };
  for (char c : losses) {
    if (c == ',') {
      apply(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  apply(cur);
  return w;
}

LossWeights student_weights_from(const Config& cfg) {
  if (cfg.has("loss")) {
    LossWeights w = weights_from_loss_list(cfg.get_string("loss", ""));
    w.dist = 0.0;  // the distillation term belongs to the teacher objective
    return w;
  }
  LossWeights w;
  w.cls = cfg.get_double("w_cls", 1.0);
  w.spatial = cfg.get_double("w_spatial", 1.0);
  w.temporal = cfg.get_double("w_temporal", 1.0);
  w.dist = 0.0;
  return w;
}

LossWeights teacher_weights_from(const Config& cfg) {
  LossWeights w;
  w.cls = cfg.get_double("w_cls", 1.0);
  w.spatial = cfg.get_double("w_spatial", 1.0);
  w.temporal = cfg.get_double("w_temporal", 1.0);
  w.dist = cfg.get_double("w_dist", 1.0);
  return w;
}

void prepare_run_dir(const fs::path& dir, const Config& cfg, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force)
      throw std::runtime_error("output directory " + dir.string() +
                               " already has results; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  write_file(dir / "config_snapshot.cfg", cfg.snapshot());
}

void finish_run_dir(const fs::path& dir) { write_file(dir / "run_complete", "ok\n"); }

void run_gen_data(const Config& cfg, const fs::path& data_dir, bool force) {
  cfg.validate_keys(kKeys);
  if (fs::exists(data_dir) && !fs::is_empty(data_dir) && !force) {
    // same-version rebuilds are allowed to overwrite manifests in place;
    // version mixing is rejected inside build_dataset
  }
  fs::create_directories(data_dir);
  write_file(data_dir / "config_snapshot.cfg", cfg.snapshot());
  build_dataset(cfg.get_int("n_train", 800), cfg.get_int("n_val", 200), geometry_from(cfg),
                cfg.get_int("t", 8), cfg.get_int("classes", 8),
                variant_from_name(cfg.get_string("variant", "centered")),
                uint64_t(cfg.get_int64("data_seed", 1)), data_dir);
}

TrainSummary run_train_oracle(const Config& cfg, const fs::path& data_dir, const fs::path& out_dir,
                              bool force) {
  cfg.validate_keys(kKeys);
  prepare_run_dir(out_dir, cfg, force);
  Dataset train = load_split(cfg, data_dir, "train");
  Dataset val = load_split(cfg, data_dir, "val");
  LoopSettings ls = loop_from(cfg);

  OracleModel<float> model(encoder_from(cfg), geometry_from(cfg), derive_seed(ls.seed, 0xacc));
  int64_t total_steps = int64_t(ls.epochs) * ((train.size() + ls.batch - 1) / ls.batch);
  AdamW<float> opt(cfg.get_double("weight_decay", 0.05), total_steps);
  opt.add_group({"o_", lr_of(cfg, "lr"), 0});
  opt.register_params(model.params);

  auto rows = train_loop(model, opt, train, ls, Role::student,
                         [&](const OracleModel<float>& m, int i, LossBreakdown& parts) {
                           return oracle_clip_objective(m, train.clip(i), parts);
                         });
  report::write_train_log_csv(out_dir / "train_log.csv", rows);

  // clip-level validation accuracy
  int correct = 0;
  {
    NoGradGuard ng;
    for (int i = 0; i < val.size(); ++i) {
      auto logits = model.forward_logits(val.clip(i));
      int best = 0;
      for (int k = 1; k < model.cfg.num_classes; ++k)
        if (logits.value()[size_t(k)] > logits.value()[size_t(best)]) best = k;
      if (best == val.label(i)) correct++;
    }
  }
  TrainSummary s;
  s.final_val_accuracy = double(correct) / val.size();
  s.val_accuracy = {s.final_val_accuracy};
  s.checkpoint = out_dir / "oracle.ckpt";
  save_checkpoint(model.params, s.checkpoint);
  write_val_accuracy_csv(out_dir / "val_accuracy.csv", s.val_accuracy, val.manifest().t);
  finish_run_dir(out_dir);
  return s;
}

TrainSummary run_train_teacher(const Config& cfg, const fs::path& data_dir,
                               const fs::path& out_dir,
                               const std::optional<fs::path>& oracle_ckpt, bool force) {
  cfg.validate_keys(kKeys);
  prepare_run_dir(out_dir, cfg, force);
  Dataset train = load_split(cfg, data_dir, "train");
  Dataset val = load_split(cfg, data_dir, "val");
  LoopSettings ls = loop_from(cfg);
  LossWeights w = teacher_weights_from(cfg);

  TeacherModel<float> model(encoder_from(cfg), geometry_from(cfg), derive_seed(ls.seed, 0x7ea));

  // clip-level oracle logits, computed once: the oracle is frozen
  std::vector<Tensor> oracle_logits;
  if (w.dist > 0) {
    if (!oracle_ckpt)
      throw std::runtime_error("teacher training has w_dist>0 but no --oracle checkpoint; "
                               "pass one or set w_dist=0");
    OracleModel<float> oracle = load_oracle(cfg, *oracle_ckpt);
    oracle_logits.resize(size_t(train.size()));
    for (int i = 0; i < train.size(); ++i) train.clip(i);
    parallel_chunks(train.size(), ls.threads, [&](int, int begin, int end) {
      for (int i = begin; i < end; ++i)
        oracle_logits[size_t(i)] = offline_oracle_logits(oracle, train.clip(i));
    });
  }

  int steps_per_epoch = (train.size() + ls.batch - 1) / ls.batch;
  int64_t total_steps = int64_t(ls.epochs) * steps_per_epoch;
  int64_t warmup = int64_t(cfg.get_int("warmup_epochs", 3)) * steps_per_epoch;
  AdamW<float> opt(cfg.get_double("weight_decay", 0.05), total_steps);
  opt.add_group({"t_f.", lr_of(cfg, "lr_tf"), 0});
  opt.add_group({"t_c.", lr_of(cfg, "lr_tc"), 0});
  opt.add_group({"t_l.", lr_of(cfg, "lr_tl"), warmup});
  opt.add_group({"l1.", lr_of(cfg, "lr_tl"), warmup});
  opt.register_params(model.stack.params);
  opt.register_params(model.extra);

  // frozen copies of T_f and T_c are re-snapshotted before every step
  std::shared_ptr<EncoderStack<float>> frozen;
  auto rows = train_loop(
      model, opt, train, ls, Role::teacher,
      [&](const TeacherModel<float>& m, int i, LossBreakdown& parts) {
        const Tensor* ol = oracle_logits.empty() ? nullptr : &oracle_logits[size_t(i)];
        return teacher_clip_objective(m, *frozen, train.clip(i), ol, w, parts);
      },
      [&]() { frozen = std::make_shared<EncoderStack<float>>(model.stack.clone(false)); });
  report::write_train_log_csv(out_dir / "train_log.csv", rows);

  TrainSummary s;
  s.val_accuracy = teacher_accuracy(model, val);
  s.final_val_accuracy = s.val_accuracy.back();
  s.checkpoint = out_dir / "teacher.ckpt";
  save_checkpoint(model.all_params(), s.checkpoint);
  write_val_accuracy_csv(out_dir / "val_accuracy.csv", s.val_accuracy);
  finish_run_dir(out_dir);
  return s;
}

TrainSummary run_train_student(const Config& cfg, const fs::path& data_dir,
                               const fs::path& out_dir, const fs::path& teacher_ckpt,
                               bool force) {
  cfg.validate_keys(kKeys);
  prepare_run_dir(out_dir, cfg, force);
  Dataset train = load_split(cfg, data_dir, "train");
  Dataset val = load_split(cfg, data_dir, "val");
  LoopSettings ls = loop_from(cfg);
  LossWeights w = student_weights_from(cfg);

  TeacherModel<float> teacher = load_teacher(cfg, teacher_ckpt);
  GlitrModel<float> model(encoder_from(cfg), geometry_from(cfg), derive_seed(ls.seed, 0x57d));
  model.init_from_teacher(teacher);

  std::string loc_override = cfg.get_string("loc_override", "none");
  if (loc_override != "none" && loc_override != "center")
    throw std::runtime_error("loc_override must be 'none' or 'center'");
  GlimpseLocation center{0.0, 0.0};
  const GlimpseLocation* forced = loc_override == "center" ? &center : nullptr;

  // consistency targets once per clip: the teacher is frozen
  std::vector<TeacherTargets> targets(size_t(train.size()));
  if (w.spatial > 0 || w.temporal > 0) {
    for (int i = 0; i < train.size(); ++i) train.clip(i);
    parallel_chunks(train.size(), ls.threads, [&](int, int begin, int end) {
      for (int i = begin; i < end; ++i) targets[size_t(i)] = teacher_targets(teacher, train.clip(i));
    });
  }

  int64_t total_steps = int64_t(ls.epochs) * ((train.size() + ls.batch - 1) / ls.batch);
  AdamW<float> opt(cfg.get_double("weight_decay", 0.05), total_steps);
  opt.add_group({"t_f.", lr_of(cfg, "lr_tf"), 0});
  opt.add_group({"t_c.", lr_of(cfg, "lr_tc"), 0});
  opt.add_group({"t_l.", lr_of(cfg, "lr_tl"), 0});
  opt.register_params(model.stack.params);

  auto rows = train_loop(model, opt, train, ls, Role::student,
                         [&](const GlitrModel<float>& m, int i, LossBreakdown& parts) {
                           return student_clip_objective(m, train.clip(i), targets[size_t(i)], w,
                                                         parts, true, forced);
                         });
  report::write_train_log_csv(out_dir / "train_log.csv", rows);

  TrainSummary s;
  s.val_accuracy = forced
                       ? run_strategy_once(model, val, StrategyKind::center, 0,
                                           static_cast<const TeacherModel<float>*>(nullptr),
                                           ls.threads)
                             .accuracy
                       : policy_val_accuracy(model, val, ls.threads);
  s.final_val_accuracy = s.val_accuracy.back();
  s.checkpoint = out_dir / "student.ckpt";
  save_checkpoint(model.stack.params, s.checkpoint);
  write_val_accuracy_csv(out_dir / "val_accuracy.csv", s.val_accuracy);
  finish_run_dir(out_dir);
  return s;
}

void run_eval_strategies(const Config& cfg, const fs::path& data_dir, const fs::path& out_dir,
                         const fs::path& student_ckpt,
                         const std::optional<fs::path>& teacher_ckpt,
                         const std::vector<std::string>& strategies, int n_seeds, bool force) {
  cfg.validate_keys(kKeys);
  if (strategies.empty()) throw std::runtime_error("eval-strategies: no strategies given");
  if (n_seeds < 1) throw std::runtime_error("eval-strategies: need at least one seed");
  prepare_run_dir(out_dir, cfg, force);
  Dataset val = load_split(cfg, data_dir, "val");
  int threads = resolve_threads(cfg.get_int("threads", 0));

  GlitrModel<float> model = load_student(cfg, student_ckpt);
  std::optional<TeacherModel<float>> teacher;
  std::vector<uint64_t> seeds;
  uint64_t seed0 = uint64_t(cfg.get_int64("seed", 0));
  for (int i = 0; i < n_seeds; ++i) seeds.push_back(derive_seed(seed0, uint64_t(i), 0xe7a1));

  std::vector<StrategyCurve> curves;
  bool has_policy = false;
  for (const auto& name : strategies) {
    StrategyKind kind = strategy_from_name(name);
    if (kind == StrategyKind::glitr_policy) has_policy = true;
    if (kind == StrategyKind::teacher_locations && !teacher) {
      if (!teacher_ckpt)
        throw std::runtime_error("the teacher strategy needs --teacher <checkpoint>");
      teacher = load_teacher(cfg, *teacher_ckpt);
    }
    auto group = evaluate_strategy(model, val, kind, seeds,
                                   teacher ? &*teacher : nullptr, threads);
    curves.insert(curves.end(), group.begin(), group.end());
  }
  report::write_strategy_csv(out_dir / "strategies.csv", curves);
  report::accuracy_curve_svg(curves, out_dir / "accuracy_curves.svg");

  if (has_policy) {
    auto records = collect_policy_locations(model, val, threads);
    report::write_locations_csv(out_dir / "locations.csv", records);
    auto hist = report::location_histogram(records, 8, val.manifest().t);
    report::histogram_svg(hist, out_dir / "location_histograms.svg");
  }
  finish_run_dir(out_dir);
}

void run_eval_early_exit(const Config& cfg, const fs::path& data_dir, const fs::path& out_dir,
                         const fs::path& student_ckpt, const std::vector<double>& gammas,
                         bool force) {
  cfg.validate_keys(kKeys);
  if (gammas.empty()) throw std::runtime_error("eval-early-exit: no gamma values given");
  prepare_run_dir(out_dir, cfg, force);
  Dataset val = load_split(cfg, data_dir, "val");
  int threads = resolve_threads(cfg.get_int("threads", 0));
  GlitrModel<float> model = load_student(cfg, student_ckpt);
  auto points = evaluate_early_exit(model, val, gammas, threads);
  report::write_early_exit_csv(out_dir / "early_exit.csv", points);
  report::early_exit_svg(points, out_dir / "early_exit.svg");
  finish_run_dir(out_dir);
}

TeacherModel<float> load_teacher(const Config& cfg, const fs::path& ckpt) {
  TeacherModel<float> m(encoder_from(cfg), geometry_from(cfg), 0);
  ParamSet<float> all = m.all_params();
  load_checkpoint(all, ckpt);
  return m;
}

GlitrModel<float> load_student(const Config& cfg, const fs::path& ckpt) {
  GlitrModel<float> m(encoder_from(cfg), geometry_from(cfg), 0);
  load_checkpoint(m.stack.params, ckpt);
  return m;
}

OracleModel<float> load_oracle(const Config& cfg, const fs::path& ckpt) {
  OracleModel<float> m(encoder_from(cfg), geometry_from(cfg), 0);
  load_checkpoint(m.params, ckpt);
  return m;
}

}  // namespace glitr::pipeline
