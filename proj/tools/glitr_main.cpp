// Command-line entry point: dataset generation, oracle/teacher/student
// training, strategy and early-exit evaluation, and report assembly.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "glitr/pipeline.hpp"
#include "glitr/report.hpp"

using namespace glitr;

namespace {

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> overrides;

  Config build() const {
    Config cfg;
    if (!config_file.empty()) cfg.merge_file(config_file);
    for (const auto& kv : overrides) cfg.set_pair(kv);
    cfg.validate_keys(pipeline::allowed_keys());
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "key=value config file");
  cmd->add_option("--set", opts.overrides, "config override, key=value (repeatable)");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glitr: glimpse-based online action prediction on a synthetic sprite benchmark"};
  app.require_subcommand(1);

  CommonOpts gen_o, oracle_o, teacher_o, student_o, strat_o, exit_o, report_o;
  std::string gen_out, oracle_data, oracle_out, teacher_data, teacher_out, teacher_oracle;
  std::string student_data, student_out, student_teacher, student_loss;
  std::string strat_data, strat_out, strat_student, strat_teacher, strat_list = "uniform,center,glitr";
  int strat_seeds = 5;
  std::string exit_data, exit_out, exit_student, exit_gammas = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  bool gen_force = false, oracle_force = false, teacher_force = false, student_force = false;
  bool strat_force = false, exit_force = false;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic sprite dataset manifests");
  add_common(gen, gen_o);
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_flag("--force", gen_force, "overwrite existing outputs");

  auto* oracle = app.add_subcommand("train-oracle", "train the offline full-clip oracle");
  add_common(oracle, oracle_o);
  oracle->add_option("--data", oracle_data, "dataset directory")->required();
  oracle->add_option("--out", oracle_out, "run directory")->required();
  oracle->add_flag("--force", oracle_force, "overwrite existing outputs");

  auto* teacher = app.add_subcommand("train-teacher", "train the full-frame online teacher");
  add_common(teacher, teacher_o);
  teacher->add_option("--data", teacher_data, "dataset directory")->required();
  teacher->add_option("--out", teacher_out, "run directory")->required();
  teacher->add_option("--oracle", teacher_oracle, "oracle checkpoint for the distillation term");
  teacher->add_flag("--force", teacher_force, "overwrite existing outputs");

  auto* student = app.add_subcommand("train-student", "train the glimpse-only student");
  add_common(student, student_o);
  student->add_option("--data", student_data, "dataset directory")->required();
  student->add_option("--out", student_out, "run directory")->required();
  student->add_option("--teacher", student_teacher, "trained teacher checkpoint")->required();
  student->add_option("--loss", student_loss,
                      "loss terms, e.g. cls or cls,spatial,temporal (default: all)");
  student->add_flag("--force", student_force, "overwrite existing outputs");

  auto* strat = app.add_subcommand("eval-strategies",
                                   "evaluate glimpse strategies with a fixed student");
  add_common(strat, strat_o);
  strat->add_option("--data", strat_data, "dataset directory")->required();
  strat->add_option("--out", strat_out, "run directory")->required();
  strat->add_option("--student", strat_student, "student checkpoint")->required();
  strat->add_option("--teacher", strat_teacher, "teacher checkpoint (for the teacher strategy)");
  strat->add_option("--strategies", strat_list,
                    "comma list of uniform,gaussian,center,bottomleft,teacher,glitr");
  strat->add_option("--seeds", strat_seeds, "number of evaluation seeds");
  strat->add_flag("--force", strat_force, "overwrite existing outputs");

  auto* ee = app.add_subcommand("eval-early-exit", "early-exit accuracy/latency trade-off");
  add_common(ee, exit_o);
  ee->add_option("--data", exit_data, "dataset directory")->required();
  ee->add_option("--out", exit_out, "run directory")->required();
  ee->add_option("--student", exit_student, "student checkpoint")->required();
  ee->add_option("--gammas", exit_gammas, "comma list of confidence thresholds");
  ee->add_flag("--force", exit_force, "overwrite existing outputs");

  bool rep_pixels = false;
  std::string rep_curve, rep_hist, rep_out;
  int rep_bins = 8, rep_t = 8;
  auto* rep = app.add_subcommand("report", "pixel budgets and figures from stored CSVs");
  add_common(rep, report_o);
  rep->add_flag("--pixels", rep_pixels, "print pixel-budget table rows");
  rep->add_option("--curve", rep_curve, "strategies.csv to plot as accuracy curves");
  rep->add_option("--histogram", rep_hist, "locations.csv to bin into per-step histograms");
  rep->add_option("--out", rep_out, "output svg path for --curve/--histogram");
  rep->add_option("--bins", rep_bins, "histogram bins per axis");
  rep->add_option("--t", rep_t, "timesteps in the histogram input");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      pipeline::run_gen_data(gen_o.build(), gen_out, gen_force);
      std::cout << "dataset manifests written to " << gen_out << "\n";
    } else if (oracle->parsed()) {
      auto s = pipeline::run_train_oracle(oracle_o.build(), oracle_data, oracle_out, oracle_force);
      std::cout << "oracle val accuracy " << report::format_double(s.final_val_accuracy) << "\n";
    } else if (teacher->parsed()) {
      Config cfg = teacher_o.build();
      std::optional<std::filesystem::path> oracle_ckpt;
      if (!teacher_oracle.empty()) oracle_ckpt = teacher_oracle;
      auto s = pipeline::run_train_teacher(cfg, teacher_data, teacher_out, oracle_ckpt,
                                           teacher_force);
      std::cout << "teacher val accuracy at T " << report::format_double(s.final_val_accuracy)
                << "\n";
    } else if (student->parsed()) {
      Config cfg = student_o.build();
      if (!student_loss.empty()) cfg.set("loss", student_loss);
      auto s = pipeline::run_train_student(cfg, student_data, student_out, student_teacher,
                                           student_force);
      std::cout << "student val accuracy at T " << report::format_double(s.final_val_accuracy)
                << "\n";
    } else if (strat->parsed()) {
      Config cfg = strat_o.build();
      std::optional<std::filesystem::path> teacher_ckpt;
      if (!strat_teacher.empty()) teacher_ckpt = strat_teacher;
      pipeline::run_eval_strategies(cfg, strat_data, strat_out, strat_student, teacher_ckpt,
                                    split_list(strat_list), strat_seeds, strat_force);
      std::cout << "strategy results written to " << strat_out << "\n";
    } else if (ee->parsed()) {
      std::vector<double> gammas;
      for (const auto& g : split_list(exit_gammas)) gammas.push_back(std::stod(g));
      pipeline::run_eval_early_exit(exit_o.build(), exit_data, exit_out, exit_student, gammas,
                                    exit_force);
      std::cout << "early-exit results written to " << exit_out << "\n";
    } else if (rep->parsed()) {
      Config cfg = report_o.build();
      if (rep_pixels) {
        GlimpseGeometry g = pipeline::geometry_from(cfg);
        int t = cfg.get_int("t", 8);
        std::cout << "configured geometry:\n"
                  << report::pixel_budget_table(
                         {{g.glimpse_g, t, g.frame_h, g.frame_w}})
                  << "reference budgets at 224x224:\n"
                  << report::pixel_budget_table({{64, 16, 224, 224},
                                                 {96, 16, 224, 224},
                                                 {128, 16, 224, 224},
                                                 {64, 8, 224, 224},
                                                 {96, 8, 224, 224},
                                                 {128, 8, 224, 224}});
      }
      if (!rep_curve.empty()) {
        if (rep_out.empty()) throw std::runtime_error("--curve needs --out <svg>");
        report::accuracy_curve_svg(report::read_strategy_csv(rep_curve), rep_out);
        std::cout << "curve figure written to " << rep_out << "\n";
      }
      if (!rep_hist.empty()) {
        if (rep_out.empty()) throw std::runtime_error("--histogram needs --out <svg>");
        auto records = report::read_locations_csv(rep_hist);
        report::histogram_svg(report::location_histogram(records, rep_bins, rep_t), rep_out);
        std::cout << "histogram figure written to " << rep_out << "\n";
      }
      if (!rep_pixels && rep_curve.empty() && rep_hist.empty())
        throw std::runtime_error("report: nothing to do; pass --pixels, --curve or --histogram");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
