#pragma once

// End-to-end runs behind the CLI subcommands: dataset generation, oracle /
// teacher / student training, strategy evaluation and early exit. The
// acceptance suite drives the same entry points, so everything a figure or
// table shows comes out of these code paths.
//
// Every run writes a sorted config snapshot and a `run_complete` marker into
// its output directory; finished directories are not overwritten without
// `force`. With a fixed seed, thread setting and config, re-running a
// command reproduces byte-identical CSV outputs.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glitr/config.hpp"
#include "glitr/data.hpp"
#include "glitr/encoders.hpp"
#include "glitr/losses.hpp"
#include "glitr/student.hpp"
#include "glitr/teacher.hpp"

namespace glitr::pipeline {

// config schema (typo-guarded); defaults mirror the desk-scale setup
const std::set<std::string>& allowed_keys();

GlimpseGeometry geometry_from(const Config& cfg);
EncoderConfig encoder_from(const Config& cfg);
LossWeights student_weights_from(const Config& cfg);
LossWeights teacher_weights_from(const Config& cfg);

// parses "cls,spatial,temporal" style loss lists into weight toggles
LossWeights weights_from_loss_list(const std::string& losses);

void prepare_run_dir(const std::filesystem::path& dir, const Config& cfg, bool force);
void finish_run_dir(const std::filesystem::path& dir);

struct TrainSummary {
  std::filesystem::path checkpoint;
  std::vector<double> val_accuracy;  // per t (oracle: single clip-level entry)
  double final_val_accuracy = 0.0;
};

void run_gen_data(const Config& cfg, const std::filesystem::path& data_dir, bool force);

TrainSummary run_train_oracle(const Config& cfg, const std::filesystem::path& data_dir,
                              const std::filesystem::path& out_dir, bool force);

TrainSummary run_train_teacher(const Config& cfg, const std::filesystem::path& data_dir,
                               const std::filesystem::path& out_dir,
                               const std::optional<std::filesystem::path>& oracle_ckpt,
                               bool force);

TrainSummary run_train_student(const Config& cfg, const std::filesystem::path& data_dir,
                               const std::filesystem::path& out_dir,
                               const std::filesystem::path& teacher_ckpt, bool force);

void run_eval_strategies(const Config& cfg, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir,
                         const std::filesystem::path& student_ckpt,
                         const std::optional<std::filesystem::path>& teacher_ckpt,
                         const std::vector<std::string>& strategies, int n_seeds, bool force);

void run_eval_early_exit(const Config& cfg, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir,
                         const std::filesystem::path& student_ckpt,
                         const std::vector<double>& gammas, bool force);

// model factories + checkpoint io used by the acceptance suite
TeacherModel<float> load_teacher(const Config& cfg, const std::filesystem::path& ckpt);
GlitrModel<float> load_student(const Config& cfg, const std::filesystem::path& ckpt);
OracleModel<float> load_oracle(const Config& cfg, const std::filesystem::path& ckpt);

}  // namespace glitr::pipeline
