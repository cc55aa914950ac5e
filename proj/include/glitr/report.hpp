#pragma once

// Metrics plumbing: pixel-budget accounting, CSV interchange (the single
// metrics format), aggregated curves, and self-contained SVG figures.
// Every figure value is re-derivable from the CSVs; plotted points carry
// their exact numbers as data attributes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glitr/strategies.hpp"

namespace glitr::report {

struct PixelBudget {
  int glimpse_g = 0;
  int frames_t = 0;
  long long pixels_total = 0;   // g^2 * T
  double area_fraction = 0.0;   // g^2 / (H*W)
};

PixelBudget pixels_sensed(int g, int t, int h, int w);

// Table-style budget lines for a set of (glimpse, frames, frame_h, frame_w)
std::string pixel_budget_table(const std::vector<std::array<int, 4>>& rows);

// ---- strategy accuracy curves ----

// raw per-seed results: one row per (strategy, seed, t)
void write_strategy_csv(const std::filesystem::path& path,
                        const std::vector<StrategyCurve>& curves);
std::vector<StrategyCurve> read_strategy_csv(const std::filesystem::path& path);

struct MetricsRow {
  std::string strategy;
  int t = 1;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  int seeds = 0;
};

std::vector<MetricsRow> aggregate_curves(const std::vector<StrategyCurve>& curves);

// mean line per strategy with a mean +- 5*std band; errors on empty input
void accuracy_curve_svg(const std::vector<StrategyCurve>& curves,
                        const std::filesystem::path& path);

// ---- glimpse-location histograms ----

struct LocationHistogram {
  int bins = 8;
  int t_len = 0;
  long long total_traces = 0;
  // counts[t-1][by*bins+bx] over [-1,1]^2
  std::vector<std::vector<long long>> counts;
};

LocationHistogram location_histogram(const std::vector<LocationRecord>& records, int bins,
                                     int t_len);
void write_locations_csv(const std::filesystem::path& path,
                         const std::vector<LocationRecord>& records);
std::vector<LocationRecord> read_locations_csv(const std::filesystem::path& path);
void histogram_svg(const LocationHistogram& h, const std::filesystem::path& path);

// ---- early exit ----

void write_early_exit_csv(const std::filesystem::path& path,
                          const std::vector<EarlyExitPoint>& points);
std::vector<EarlyExitPoint> read_early_exit_csv(const std::filesystem::path& path);
void early_exit_svg(const std::vector<EarlyExitPoint>& points,
                    const std::filesystem::path& path);

// ---- training log ----

struct TrainLogRow {
  int epoch = 0;
  long long step = 0;
  double cls = 0, spatial = 0, temporal = 0, dist = 0, total = 0;
  double lr = 0;
};

void write_train_log_csv(const std::filesystem::path& path,
                         const std::vector<TrainLogRow>& rows);

// deterministic float formatting shared by all csv writers
std::string format_double(double v);

}  // namespace glitr::report
