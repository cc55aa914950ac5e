#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>

#include "glitr/report.hpp"

using namespace glitr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "glitr_report_test";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// tiny well-formedness check: tags balance and the file is a single svg root
bool svg_well_formed(const std::string& s) {
  if (s.find("<?xml") != 0) return false;
  if (s.find("<svg") == std::string::npos) return false;
  std::regex tag("<(/?)([a-zA-Z]+)[^>]*?(/?)>");
  std::vector<std::string> stack;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), tag); it != std::sregex_iterator();
       ++it) {
    bool closing = (*it)[1].length() > 0;
    bool selfclose = (*it)[3].length() > 0;
    std::string name = (*it)[2];
    if (name == "xml") continue;
    if (selfclose) continue;
    if (!closing)
      stack.push_back(name);
    else {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    }
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("pixel accounting reproduces the published budget rows") {
  CHECK(report::pixels_sensed(64, 16, 224, 224).pixels_total == 65536);
  CHECK(report::pixels_sensed(96, 16, 224, 224).pixels_total == 147456);
  CHECK(report::pixels_sensed(128, 16, 224, 224).pixels_total == 262144);
  CHECK(report::pixels_sensed(64, 8, 224, 224).pixels_total == 32768);
  CHECK(report::pixels_sensed(128, 8, 224, 224).pixels_total == 131072);
  CHECK(report::pixels_sensed(128, 8, 224, 224).area_fraction ==
        doctest::Approx(0.3265).epsilon(0.0005 / 0.3265));
  CHECK(report::pixels_sensed(24, 8, 64, 64).pixels_total == 24 * 24 * 8);
  CHECK_THROWS(report::pixels_sensed(256, 8, 224, 224));

  auto table = report::pixel_budget_table({{64, 16, 224, 224}, {128, 8, 224, 224}});
  CHECK(table.find("65536") != std::string::npos);
  CHECK(table.find("131072") != std::string::npos);
  CHECK(table.find("0.3265") != std::string::npos);
}

TEST_CASE("strategy csv round trip preserves exact values") {
  std::vector<StrategyCurve> curves;
  curves.push_back({StrategyKind::center, 1, {0.125, 0.25, 0.33333333}});
  curves.push_back({StrategyKind::uniform_random, 7, {0.1, 0.2, 0.3}});
  auto path = temp_dir() / "strategies.csv";
  report::write_strategy_csv(path, curves);
  auto back = report::read_strategy_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].kind == StrategyKind::center);
  CHECK(back[1].seed == 7);
  for (size_t i = 0; i < 2; ++i)
    for (size_t t = 0; t < 3; ++t)
      CHECK(float(back[i].accuracy[t]) == float(curves[i].accuracy[t]));
}

TEST_CASE("aggregation: deterministic strategies have zero std") {
  std::vector<StrategyCurve> curves;
  curves.push_back({StrategyKind::center, 1, {0.5, 0.6}});
  curves.push_back({StrategyKind::center, 2, {0.5, 0.6}});
  curves.push_back({StrategyKind::uniform_random, 1, {0.2, 0.4}});
  curves.push_back({StrategyKind::uniform_random, 2, {0.4, 0.6}});
  auto rows = report::aggregate_curves(curves);
  for (const auto& r : rows) {
    if (r.strategy == "center") {
      CHECK(r.accuracy_std == 0.0);
      CHECK(r.seeds == 2);
    }
    if (r.strategy == "uniform" && r.t == 1) {
      CHECK(r.accuracy_mean == doctest::Approx(0.3));
      CHECK(r.accuracy_std == doctest::Approx(0.1));
    }
  }
}

TEST_CASE("accuracy curve svg: well-formed, embeds exact values, zero-width bands") {
  std::vector<StrategyCurve> curves;
  curves.push_back({StrategyKind::center, 1, {0.125, 0.625, 0.875}});
  auto path = temp_dir() / "curve.svg";
  report::accuracy_curve_svg(curves, path);
  std::string svg = slurp(path);
  CHECK(svg_well_formed(svg));

  // readback: plotted values equal the csv-aggregated values exactly
  auto rows = report::aggregate_curves(curves);
  for (const auto& r : rows) {
    std::string needle = "data-t=\"" + std::to_string(r.t) + "\" data-mean=\"" +
                         report::format_double(r.accuracy_mean) + "\"";
    INFO("missing ", needle);
    CHECK(svg.find(needle) != std::string::npos);
    CHECK(svg.find("data-std=\"0\"") != std::string::npos);  // deterministic: zero band
  }

  CHECK_THROWS(report::accuracy_curve_svg({}, temp_dir() / "empty.svg"));
}

TEST_CASE("location histogram: mass per step equals trace count") {
  std::vector<LocationRecord> recs;
  // 5 traces, 3 steps each; t=1 always at the center (predefined start)
  for (int c = 0; c < 5; ++c) {
    recs.push_back({c, 1, {0.0, 0.0}});
    recs.push_back({c, 2, {-0.8 + 0.3 * c, 0.4}});
    recs.push_back({c, 3, {0.9, -0.9}});
  }
  auto h = report::location_histogram(recs, 4, 3);
  CHECK(h.total_traces == 5);
  for (int t = 0; t < 3; ++t) {
    long long mass = 0;
    for (long long v : h.counts[size_t(t)]) mass += v;
    CHECK(mass == 5);
  }
  // t=1 is a single spike at the center bin
  long long spike = h.counts[0][size_t(2) * 4 + 2];
  CHECK(spike == 5);

  auto path = temp_dir() / "hist.svg";
  report::histogram_svg(h, path);
  CHECK(svg_well_formed(slurp(path)));

  auto csv = temp_dir() / "locations.csv";
  report::write_locations_csv(csv, recs);
  auto back = report::read_locations_csv(csv);
  REQUIRE(back.size() == recs.size());
  CHECK(back[3].t == recs[3].t);
  CHECK(float(back[3].loc.y) == float(recs[3].loc.y));
}

TEST_CASE("early exit csv and figure") {
  std::vector<EarlyExitPoint> pts = {{0.1, 1.0, 0.4}, {0.5, 2.5, 0.7}, {0.9, 3.75, 0.8}};
  auto csv = temp_dir() / "early.csv";
  report::write_early_exit_csv(csv, pts);
  auto back = report::read_early_exit_csv(csv);
  REQUIRE(back.size() == 3);
  CHECK(back[1].avg_t_stop == doctest::Approx(2.5));

  auto fig = temp_dir() / "early.svg";
  report::early_exit_svg(pts, fig);
  std::string svg = slurp(fig);
  CHECK(svg_well_formed(svg));
  CHECK(svg.find("data-gamma=\"0.5\"") != std::string::npos);
}

TEST_CASE("train log csv schema") {
  std::vector<report::TrainLogRow> rows = {{0, 1, 2.07, 0.1, 0.2, 0.0, 2.37, 1e-3}};
  auto path = temp_dir() / "log.csv";
  report::write_train_log_csv(path, rows);
  std::string s = slurp(path);
  CHECK(s.find("epoch,step,cls,spatial,temporal,dist,total,lr") == 0);
  CHECK(s.find("0,1,2.07,0.1,0.2,0,2.37,0.001") != std::string::npos);
}
