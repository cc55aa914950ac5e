#include "glitr/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace glitr::report {

namespace {

void check_open(const std::ofstream& out, const std::filesystem::path& p) {
  if (!out) throw std::runtime_error("cannot write file: " + p.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// minimal svg builder; enough for lines, bands, rects and labels
class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {
    buf_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    buf_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
         << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    buf_ << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double width = 1.0) {
    buf_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
         << "\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    buf_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (auto& [x, y] : pts) buf_ << x << "," << y << " ";
    buf_ << "\"/>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& color,
               double opacity) {
    buf_ << "<polygon fill=\"" << color << "\" fill-opacity=\"" << opacity << "\" points=\"";
    for (auto& [x, y] : pts) buf_ << x << "," << y << " ";
    buf_ << "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& color) {
    buf_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
         << "\" fill=\"" << color << "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& color,
              const std::string& data_attrs) {
    buf_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << color
         << "\" " << data_attrs << "/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "middle") {
    buf_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }

  void save(const std::filesystem::path& path) {
    buf_ << "</svg>\n";
    std::ofstream out(path);
    check_open(out, path);
    out << buf_.str();
  }

  double w_, h_;

 private:
  std::ostringstream buf_;
};

const char* strategy_color(const std::string& name) {
  if (name == "uniform") return "#888888";
  if (name == "gaussian") return "#b07aa1";
  if (name == "center") return "#e15759";
  if (name == "bottomleft") return "#f28e2b";
  if (name == "teacher") return "#59a14f";
  if (name == "glitr") return "#4e79a7";
  return "#333333";
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

PixelBudget pixels_sensed(int g, int t, int h, int w) {
  if (g <= 0 || t <= 0 || h <= 0 || w <= 0)
    throw std::invalid_argument("pixels_sensed: sizes must be positive");
  if (g > std::min(h, w)) throw std::invalid_argument("pixels_sensed: glimpse exceeds frame");
  PixelBudget b;
  b.glimpse_g = g;
  b.frames_t = t;
  b.pixels_total = 1LL * g * g * t;
  b.area_fraction = double(g) * g / (double(h) * w);
  return b;
}

std::string pixel_budget_table(const std::vector<std::array<int, 4>>& rows) {
  std::ostringstream out;
  out << "glimpse  frames  frame      #pixels    area/frame\n";
  for (const auto& r : rows) {
    PixelBudget b = pixels_sensed(r[0], r[1], r[2], r[3]);
    char line[128];
    std::snprintf(line, sizeof line, "%3dx%-4d %5d   %4dx%-4d %9lld    %.4f\n", r[0], r[0], r[1],
                  r[2], r[3], b.pixels_total, b.area_fraction);
    out << line;
  }
  return out.str();
}

void write_strategy_csv(const std::filesystem::path& path,
                        const std::vector<StrategyCurve>& curves) {
  std::ofstream out(path);
  check_open(out, path);
  out << "strategy,seed,t,accuracy\n";
  for (const auto& c : curves)
    for (size_t t = 0; t < c.accuracy.size(); ++t)
      out << strategy_name(c.kind) << "," << c.seed << "," << (t + 1) << ","
          << format_double(c.accuracy[t]) << "\n";
}

std::vector<StrategyCurve> read_strategy_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "strategy,seed,t,accuracy")
    throw std::runtime_error("unexpected csv header in " + path.string());
  std::vector<StrategyCurve> curves;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) throw std::runtime_error("malformed csv row: " + line);
    StrategyKind kind = strategy_from_name(f[0]);
    uint64_t seed = std::stoull(f[1]);
    int t = std::stoi(f[2]);
    double acc = std::stod(f[3]);
    StrategyCurve* cur = nullptr;
    for (auto& c : curves)
      if (c.kind == kind && c.seed == seed) cur = &c;
    if (!cur) {
      curves.push_back({kind, seed, {}});
      cur = &curves.back();
    }
    if (int(cur->accuracy.size()) + 1 != t)
      throw std::runtime_error("csv rows out of order: " + line);
    cur->accuracy.push_back(acc);
  }
  return curves;
}

std::vector<MetricsRow> aggregate_curves(const std::vector<StrategyCurve>& curves) {
  std::map<std::string, std::vector<const StrategyCurve*>> by_kind;
  for (const auto& c : curves) by_kind[strategy_name(c.kind)].push_back(&c);
  std::vector<MetricsRow> rows;
  for (const auto& [name, group] : by_kind) {
    size_t t_len = group[0]->accuracy.size();
    for (size_t t = 0; t < t_len; ++t) {
      double mean = 0;
      for (auto* c : group) mean += c->accuracy[t];
      mean /= double(group.size());
      double var = 0;
      for (auto* c : group) var += (c->accuracy[t] - mean) * (c->accuracy[t] - mean);
      var /= double(group.size());
      rows.push_back({name, int(t) + 1, mean, std::sqrt(var), int(group.size())});
    }
  }
  return rows;
}

void accuracy_curve_svg(const std::vector<StrategyCurve>& curves,
                        const std::filesystem::path& path) {
  if (curves.empty()) throw std::invalid_argument("accuracy_curve: no curves to plot");
  auto rows = aggregate_curves(curves);
  int t_len = 0;
  for (const auto& r : rows) t_len = std::max(t_len, r.t);

  const double W = 560, H = 360, L = 60, R = 160, T = 30, B = 50;
  Svg svg(W, H);
  auto xmap = [&](double t) { return L + (t - 1) / std::max(1.0, double(t_len - 1)) * (W - L - R); };
  auto ymap = [&](double a) { return T + (1.0 - a) * (H - T - B); };

  for (int gy = 0; gy <= 10; gy += 2) {
    double y = ymap(gy / 10.0);
    svg.line(L, y, W - R, y, "#dddddd");
    svg.text(L - 8, y + 4, format_double(gy / 10.0), 10, "end");
  }
  for (int t = 1; t <= t_len; ++t) {
    svg.line(xmap(t), ymap(0), xmap(t), ymap(0) + 4, "#333333");
    svg.text(xmap(t), H - B + 18, std::to_string(t), 10);
  }
  svg.text((L + W - R) / 2, H - 12, "glimpses observed (t)", 12);
  svg.text(14, T - 10, "accuracy", 11, "start");

  std::map<std::string, std::vector<const MetricsRow*>> by_kind;
  for (const auto& r : rows) by_kind[r.strategy].push_back(&r);
  int legend_i = 0;
  for (const auto& [name, group] : by_kind) {
    const char* color = strategy_color(name);
    // mean +- 5*std band, zero-width for deterministic strategies
    std::vector<std::pair<double, double>> upper, lower;
    for (auto* r : group) {
      upper.push_back({xmap(r->t), ymap(std::min(1.0, r->accuracy_mean + 5 * r->accuracy_std))});
      lower.push_back({xmap(r->t), ymap(std::max(0.0, r->accuracy_mean - 5 * r->accuracy_std))});
    }
    std::vector<std::pair<double, double>> band = upper;
    band.insert(band.end(), lower.rbegin(), lower.rend());
    svg.polygon(band, color, 0.15);

    std::vector<std::pair<double, double>> pts;
    for (auto* r : group) {
      pts.push_back({xmap(r->t), ymap(r->accuracy_mean)});
      std::ostringstream attrs;
      attrs << "data-strategy=\"" << name << "\" data-t=\"" << r->t << "\" data-mean=\""
            << format_double(r->accuracy_mean) << "\" data-std=\""
            << format_double(r->accuracy_std) << "\"";
      svg.circle(xmap(r->t), ymap(r->accuracy_mean), 2.5, color, attrs.str());
    }
    svg.polyline(pts, color);

    double ly = T + 16.0 * legend_i++;
    svg.line(W - R + 12, ly, W - R + 34, ly, color, 2.0);
    svg.text(W - R + 40, ly + 4, name, 11, "start");
  }
  svg.save(path);
}

LocationHistogram location_histogram(const std::vector<LocationRecord>& records, int bins,
                                     int t_len) {
  if (bins < 1) throw std::invalid_argument("location_histogram: bins must be positive");
  LocationHistogram h;
  h.bins = bins;
  h.t_len = t_len;
  h.counts.assign(size_t(t_len), std::vector<long long>(size_t(bins) * bins, 0));
  long long per_t = 0;
  for (const auto& r : records) {
    if (r.t < 1 || r.t > t_len) throw std::invalid_argument("location record out of range");
    auto bin = [&](double u) {
      int b = int(std::floor((u + 1.0) / 2.0 * bins));
      return std::clamp(b, 0, bins - 1);
    };
    h.counts[size_t(r.t - 1)][size_t(bin(r.loc.y)) * bins + bin(r.loc.x)]++;
    if (r.t == 1) per_t++;
  }
  h.total_traces = per_t;
  return h;
}

void write_locations_csv(const std::filesystem::path& path,
                         const std::vector<LocationRecord>& records) {
  std::ofstream out(path);
  check_open(out, path);
  out << "clip,t,y,x\n";
  for (const auto& r : records)
    out << r.clip << "," << r.t << "," << format_double(r.loc.y) << ","
        << format_double(r.loc.x) << "\n";
}

std::vector<LocationRecord> read_locations_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "clip,t,y,x") throw std::runtime_error("unexpected csv header in " + path.string());
  std::vector<LocationRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) throw std::runtime_error("malformed csv row: " + line);
    out.push_back({std::stoi(f[0]), std::stoi(f[1]), {std::stod(f[2]), std::stod(f[3])}});
  }
  return out;
}

void histogram_svg(const LocationHistogram& h, const std::filesystem::path& path) {
  const double cell = 14, pad = 26, panel = cell * h.bins;
  const double W = pad + (panel + pad) * h.t_len, H = panel + 2 * pad + 16;
  Svg svg(W, H);
  long long peak = 1;
  for (const auto& plane : h.counts)
    for (long long c : plane) peak = std::max(peak, c);
  for (int t = 0; t < h.t_len; ++t) {
    double ox = pad + (panel + pad) * t;
    for (int by = 0; by < h.bins; ++by)
      for (int bx = 0; bx < h.bins; ++bx) {
        double v = double(h.counts[size_t(t)][size_t(by) * h.bins + bx]) / double(peak);
        int shade = int(255 - std::round(v * 225));
        char color[8];
        std::snprintf(color, sizeof color, "#%02x%02x%02x", shade, shade, 255);
        svg.rect(ox + bx * cell, pad + by * cell, cell - 1, cell - 1, color);
      }
    svg.text(ox + panel / 2, pad + panel + 16, "t=" + std::to_string(t + 1), 11);
  }
  svg.save(path);
}

void write_early_exit_csv(const std::filesystem::path& path,
                          const std::vector<EarlyExitPoint>& points) {
  std::ofstream out(path);
  check_open(out, path);
  out << "gamma,avg_t_stop,accuracy\n";
  for (const auto& p : points)
    out << format_double(p.gamma) << "," << format_double(p.avg_t_stop) << ","
        << format_double(p.accuracy) << "\n";
}

std::vector<EarlyExitPoint> read_early_exit_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "gamma,avg_t_stop,accuracy")
    throw std::runtime_error("unexpected csv header in " + path.string());
  std::vector<EarlyExitPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) throw std::runtime_error("malformed csv row: " + line);
    out.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2])});
  }
  return out;
}

void early_exit_svg(const std::vector<EarlyExitPoint>& points,
                    const std::filesystem::path& path) {
  if (points.empty()) throw std::invalid_argument("early_exit_svg: no points");
  const double W = 480, H = 320, L = 60, R = 30, T = 30, B = 50;
  double tmax = 1;
  for (const auto& p : points) tmax = std::max(tmax, p.avg_t_stop);
  Svg svg(W, H);
  auto xmap = [&](double t) { return L + t / tmax * (W - L - R); };
  auto ymap = [&](double a) { return T + (1.0 - a) * (H - T - B); };
  for (int gy = 0; gy <= 10; gy += 2) {
    svg.line(L, ymap(gy / 10.0), W - R, ymap(gy / 10.0), "#dddddd");
    svg.text(L - 8, ymap(gy / 10.0) + 4, format_double(gy / 10.0), 10, "end");
  }
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : points) {
    pts.push_back({xmap(p.avg_t_stop), ymap(p.accuracy)});
    std::ostringstream attrs;
    attrs << "data-gamma=\"" << format_double(p.gamma) << "\" data-avg-t=\""
          << format_double(p.avg_t_stop) << "\" data-acc=\"" << format_double(p.accuracy) << "\"";
    svg.circle(xmap(p.avg_t_stop), ymap(p.accuracy), 3, "#4e79a7", attrs.str());
  }
  svg.polyline(pts, "#4e79a7");
  svg.text((L + W - R) / 2, H - 12, "average glimpses before exit", 12);
  svg.text(14, T - 10, "accuracy", 11, "start");
  svg.save(path);
}

void write_train_log_csv(const std::filesystem::path& path,
                         const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  check_open(out, path);
  out << "epoch,step,cls,spatial,temporal,dist,total,lr\n";
  for (const auto& r : rows)
    out << r.epoch << "," << r.step << "," << format_double(r.cls) << ","
        << format_double(r.spatial) << "," << format_double(r.temporal) << ","
        << format_double(r.dist) << "," << format_double(r.total) << "," << format_double(r.lr)
        << "\n";
}

}  // namespace glitr::report
