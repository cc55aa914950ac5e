#include "glitr/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include "glitr/rng.hpp"

namespace glitr {

namespace {

constexpr int kHalf = kSpriteSize / 2;  // center c covers rows [c-6, c+5]

// label textures
float checker_ink(int r, int c) { return ((r / 3 + c / 3) % 2 == 0) ? 1.0f : 0.0f; }
float bullseye_ink(int r, int c) {
  double d = std::max(std::abs(r - 5.5), std::abs(c - 5.5));
  return (d >= 4.5 || d <= 1.5) ? 1.0f : 0.0f;
}
// distractor textures, distinct from both label textures
float diag_ink(int r, int c) { return ((r + c) % 4 < 2) ? 1.0f : 0.0f; }
float hbars_ink(int r, int c) { (void)c; return (r % 4 < 2) ? 1.0f : 0.0f; }

float pattern_ink(int pattern, int r, int c) {
  switch (pattern) {
    case 0: return checker_ink(r, c);
    case 1: return bullseye_ink(r, c);
    case 2: return diag_ink(r, c);
    default: return hbars_ink(r, c);
  }
}

struct Velocity {
  int vy, vx;
};
Velocity direction_velocity(int dir) {
  switch (dir) {
    case 0: return {-kSpriteSpeed, 0};  // up
    case 1: return {0, kSpriteSpeed};   // right
    case 2: return {kSpriteSpeed, 0};   // down
    default: return {0, -kSpriteSpeed}; // left
  }
}

// reflect off [lo, hi]; speed is small enough that one bounce suffices
void advance(int& c, int& v, int lo, int hi) {
  int n = c + v;
  if (n > hi) {
    n = 2 * hi - n;
    v = -v;
  } else if (n < lo) {
    n = 2 * lo - n;
    v = -v;
  }
  c = n;
}

struct Sprite {
  int cy, cx, vy, vx, pattern;
};

void stamp(Tensor& frames, int t, const GlimpseGeometry& g, const Sprite& s) {
  size_t per_frame = size_t(g.channels) * g.frame_h * g.frame_w;
  float* f = frames.data() + size_t(t) * per_frame;
  for (int r = 0; r < kSpriteSize; ++r)
    for (int c = 0; c < kSpriteSize; ++c) {
      float ink = pattern_ink(s.pattern, r, c);
      if (ink <= 0.0f) continue;
      int y = s.cy - kHalf + r, x = s.cx - kHalf + c;
      if (y < 0 || y >= g.frame_h || x < 0 || x >= g.frame_w) continue;
      for (int ch = 0; ch < g.channels; ++ch) {
        float& px = f[(size_t(ch) * g.frame_h + y) * g.frame_w + x];
        px = std::max(px, ink);
      }
    }
}

bool boxes_overlap(int ay, int ax, int by, int bx) {
  return std::abs(ay - by) < kSpriteSize && std::abs(ax - bx) < kSpriteSize;
}

// a sprite at center c covers [c-6, c+5]; centers in [6, extent-6] stay inside
int center_lo() { return kHalf; }
int center_hi(int extent) { return extent - kHalf; }

}  // namespace

std::string variant_name(DataVariant v) {
  return v == DataVariant::centered ? "centered" : "bottomleft";
}

DataVariant variant_from_name(const std::string& s) {
  if (s == "centered") return DataVariant::centered;
  if (s == "bottomleft") return DataVariant::bottomleft;
  throw ManifestError("unknown dataset variant: " + s);
}

StartRegion start_region(int direction, const GlimpseGeometry& geom, int t, DataVariant variant) {
  int lo_y = center_lo(), hi_y = center_hi(geom.frame_h);
  int lo_x = center_lo(), hi_x = center_hi(geom.frame_w);
  int travel = (t - 1) * kSpriteSpeed;
  StartRegion r{lo_y, hi_y, lo_x, hi_x};
  Velocity v = direction_velocity(direction);
  // shrink the start interval so the unreflected path stays in frame
  if (v.vy < 0) r.cy_lo = std::min(lo_y + travel, hi_y);
  if (v.vy > 0) r.cy_hi = std::max(hi_y - travel, lo_y);
  if (v.vx < 0) r.cx_lo = std::min(lo_x + travel, hi_x);
  if (v.vx > 0) r.cx_hi = std::max(hi_x - travel, lo_x);
  if (variant == DataVariant::bottomleft) {
    // label sprites spawn in the bottom-left quadrant
    r.cy_lo = std::max(r.cy_lo, geom.frame_h / 2);
    r.cx_hi = std::min(r.cx_hi, geom.frame_w / 2 - 1);
    r.cy_hi = std::max(r.cy_hi, r.cy_lo);
    r.cx_lo = std::min(r.cx_lo, r.cx_hi);
  }
  return r;
}

VideoClip generate_clip(uint64_t seed, int label, const GlimpseGeometry& geom, int t,
                        DataVariant variant) {
  geom.validate();
  if (label < 0 || label >= 8) throw std::invalid_argument("generate_clip: label must be in [0,8)");
  if (t < 1) throw std::invalid_argument("generate_clip: need t >= 1");
  if (geom.frame_h < 2 * kSpriteSize || geom.frame_w < 2 * kSpriteSize)
    throw std::invalid_argument("generate_clip: frame too small for sprites");

  Pcg32 rng(seed);
  int dir = label / 2;
  int pattern = label % 2;

  Sprite main{};
  {
    StartRegion r = start_region(dir, geom, t, variant);
    Velocity v = direction_velocity(dir);
    main = {rng.next_int(r.cy_lo, r.cy_hi), rng.next_int(r.cx_lo, r.cx_hi), v.vy, v.vx, pattern};
  }

  std::array<Sprite, kNumDistractors> distractors{};
  for (int d = 0; d < kNumDistractors; ++d) {
    int pat = 2 + rng.next_int(0, 1);
    int ddir = rng.next_int(0, 3);
    StartRegion r = start_region(ddir, geom, t, DataVariant::centered);
    Velocity v = direction_velocity(ddir);
    Sprite s{0, 0, v.vy, v.vx, pat};
    // a few retries to avoid spawning on top of the label sprite
    for (int attempt = 0; attempt < 8; ++attempt) {
      s.cy = rng.next_int(r.cy_lo, r.cy_hi);
      s.cx = rng.next_int(r.cx_lo, r.cx_hi);
      if (!boxes_overlap(s.cy, s.cx, main.cy, main.cx)) break;
    }
    distractors[d] = s;
  }

  VideoClip clip;
  clip.label = label;
  clip.frames = Tensor({t, geom.channels, geom.frame_h, geom.frame_w});
  clip.sprite_track.reserve(t);

  int lo_y = center_lo(), hi_y = center_hi(geom.frame_h);
  int lo_x = center_lo(), hi_x = center_hi(geom.frame_w);
  size_t per_frame = size_t(geom.channels) * geom.frame_h * geom.frame_w;

  for (int step = 0; step < t; ++step) {
    float* f = clip.frames.data() + size_t(step) * per_frame;
    for (size_t i = 0; i < per_frame; ++i) {
      double n = kNoiseSigma * rng.gauss_ih();
      f[i] = float(std::clamp(n, 0.0, 1.0));
    }
    for (const Sprite& s : distractors) stamp(clip.frames, step, geom, s);
    stamp(clip.frames, step, geom, main);

    clip.sprite_track.push_back(
        {2.0 * main.cy / (geom.frame_h - 1) - 1.0, 2.0 * main.cx / (geom.frame_w - 1) - 1.0});

    if (step + 1 < t) {
      advance(main.cy, main.vy, lo_y, hi_y);
      advance(main.cx, main.vx, lo_x, hi_x);
      for (Sprite& s : distractors) {
        advance(s.cy, s.vy, lo_y, hi_y);
        advance(s.cx, s.vx, lo_x, hi_x);
      }
    }
  }
  return clip;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write manifest: " + path.string());
  out << "glitr-dataset v=" << m.version << " split=" << m.split
      << " variant=" << variant_name(m.variant) << " frame_h=" << m.geom.frame_h
      << " frame_w=" << m.geom.frame_w << " glimpse=" << m.geom.glimpse_g
      << " patch=" << m.geom.patch_p << " channels=" << m.geom.channels << " t=" << m.t
      << " classes=" << m.classes << " entries=" << m.entries.size() << "\n";
  for (const auto& e : m.entries) out << e.id << " " << e.seed << " " << e.label << "\n";
  if (!out) throw ManifestError("manifest write failed: " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestNotFound("manifest not found: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw ManifestError("empty manifest: " + path.string());

  std::istringstream hs(header);
  std::string tag;
  hs >> tag;
  if (tag != "glitr-dataset") throw ManifestError("bad manifest header: " + path.string());
  std::map<std::string, std::string> kv;
  std::string field;
  while (hs >> field) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw ManifestError("malformed header field: " + field);
    kv[field.substr(0, eq)] = field.substr(eq + 1);
  }
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw ManifestError("manifest missing header field: " + k);
    return it->second;
  };

  DatasetManifest m;
  m.version = std::stoi(need("v"));
  m.split = need("split");
  m.variant = variant_from_name(need("variant"));
  m.geom.frame_h = std::stoi(need("frame_h"));
  m.geom.frame_w = std::stoi(need("frame_w"));
  m.geom.glimpse_g = std::stoi(need("glimpse"));
  m.geom.patch_p = std::stoi(need("patch"));
  m.geom.channels = std::stoi(need("channels"));
  m.t = std::stoi(need("t"));
  m.classes = std::stoi(need("classes"));
  size_t expected = std::stoul(need("entries"));

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.id >> e.seed >> e.label)) throw ManifestError("malformed manifest entry: " + line);
    if (e.label < 0 || e.label >= m.classes)
      throw ManifestError("manifest entry label out of range: " + line);
    m.entries.push_back(e);
  }
  if (m.entries.size() != expected)
    throw ManifestError("manifest entry count mismatch: expected " + std::to_string(expected) +
                        ", found " + std::to_string(m.entries.size()));
  m.geom.validate();
  return m;
}

std::pair<DatasetManifest, DatasetManifest> build_dataset(int n_train, int n_val,
                                                          const GlimpseGeometry& geom, int t,
                                                          int classes, DataVariant variant,
                                                          uint64_t root_seed,
                                                          const std::filesystem::path& dir) {
  if (n_train <= 0 || n_val <= 0) throw std::invalid_argument("build_dataset: need positive sizes");
  if (classes != 8) throw std::invalid_argument("build_dataset: generator encodes exactly 8 classes");
  if (n_train % classes != 0 || n_val % classes != 0)
    throw std::invalid_argument("build_dataset: sizes must be divisible by the class count");
  if (n_train > 900000) throw std::invalid_argument("build_dataset: train split too large");
  geom.validate();

  std::filesystem::create_directories(dir);
  for (const char* name : {"train.manifest", "val.manifest"}) {
    auto p = dir / name;
    if (std::filesystem::exists(p)) {
      DatasetManifest old = load_manifest(p);
      if (old.version != kGeneratorVersion)
        throw ManifestError("existing manifest " + p.string() + " has generator version " +
                            std::to_string(old.version) + ", refusing to mix with version " +
                            std::to_string(kGeneratorVersion));
    }
  }

  auto make = [&](const std::string& split, int n, uint64_t seed_base) {
    DatasetManifest m;
    m.split = split;
    m.variant = variant;
    m.geom = geom;
    m.t = t;
    m.classes = classes;
    for (int i = 0; i < n; ++i) m.entries.push_back({i, seed_base + uint64_t(i), i % classes});
    return m;
  };
  // disjoint seed ranges per split
  DatasetManifest train = make("train", n_train, root_seed);
  DatasetManifest val = make("val", n_val, root_seed + 1000000);
  write_manifest(train, dir / "train.manifest");
  write_manifest(val, dir / "val.manifest");
  return {train, val};
}

}  // namespace glitr
