#pragma once

// Deterministic synthetic "tracked sprite" video benchmark. Each clip shows
// one 12x12 label sprite whose texture and motion direction jointly encode
// the class (4 directions x 2 textures = 8 classes), two moving distractor
// sprites with non-label textures, and gaussian background noise. The label
// is not decodable from a single fixed glimpse: the texture needs an
// on-sprite glimpse and the direction needs at least two timesteps.
//
// Clips are regenerated bit-exactly from (seed, label, generator version) on
// any machine; datasets persist as manifests of those triples, not pixels.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "glitr/glimpse.hpp"
#include "glitr/tensor.hpp"

namespace glitr {

struct ManifestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ManifestNotFound : ManifestError {
  using ManifestError::ManifestError;
};

enum class DataVariant { centered, bottomleft };

std::string variant_name(DataVariant v);
DataVariant variant_from_name(const std::string& s);

inline constexpr int kGeneratorVersion = 1;
inline constexpr int kSpriteSize = 12;
inline constexpr int kSpriteSpeed = 3;
inline constexpr int kNumDistractors = 2;
inline constexpr double kNoiseSigma = 0.1;

struct VideoClip {
  Tensor frames;  // [T, C, H, W], values in [0,1]
  int label = 0;
  std::vector<GlimpseLocation> sprite_track;  // true label-sprite centers, per t

  const float* frame_ptr(int t) const {
    size_t per = frames.numel() / frames.dim(0);
    return frames.data() + size_t(t) * per;
  }
  Tensor frame(int t) const {
    size_t per = frames.numel() / frames.dim(0);
    return Tensor({frames.dim(1), frames.dim(2), frames.dim(3)},
                  std::vector<float>(frame_ptr(t), frame_ptr(t) + per));
  }
};

struct ManifestEntry {
  int id = 0;
  uint64_t seed = 0;
  int label = 0;
};

struct DatasetManifest {
  int version = kGeneratorVersion;
  std::string split;  // train | val
  DataVariant variant = DataVariant::centered;
  GlimpseGeometry geom;
  int t = 8;
  int classes = 8;
  std::vector<ManifestEntry> entries;
};

VideoClip generate_clip(uint64_t seed, int label, const GlimpseGeometry& geom, int t,
                        DataVariant variant);

// Writes <dir>/train.manifest and <dir>/val.manifest with balanced labels and
// disjoint per-split seed ranges. Refuses to overwrite a manifest written by
// a different generator version.
std::pair<DatasetManifest, DatasetManifest> build_dataset(int n_train, int n_val,
                                                          const GlimpseGeometry& geom, int t,
                                                          int classes, DataVariant variant,
                                                          uint64_t root_seed,
                                                          const std::filesystem::path& dir);

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Lazy clip store over a manifest. Concurrent clip(i) calls are safe for
// distinct indices; the cache is preallocated and slots are independent.
class Dataset {
 public:
  explicit Dataset(DatasetManifest m) : manifest_(std::move(m)) {
    cache_.resize(manifest_.entries.size());
  }

  int size() const { return static_cast<int>(manifest_.entries.size()); }
  int label(int i) const { return manifest_.entries[i].label; }
  const DatasetManifest& manifest() const { return manifest_; }

  const VideoClip& clip(int i) const {
    if (!cache_[i])
      cache_[i] = std::make_unique<VideoClip>(
          generate_clip(manifest_.entries[i].seed, manifest_.entries[i].label, manifest_.geom,
                        manifest_.t, manifest_.variant));
    return *cache_[i];
  }

 private:
  DatasetManifest manifest_;
  mutable std::vector<std::unique_ptr<VideoClip>> cache_;
};

// valid start interval for a sprite center moving in the given direction,
// exposed for the hardness analysis in tests
struct StartRegion {
  int cy_lo, cy_hi, cx_lo, cx_hi;
};
StartRegion start_region(int direction, const GlimpseGeometry& geom, int t, DataVariant variant);

}  // namespace glitr
