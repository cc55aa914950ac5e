#pragma once

// Checkpoints are a flat binary of named parameter arrays: a header listing
// (name, shape, dtype) per entry, then raw little-endian data. See README
// for the exact layout.

#include <filesystem>

#include "glitr/autodiff.hpp"

namespace glitr {

void save_checkpoint(const ParamSet<float>& params, const std::filesystem::path& path);

// strict: the file must contain exactly the model's parameters, same shapes
void load_checkpoint(ParamSet<float>& params, const std::filesystem::path& path);

}  // namespace glitr
