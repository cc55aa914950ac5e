#include "glitr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace glitr {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'T', 'R', 'C', 'K', 'P', '1'};
constexpr uint8_t kDtypeF32 = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_checkpoint(const ParamSet<float>& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kMagic, 8);
  put_u32(out, uint32_t(params.items.size()));
  for (const auto& [name, var] : params.items) {
    put_u32(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    out.put(char(kDtypeF32));
    const auto& t = var.value();
    out.put(char(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) put_u32(out, uint32_t(t.dim(i)));
    out.write(reinterpret_cast<const char*>(t.data()),
              std::streamsize(t.numel() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

void load_checkpoint(ParamSet<float>& params, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  uint32_t count = get_u32(in);
  if (count != params.items.size())
    throw std::runtime_error("checkpoint parameter count mismatch in " + path.string());

  std::vector<bool> filled(params.items.size(), false);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nlen = get_u32(in);
    if (!in || nlen > 4096) throw std::runtime_error("corrupt checkpoint: " + path.string());
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    uint8_t dtype = uint8_t(in.get());
    if (dtype != kDtypeF32) throw std::runtime_error("unsupported checkpoint dtype");
    int ndim = in.get();
    std::vector<int> shape(static_cast<size_t>(ndim), 0);
    for (int d = 0; d < ndim; ++d) shape[static_cast<size_t>(d)] = int(get_u32(in));

    Var<float>* target = params.find(name);
    if (!target) throw std::runtime_error("checkpoint has unknown parameter: " + name);
    if (target->value().shape() != shape)
      throw std::runtime_error("checkpoint shape mismatch for parameter: " + name);
    in.read(reinterpret_cast<char*>(target->value_mut().data()),
            std::streamsize(target->value().numel() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    for (size_t k = 0; k < params.items.size(); ++k)
      if (params.items[k].first == name) filled[k] = true;
  }
  for (size_t k = 0; k < filled.size(); ++k)
    if (!filled[k])
      throw std::runtime_error("checkpoint missing parameter: " + params.items[k].first);
}

}  // namespace glitr
