#include "vcsl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace vcsl {

namespace {

constexpr char kMagic[4] = {'V', 'C', 'S', 'L'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<uint64_t>(v));
}

// Sequential reader with a hard stop on short files.
struct Reader {
  const std::string& buf;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw std::runtime_error("checkpoint: '" + path + "' is truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= uint64_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("checkpoint: cannot open '" + path +
                             "' for reading");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return buf;
}

// Parses the fixed header and leaves the reader at the parameter count.
CheckpointMeta parse_header(Reader& r) {
  const std::string magic = r.bytes(4);
  if (magic != std::string(kMagic, 4))
    throw std::runtime_error("checkpoint: '" + r.path +
                             "' is not a checkpoint (bad magic)");
  const uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw std::runtime_error(
        "checkpoint: format version " + std::to_string(version) +
        " is not supported (expected " + std::to_string(kFormatVersion) +
        ")");
  CheckpointMeta meta;
  meta.corpus_seed = r.u64();
  meta.init_seed = r.u64();
  meta.stage = static_cast<int32_t>(r.u32());
  meta.epoch = static_cast<int32_t>(r.u32());
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state,
                     uint64_t corpus_seed) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_u64(out, corpus_seed);
  put_u64(out, state.init_seed);
  put_u32(out, static_cast<uint32_t>(state.stage_cursor));
  put_u32(out, static_cast<uint32_t>(state.epoch_cursor));

  uint32_t count = 0;
  state.for_each([&](const Param&) { ++count; });
  put_u32(out, count);
  state.for_each([&](const Param& p) {
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<uint32_t>(p.rows));
    put_u32(out, static_cast<uint32_t>(p.cols));
    for (double v : p.v) put_f64(out, v);
  });

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw std::runtime_error("checkpoint: cannot open '" + path +
                             "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f)
    throw std::runtime_error("checkpoint: short write to '" + path + "'");
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  const std::string buf = slurp(path);
  Reader r{buf, 0, path};
  return parse_header(r);
}

CheckpointMeta load_checkpoint(const std::string& path, ModelState& state) {
  const std::string buf = slurp(path);
  Reader r{buf, 0, path};
  const CheckpointMeta meta = parse_header(r);

  std::unordered_map<std::string, Param*> live;
  state.for_each([&](Param& p) { live.emplace(p.name, &p); });

  // Stage every blob and run all validation before touching the model, so a
  // rejected file never leaves the state half-overwritten.
  const uint32_t count = r.u32();
  std::unordered_map<std::string, std::vector<double>> staged;
  for (uint32_t k = 0; k < count; ++k) {
    const std::string name = r.bytes(r.u32());
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    auto it = live.find(name);
    if (it == live.end())
      throw std::runtime_error("checkpoint: parameter '" + name +
                               "' is not part of this model");
    const Param& p = *it->second;
    if (p.rows != rows || p.cols != cols)
      throw std::runtime_error(
          "checkpoint: parameter '" + name + "' has shape " +
          std::to_string(rows) + "x" + std::to_string(cols) +
          ", model expects " + std::to_string(p.rows) + "x" +
          std::to_string(p.cols));
    std::vector<double> values(p.size());
    for (double& v : values) v = r.f64();
    if (!staged.emplace(name, std::move(values)).second)
      throw std::runtime_error("checkpoint: duplicate parameter '" + name +
                               "'");
  }
  for (const auto& [name, p] : live)
    if (!staged.count(name))
      throw std::runtime_error("checkpoint: missing parameter '" + name +
                               "'");
  if (r.pos != buf.size())
    throw std::runtime_error("checkpoint: trailing bytes after '" + path +
                             "' payload");

  state.for_each([&](Param& p) { p.v = std::move(staged.at(p.name)); });
  state.init_seed = meta.init_seed;  // the values now trace to that draw
  state.stage_cursor = meta.stage;
  state.epoch_cursor = meta.epoch;
  return meta;
}

}  // namespace vcsl
