// Checkpoint layout (little-endian):
//   "FSGC" u32 version
//   config: f64 width, 3 x u64 base channels, 3 x u64 strides,
//           string dawim, string stsam, u32 lgfu, u32 scale_attention, u64 seed
//   string metadata
//   u64 record count, then per record: string name, FSGT tensor
// Records cover parameters and BatchNorm buffers, sorted by name.

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "fsg/network.hpp"

namespace fsg {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'G', 'C'};
constexpr std::uint32_t kVersion = 1;

ParameterList state_of(const FsgNet& net) {
  ParameterList all = net.parameters();
  ParameterList buf = net.buffers();
  all.insert(all.end(), buf.begin(), buf.end());
  sort_and_validate(all);
  return all;
}

void write_config(std::ostream& out, const NetConfig& c) {
  io::write_f64(out, c.encoder.width_multiplier);
  for (const auto v : c.encoder.base_channels) io::write_u64(out, v);
  for (const auto v : c.encoder.stage_strides) io::write_u64(out, v);
  io::write_string(out, to_string(c.dawim));
  io::write_string(out, to_string(c.stsam));
  io::write_u32(out, c.lgfu ? 1 : 0);
  io::write_u32(out, c.scale_attention ? 1 : 0);
  io::write_u64(out, c.seed);
}

NetConfig read_config(std::istream& in) {
  NetConfig c;
  c.encoder.width_multiplier = io::read_f64(in);
  for (auto& v : c.encoder.base_channels) v = io::read_u64(in);
  for (auto& v : c.encoder.stage_strides) v = io::read_u64(in);
  c.dawim = parse_dawim_variant(io::read_string(in));
  c.stsam = parse_stsam_variant(io::read_string(in));
  c.lgfu = io::read_u32(in) != 0;
  c.scale_attention = io::read_u32(in) != 0;
  c.seed = io::read_u64(in);
  return c;
}

}  // namespace

void FsgNet::save(std::ostream& out, const std::string& metadata) const {
  out.write(kMagic, 4);
  io::write_u32(out, kVersion);
  write_config(out, config_);
  io::write_string(out, metadata);
  const ParameterList state = state_of(*this);
  io::write_u64(out, state.size());
  for (const auto& p : state) {
    io::write_string(out, p.name);
    write_tensor(out, p.tensor);
  }
  if (!out) throw Error("checkpoint: write failed");
}

void FsgNet::save(const std::string& path, const std::string& metadata) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot open '" + path + "' for writing");
  save(out, metadata);
}

FsgNet FsgNet::load(std::istream& in, std::string* metadata) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) throw Error("checkpoint: bad magic (not an FSGC file)");
  const std::uint32_t version = io::read_u32(in);
  if (version != kVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
  FsgNet net(read_config(in));
  std::string meta = io::read_string(in);
  if (metadata != nullptr) *metadata = std::move(meta);

  std::map<std::string, Tensor> targets;
  for (auto& p : state_of(net)) targets.emplace(p.name, p.tensor);
  const std::uint64_t count = io::read_u64(in);
  if (count != targets.size())
    throw Error("checkpoint: holds " + std::to_string(count) + " tensors, config expects " +
                std::to_string(targets.size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = io::read_string(in);
    const Tensor t = read_tensor(in);
    auto it = targets.find(name);
    if (it == targets.end()) throw Error("checkpoint: unexpected tensor '" + name + "'");
    if (it->second.shape() != t.shape())
      throw ShapeError("checkpoint: tensor '" + name + "' has shape " + to_string(t.shape()) + ", expected " +
                       to_string(it->second.shape()));
    std::copy(t.data().begin(), t.data().end(), it->second.mutable_data().begin());
  }
  return net;
}

FsgNet FsgNet::load(const std::string& path, std::string* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open '" + path + "'");
  try {
    return load(in, metadata);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string FsgNet::serialize(const std::string& metadata) const {
  std::ostringstream out(std::ios::binary);
  save(out, metadata);
  return out.str();
}

FsgNet FsgNet::deserialize(const std::string& bytes, std::string* metadata) {
  std::istringstream in(bytes, std::ios::binary);
  return load(in, metadata);
}

}  // namespace fsg
