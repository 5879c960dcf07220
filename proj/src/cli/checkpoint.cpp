#include "pshr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pshr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void Checkpoint::add(const ParameterList& params, const std::string& prefix) {
  for (const auto& p : params) {
    CheckpointEntry e{prefix + p.name, p.tensor.shape(), {}};
    e.values.reserve(p.tensor.numel());
    for (double v : p.tensor.data()) e.values.push_back(static_cast<float>(v));
    entries.push_back(std::move(e));
  }
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  for (const auto& e : entries)
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

void Checkpoint::apply_to(ParameterList& params, const std::string& prefix) const {
  for (auto& p : params) {
    const auto* e = find(prefix + p.name);
    if (!e) throw ContractError("checkpoint lacks tensor '" + prefix + p.name + "'");
    if (e->shape != p.tensor.shape()) {
      throw ContractError("checkpoint tensor '" + e->name + "' has shape " + to_string(e->shape) + ", model expects " +
                          to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(e->values[i]);
  }
}

std::size_t Checkpoint::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.values.size();
  return n;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw CheckpointError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  void copy(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out{'P', 'S', 'H', 'R', Checkpoint::kVersion};
  put_u32(out, checked_u32(ckpt.entries.size(), "tensor count"));
  for (const auto& e : ckpt.entries) {
    if (numel(e.shape) != e.values.size()) throw ContractError("checkpoint entry '" + e.name + "' size mismatch");
    put_u32(out, checked_u32(e.name.size(), "name length"));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, checked_u32(e.shape.size(), "rank"));
    for (std::size_t d : e.shape) put_u32(out, checked_u32(d, "extent"));
    const auto* raw = reinterpret_cast<const std::uint8_t*>(e.values.data());
    out.insert(out.end(), raw, raw + e.values.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  char magic[4];
  in.copy(magic, 4);
  if (std::memcmp(magic, "PSHR", 4) != 0) throw CheckpointError("not a PSHR checkpoint");
  const std::uint8_t version = in.u8();
  if (version != Checkpoint::kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const std::uint32_t count = in.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    CheckpointEntry e;
    e.name.resize(in.u32());
    in.copy(e.name.data(), e.name.size());
    const std::uint32_t rank = in.u32();
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      e.shape.push_back(in.u32());
      n *= e.shape.back();
    }
    in.need(n * sizeof(float));
    e.values.resize(n);
    in.copy(e.values.data(), n * sizeof(float));
    ckpt.entries.push_back(std::move(e));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace pshr
