#include "rilm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "rilm/error.hpp"

namespace rilm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

NamedArray* Checkpoint::find(const std::string& name) {
  for (auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error("checkpoint: truncated preamble");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  header["model_kind"] = ckpt.model_kind;
  header["config"] = ckpt.config;
  auto manifest = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  std::set<std::string> names;
  for (const auto& t : ckpt.tensors) {
    if (!names.insert(t.name).second)
      throw Error("checkpoint: duplicate tensor name '" + t.name + "'");
    if (t.values.size() != shape_numel(t.shape))
      throw Error("checkpoint: tensor '" + t.name + "' does not fill its shape");
    manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.values.size() * sizeof(double);
  }
  header["manifest"] = std::move(manifest);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.values.data());
    out.insert(out.end(), p, p + t.values.size() * sizeof(double));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw Error("checkpoint: bad magic, not a checkpoint file");
  std::size_t pos = 8;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw Error("checkpoint: unsupported version " + std::to_string(version));
  const auto header_len = get<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw Error("checkpoint: truncated header");
  const std::string text(bytes.begin() + static_cast<long>(pos),
                         bytes.begin() + static_cast<long>(pos + header_len));
  pos += header_len;

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed header: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.model_kind = header.at("model_kind").get<std::string>();
    ckpt.config = header.at("config");
    const std::size_t payload = bytes.size() - pos;
    std::uint64_t expected = 0;
    std::set<std::string> names;
    for (const auto& entry : header.at("manifest")) {
      NamedArray t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (!names.insert(t.name).second)
        throw Error("checkpoint: duplicate tensor name '" + t.name + "'");
      if (offset != expected)
        throw Error("checkpoint: tensor '" + t.name + "' has overlapping or gapped offset");
      const std::uint64_t nbytes = shape_numel(t.shape) * sizeof(double);
      if (offset + nbytes > payload)
        throw Error("checkpoint: payload length " + std::to_string(payload) +
                    " bytes is too short for tensor '" + t.name + "'");
      t.values.resize(shape_numel(t.shape));
      std::memcpy(t.values.data(), bytes.data() + pos + offset, nbytes);
      expected = offset + nbytes;
      ckpt.tensors.push_back(std::move(t));
    }
    if (expected != payload)
      throw Error("checkpoint: payload length " + std::to_string(payload) +
                  " bytes does not match manifest total " + std::to_string(expected));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  return ckpt;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io: cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io: cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  if (!out) throw Error("io: short write to '" + path + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file_bytes(path));
}

Checkpoint snapshot(const std::string& model_kind, nlohmann::ordered_json config,
                    const nn::NamedTensors& params) {
  Checkpoint c;
  c.model_kind = model_kind;
  c.config = std::move(config);
  for (const auto& [name, t] : params)
    c.tensors.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  return c;
}

void restore(const Checkpoint& ckpt, const nn::NamedTensors& params) {
  if (ckpt.tensors.size() != params.size())
    throw Error("checkpoint: holds " + std::to_string(ckpt.tensors.size()) +
                " tensors, model expects " + std::to_string(params.size()));
  for (const auto& [name, t] : params) {
    const NamedArray* src = ckpt.find(name);
    if (!src) throw Error("checkpoint: missing tensor '" + name + "'");
    if (src->shape != t.shape())
      throw Error("checkpoint: tensor '" + name + "' has shape " + shape_str(src->shape) +
                  ", model expects " + shape_str(t.shape()));
    Tensor dst = t;
    std::copy(src->values.begin(), src->values.end(), dst.mutable_data().begin());
  }
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts) {
  if (ckpts.empty()) throw Error("checkpoint: nothing to average");
  Checkpoint avg = ckpts[0];
  for (std::size_t k = 1; k < ckpts.size(); ++k) {
    const auto& other = ckpts[k];
    if (other.tensors.size() != avg.tensors.size())
      throw Error("checkpoint: manifest mismatch, tensor counts differ");
    const double inv = 1.0 / static_cast<double>(k + 1);
    for (std::size_t i = 0; i < avg.tensors.size(); ++i) {
      auto& a = avg.tensors[i];
      const auto& b = other.tensors[i];
      if (a.name != b.name || a.shape != b.shape)
        throw Error("checkpoint: manifest mismatch at tensor '" + a.name + "'");
      for (std::size_t j = 0; j < a.values.size(); ++j)
        a.values[j] += (b.values[j] - a.values[j]) * inv;
    }
  }
  return avg;
}

Checkpoint average_checkpoint_files(const std::vector<std::string>& paths) {
  std::vector<Checkpoint> ckpts;
  for (const auto& p : paths) ckpts.push_back(load_checkpoint(p));
  return average_checkpoints(ckpts);
}

}  // namespace rilm
