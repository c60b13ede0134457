#include "core/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace foodpipe {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) raise(ErrorKind::Parse, "checkpoint '", path, "': truncated");
  return v;
}

}  // namespace

const nn::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::Io, "cannot write checkpoint '", path, "'");

  out.write(kMagic, 4);
  write_pod(out, kVersion);
  const std::string header = ckpt.header.dump();
  write_pod(out, static_cast<uint64_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_pod(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_pod(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<uint32_t>(tensor.shape.size()));
    for (int d : tensor.shape) write_pod(out, static_cast<int32_t>(d));
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
  }
  if (!out) raise(ErrorKind::Io, "short write on checkpoint '", path, "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open checkpoint '", path, "'");

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    raise(ErrorKind::Parse, "checkpoint '", path, "': bad magic");
  const auto version = read_pod<uint32_t>(in, path);
  if (version != kVersion)
    raise(ErrorKind::Parse, "checkpoint '", path, "': unsupported version ", version);

  Checkpoint ckpt;
  const auto header_len = read_pod<uint64_t>(in, path);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) raise(ErrorKind::Parse, "checkpoint '", path, "': truncated header");
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Parse, "checkpoint '", path, "': ", e.what());
  }

  const auto n_tensors = read_pod<uint32_t>(in, path);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = read_pod<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_pod<uint32_t>(in, path);
    std::vector<int> shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(read_pod<int32_t>(in, path));
    nn::Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) raise(ErrorKind::Parse, "checkpoint '", path, "': truncated tensor '", name, "'");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void store_params(Checkpoint& ckpt, const std::vector<nn::ParamT<float>*>& params) {
  for (const auto* p : params) ckpt.tensors.emplace_back(p->name, p->value);
}

void load_params(const Checkpoint& ckpt, const std::vector<nn::ParamT<float>*>& params) {
  for (auto* p : params) {
    const nn::Tensor* stored = ckpt.find(p->name);
    if (!stored) raise(ErrorKind::Parse, "checkpoint missing tensor '", p->name, "'");
    if (stored->shape != p->value.shape)
      raise(ErrorKind::Parse, "checkpoint tensor '", p->name, "' has wrong shape");
    p->value = *stored;
  }
}

}  // namespace foodpipe
