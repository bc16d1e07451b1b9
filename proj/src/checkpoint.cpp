#include "sgm/checkpoint.hpp"

#include "sgm/errors.hpp"

#include <fstream>

namespace fs = std::filesystem;

namespace sgm {

namespace {

std::string dtype_tag(torch::ScalarType t)
{
  switch (t) {
  case torch::kFloat: return "float32";
  case torch::kDouble: return "float64";
  case torch::kLong: return "int64";
  case torch::kComplexFloat: return "complex64";
  case torch::kComplexDouble: return "complex128";
  default: throw ArgumentError(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType parse_dtype(std::string const &s, fs::path const &path)
{
  if (s == "float32") { return torch::kFloat; }
  if (s == "float64") { return torch::kDouble; }
  if (s == "int64") { return torch::kLong; }
  if (s == "complex64") { return torch::kComplexFloat; }
  if (s == "complex128") { return torch::kComplexDouble; }
  throw FormatError(path, "unknown dtype '" + s + "'");
}

std::map<std::string, torch::Tensor> state_of(torch::nn::Module const &module)
{
  std::map<std::string, torch::Tensor> out;
  for (auto const &p : module.named_parameters(true)) { out[p.key()] = p.value(); }
  for (auto const &b : module.named_buffers(true)) { out[b.key()] = b.value(); }
  return out;
}

} // namespace

void save_checkpoint(fs::path const &dir, std::string const &kind, nlohmann::json const &meta,
                     torch::nn::Module const &module)
{
  fs::create_directories(dir);
  auto const blob_path = dir / "params.bin";
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) { throw IoError(blob_path, "cannot open for writing"); }
  nlohmann::json table = nlohmann::json::array();
  int64_t offset = 0;
  for (auto const &[name, t] : state_of(module)) {
    auto const c = t.detach().to(torch::kCPU).contiguous();
    auto const bytes = static_cast<int64_t>(c.numel() * c.element_size());
    blob.write(static_cast<char const *>(c.data_ptr()), bytes);
    table.push_back({{"name", name}, {"dtype", dtype_tag(c.scalar_type())}, {"shape", c.sizes().vec()},
                     {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  if (!blob) { throw IoError(blob_path, "write failed"); }
  nlohmann::json manifest{{"format_version", kCheckpointFormatVersion},
                          {"kind", kind},
                          {"meta", meta},
                          {"byte_order", "little"},
                          {"tensors", table}};
  auto const manifest_path = dir / "manifest.json";
  std::ofstream m(manifest_path, std::ios::trunc);
  if (!m) { throw IoError(manifest_path, "cannot open for writing"); }
  m << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(fs::path const &dir)
{
  auto const manifest_path = dir / "manifest.json";
  auto const blob_path = dir / "params.bin";
  if (!fs::exists(manifest_path)) { throw IoError(manifest_path, "checkpoint manifest not found"); }
  if (!fs::exists(blob_path)) { throw IoError(blob_path, "checkpoint parameters not found"); }
  nlohmann::json manifest;
  try {
    std::ifstream m(manifest_path);
    manifest = nlohmann::json::parse(m);
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(manifest_path, e.what());
  }
  if (manifest.value("format_version", "") != kCheckpointFormatVersion) {
    throw FormatError(manifest_path, "unsupported checkpoint format version");
  }
  Checkpoint ck;
  ck.kind = manifest.value("kind", "");
  ck.meta = manifest.value("meta", nlohmann::json::object());
  auto const blob_size = static_cast<int64_t>(fs::file_size(blob_path));
  std::ifstream blob(blob_path, std::ios::binary);
  try {
    for (auto const &e : manifest.at("tensors")) {
      auto const name = e.at("name").get<std::string>();
      auto const dtype = parse_dtype(e.at("dtype").get<std::string>(), manifest_path);
      auto const shape = e.at("shape").get<std::vector<int64_t>>();
      auto const offset = e.at("offset").get<int64_t>();
      auto const bytes = e.at("bytes").get<int64_t>();
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
      if (bytes != static_cast<int64_t>(t.numel() * t.element_size()) || offset < 0 || offset + bytes > blob_size) {
        throw FormatError(blob_path, "tensor '" + name + "' does not fit the parameter blob");
      }
      blob.seekg(offset);
      blob.read(static_cast<char *>(t.data_ptr()), bytes);
      if (!blob) { throw IoError(blob_path, "read failed for '" + name + "'"); }
      ck.tensors[name] = t;
    }
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(manifest_path, e.what());
  }
  return ck;
}

Checkpoint load_checkpoint(fs::path const &dir, std::string const &expected_kind)
{
  auto ck = load_checkpoint(dir);
  if (ck.kind != expected_kind) {
    throw FormatError(dir / "manifest.json", "expected a '" + expected_kind + "' checkpoint, found '" + ck.kind + "'");
  }
  return ck;
}

void restore(Checkpoint const &ckpt, torch::nn::Module &module)
{
  torch::NoGradGuard guard;
  for (auto &[name, t] : state_of(module)) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) { throw FormatError("checkpoint", "missing tensor '" + name + "'"); }
    if (it->second.sizes() != t.sizes()) {
      throw FormatError("checkpoint", "shape mismatch for '" + name + "'");
    }
    t.copy_(it->second.to(t.scalar_type()));
  }
}

} // namespace sgm
