#include "sgm/dataset.hpp"

#include "sgm/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sgm {

namespace {

static_assert(std::endian::native == std::endian::little, "record I/O assumes a little-endian host");

json read_json(fs::path const &file)
{
  std::ifstream in(file);
  if (!in) { throw IoError(file, "cannot open"); }
  try {
    return json::parse(in);
  } catch (json::exception const &e) {
    throw FormatError(file, std::string("invalid JSON: ") + e.what());
  }
}

void write_json(fs::path const &file, json const &j)
{
  std::ofstream out(file);
  if (!out) { throw IoError(file, "cannot open for writing"); }
  out << j.dump(2) << '\n';
  if (!out) { throw IoError(file, "write failed"); }
}

std::vector<int64_t> shape_of(json const &meta, char const *key, fs::path const &file)
{
  try {
    auto const s = meta.at("arrays").at(key).get<std::vector<int64_t>>();
    if (std::any_of(s.begin(), s.end(), [](int64_t d) { return d <= 0; })) {
      throw FormatError(file, std::string("non-positive extent for ") + key);
    }
    return s;
  } catch (json::exception const &e) {
    throw FormatError(file, std::string("missing or malformed shape for ") + key + ": " + e.what());
  }
}

std::vector<int64_t> to_vec(torch::IntArrayRef s) { return {s.begin(), s.end()}; }

} // namespace

DatasetRecord generate_record(std::string id, PhantomSpec const &phantom, AcquisitionConfig const &acq)
{
  acq.validate(phantom.width);
  auto xg = make_phantom(phantom);
  auto const maps64 = make_coil_maps(acq.coils, phantom.height, phantom.width);
  SensitivityMaps maps(maps64.tensor().to(torch::kComplexFloat));
  auto mask = make_mask(phantom.width, acq.acceleration, acq.center_fraction, acq.mask_kind, acq.seed);
  auto y = simulate_measurement(xg, maps, mask, acq.noise_std, acq.seed + 1);
  json gen{{"family", to_string(phantom.family)},
           {"phantom_seed", phantom.seed},
           {"mask_seed", acq.seed},
           {"noise_seed", acq.seed + 1},
           {"noise_std", acq.noise_std},
           {"coils", acq.coils}};
  return DatasetRecord{std::move(id), std::move(xg), std::move(maps), std::move(mask), std::move(y), std::nullopt,
                       std::move(gen)};
}

void write_cplx(fs::path const &file, torch::Tensor const &t)
{
  if (!t.is_complex()) { throw ShapeError("write_cplx: expected a complex tensor"); }
  auto const data = torch::view_as_real(t.detach().to(torch::kComplexFloat).contiguous()).contiguous();
  std::ofstream out(file, std::ios::binary);
  if (!out) { throw IoError(file, "cannot open for writing"); }
  out.write(reinterpret_cast<char const *>(data.data_ptr<float>()),
            static_cast<std::streamsize>(data.numel() * sizeof(float)));
  if (!out) { throw IoError(file, "write failed"); }
}

torch::Tensor read_cplx(fs::path const &file, std::vector<int64_t> const &shape)
{
  if (!fs::exists(file)) { throw IoError(file, "missing array file"); }
  int64_t count = 1;
  for (auto d : shape) { count *= d; }
  auto const expected = static_cast<uintmax_t>(count) * 2 * sizeof(float);
  auto const actual = fs::file_size(file);
  if (actual != expected) {
    throw FormatError(file, "size " + std::to_string(actual) + " bytes does not match the declared shape (" +
                              std::to_string(expected) + " bytes)");
  }
  auto shape2 = shape;
  shape2.push_back(2);
  auto buf = torch::empty(shape2, torch::kFloat);
  std::ifstream in(file, std::ios::binary);
  if (!in) { throw IoError(file, "cannot open"); }
  in.read(reinterpret_cast<char *>(buf.data_ptr<float>()), static_cast<std::streamsize>(expected));
  if (!in) { throw IoError(file, "short read"); }
  return torch::view_as_complex(buf);
}

void write_record(DatasetRecord const &r, fs::path const &split_dir)
{
  auto const dir = split_dir / r.id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) { throw IoError(dir, "cannot create directory: " + ec.message()); }

  json arrays{{"xg", to_vec(r.xg.sizes())}, {"maps", to_vec(r.maps.tensor().sizes())}, {"y", to_vec(r.y.sizes())}};
  if (r.pgi) { arrays["pgi"] = to_vec(r.pgi->sizes()); }
  json meta{{"format_version", kRecordFormatVersion},
            {"id", r.id},
            {"dtype", "complex64-le"},
            {"layout", "row-major interleaved re/im"},
            {"arrays", arrays},
            {"generation", r.generation}};
  json mask{{"width", r.mask.width()},
            {"lines", r.mask.lines()},
            {"acceleration", r.mask.acceleration()},
            {"center_fraction", r.mask.center_fraction()},
            {"kind", to_string(r.mask.kind())},
            {"seed", r.mask.seed()}};

  write_cplx(dir / "xg.cplx", r.xg);
  write_cplx(dir / "maps.cplx", r.maps.tensor());
  write_cplx(dir / "y.cplx", r.y);
  if (r.pgi) {
    write_cplx(dir / "pgi.cplx", *r.pgi);
  } else if (fs::exists(dir / "pgi.cplx")) {
    fs::remove(dir / "pgi.cplx");
  }
  write_json(dir / "mask.json", mask);
  write_json(dir / "meta.json", meta);
}

DatasetRecord read_record(fs::path const &split_dir, std::string const &id)
{
  auto const dir = split_dir / id;
  auto const meta_file = dir / "meta.json";
  auto const mask_file = dir / "mask.json";
  auto const meta = read_json(meta_file);
  auto const mj = read_json(mask_file);

  if (meta.value("format_version", std::string{}) != kRecordFormatVersion) {
    throw FormatError(meta_file, "unsupported format_version");
  }
  if (meta.value("dtype", std::string{}) != "complex64-le") { throw FormatError(meta_file, "unsupported dtype"); }

  // Validate every shape before touching array files.
  auto const sx = shape_of(meta, "xg", meta_file);
  auto const sm = shape_of(meta, "maps", meta_file);
  auto const sy = shape_of(meta, "y", meta_file);
  if (sx.size() != 2 || sm.size() != 3 || sy.size() != 3) { throw FormatError(meta_file, "wrong array ranks"); }
  if (sm[1] != sx[0] || sm[2] != sx[1]) { throw FormatError(meta_file, "maps shape does not match xg"); }
  if (sy != sm) { throw FormatError(meta_file, "y shape does not match maps"); }
  std::optional<std::vector<int64_t>> sp;
  if (meta.at("arrays").contains("pgi")) {
    sp = shape_of(meta, "pgi", meta_file);
    if (*sp != sx) { throw FormatError(meta_file, "pgi shape does not match xg"); }
  }

  std::vector<uint8_t> lines;
  int accel = 1;
  double cf = 0;
  MaskKind kind{};
  uint64_t seed = 0;
  try {
    lines = mj.at("lines").get<std::vector<uint8_t>>();
    accel = mj.at("acceleration").get<int>();
    cf = mj.at("center_fraction").get<double>();
    kind = parse_mask_kind(mj.at("kind").get<std::string>());
    seed = mj.value("seed", uint64_t{0});
  } catch (std::exception const &e) {
    throw FormatError(mask_file, std::string("malformed mask: ") + e.what());
  }
  if (static_cast<int64_t>(lines.size()) != sx[1]) { throw FormatError(mask_file, "mask width does not match xg"); }
  std::optional<SamplingMask> mask;
  try {
    mask.emplace(std::move(lines), accel, cf, kind, seed);
  } catch (ArgumentError const &e) {
    throw FormatError(mask_file, e.what());
  }

  auto xg = read_cplx(dir / "xg.cplx", sx);
  auto maps_t = read_cplx(dir / "maps.cplx", sm);
  auto y = read_cplx(dir / "y.cplx", sy);
  std::optional<torch::Tensor> pgi;
  if (sp) { pgi = read_cplx(dir / "pgi.cplx", *sp); }

  std::optional<SensitivityMaps> maps;
  try {
    maps.emplace(std::move(maps_t));
  } catch (ArgumentError const &e) {
    throw FormatError(dir / "maps.cplx", e.what());
  }
  return DatasetRecord{meta.value("id", id),        std::move(xg), std::move(*maps), std::move(*mask), std::move(y),
                       std::move(pgi), meta.value("generation", json::object())};
}

std::vector<std::string> list_records(fs::path const &split_dir)
{
  if (!fs::is_directory(split_dir)) { throw IoError(split_dir, "not a directory"); }
  std::vector<std::string> ids;
  for (auto const &entry : fs::directory_iterator(split_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<DatasetRecord> read_split(fs::path const &split_dir, int64_t cap)
{
  auto ids = list_records(split_dir);
  if (cap > 0 && static_cast<int64_t>(ids.size()) > cap) { ids.resize(static_cast<size_t>(cap)); }
  std::vector<DatasetRecord> out;
  out.reserve(ids.size());
  for (auto const &id : ids) { out.push_back(read_record(split_dir, id)); }
  return out;
}

torch::Tensor Batch::zero_filled() const { return adjoint(y, maps, mask); }

Batch Batch::to(torch::ScalarType real_dtype) const
{
  auto const c = complex_dtype_of(real_dtype);
  Batch b{ids, xg.to(c), maps.to(c), mask.to(real_dtype), y.to(c), pgi.defined() ? pgi.to(c) : torch::Tensor{}};
  return b;
}

Batch make_batch(std::span<DatasetRecord const> records)
{
  std::vector<int64_t> idx(records.size());
  for (size_t i = 0; i < idx.size(); ++i) { idx[i] = static_cast<int64_t>(i); }
  return make_batch(records, idx);
}

Batch make_batch(std::span<DatasetRecord const> records, std::span<int64_t const> indices)
{
  if (indices.empty()) { throw ArgumentError("make_batch: empty selection"); }
  Batch b;
  std::vector<torch::Tensor> xg, maps, mask, y, pgi;
  bool all_pgi = true;
  for (auto i : indices) {
    auto const &r = records[static_cast<size_t>(i)];
    b.ids.push_back(r.id);
    xg.push_back(r.xg);
    maps.push_back(r.maps.tensor());
    mask.push_back(r.mask.tensor().view({1, 1, r.width()}));
    y.push_back(r.y);
    if (r.pgi) {
      pgi.push_back(*r.pgi);
    } else {
      all_pgi = false;
    }
  }
  try {
    b.xg = torch::stack(xg);
    b.maps = torch::stack(maps);
    b.mask = torch::stack(mask);
    b.y = torch::stack(y);
    if (all_pgi) { b.pgi = torch::stack(pgi); }
  } catch (c10::Error const &e) {
    throw ShapeError(std::string("make_batch: records have inconsistent shapes: ") + e.what_without_backtrace());
  }
  return b;
}

} // namespace sgm
