#include "sgm/evaluate.hpp"

#include "sgm/errors.hpp"
#include "sgm/metrics.hpp"
#include "sgm/png_writer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace sgm {

std::vector<std::string> const &known_stages()
{
  static std::vector<std::string> const s{"zero-filled", "x_T", "x_T^0", "x_T^K", "x_z^K", "TV"};
  return s;
}

std::vector<std::string> parse_stages(std::string const &list)
{
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto const b = item.find_first_not_of(" \t");
    if (b == std::string::npos) { continue; }
    item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
    bool ok = false;
    for (auto const &k : known_stages()) { ok = ok || k == item; }
    if (!ok) { throw ArgumentError("unknown stage '" + item + "'"); }
    out.push_back(item);
  }
  if (out.empty()) { throw ArgumentError("no stages requested"); }
  return out;
}

torch::Tensor stage_image(Stages const &s, std::string const &stage)
{
  if (stage == "zero-filled") { return s.zero_filled; }
  if (stage == "x_T") { return s.x_t; }
  if (stage == "x_T^0") { return s.x_t0; }
  if (stage == "x_T^K") { return s.x_tK(); }
  if (stage == "x_z^K") { return s.gic.x_z.empty() ? torch::Tensor{} : s.final(); }
  return {};
}

std::vector<StageSummary> aggregate(std::vector<MetricsRow> const &rows)
{
  std::vector<StageSummary> out;
  std::map<std::pair<std::string, std::string>, std::vector<MetricsRow const *>> groups;
  for (auto const &r : rows) {
    if (r.skipped) { continue; }
    auto key = std::make_pair(r.method, r.stage);
    if (!groups.count(key)) { out.push_back({r.method, r.stage}); }
    groups[key].push_back(&r);
  }
  for (auto &s : out) {
    auto const &g = groups[{s.method, s.stage}];
    auto const n = static_cast<double>(g.size());
    s.count = static_cast<int64_t>(g.size());
    for (auto const *r : g) {
      s.psnr_mean += r->psnr / n;
      s.ssim_mean += r->ssim / n;
    }
    if (g.size() > 1) {
      for (auto const *r : g) {
        s.psnr_std += (r->psnr - s.psnr_mean) * (r->psnr - s.psnr_mean);
        s.ssim_std += (r->ssim - s.ssim_mean) * (r->ssim - s.ssim_mean);
      }
      s.psnr_std = std::sqrt(s.psnr_std / (n - 1));
      s.ssim_std = std::sqrt(s.ssim_std / (n - 1));
    }
  }
  return out;
}

void write_panel(fs::path const &file, torch::Tensor const &x_g, std::vector<torch::Tensor> const &images)
{
  auto const peak = x_g.abs().max().item<double>();
  auto const scale = peak > 0 ? 1.0 / peak : 1.0;
  std::vector<torch::Tensor> cells{x_g.abs() * scale};
  for (auto const &im : images) { cells.push_back(im.defined() ? im.abs() * scale : torch::Tensor{}); }
  auto const cols = static_cast<int64_t>(cells.size());
  cells.push_back(torch::Tensor{});
  for (auto const &im : images) {
    cells.push_back(im.defined() ? (im - x_g).abs() * (5.0 * scale) : torch::Tensor{});
  }
  write_png_gray(file, tile_images(cells, cols));
}

EvalReport evaluate(std::vector<DatasetRecord> const &records, ModelBundle *bundle, EvalOptions const &options,
                    fs::path const &figure_dir)
{
  EvalReport rep;
  std::vector<Stages> stages;
  bool learned = false;
  for (auto const &s : options.stages) { learned = learned || (s != "zero-filled" && s != "TV"); }
  bool const have_pgi = std::all_of(records.begin(), records.end(), [](auto const &r) { return r.pgi.has_value(); });
  if (learned && bundle && *bundle) {
    if (!have_pgi && layout_of((*bundle)->ablation()).needs_pgi) {
      rep.warnings.push_back("records lack cached guidance images; learned stages skipped");
    } else {
      stages = reconstruct(*bundle, records);
    }
  }
  if (options.figures && !figure_dir.empty()) { fs::create_directories(figure_dir); }

  torch::NoGradGuard guard;
  for (size_t i = 0; i < records.size(); ++i) {
    auto const &r = records[i];
    auto const xg = r.xg;
    auto const zf = zero_filled(r.y, r.maps.tensor(), r.mask.tensor());
    torch::Tensor tv;
    for (auto const &stage : options.stages) {
      MetricsRow row{r.id, stage == "zero-filled" || stage == "TV" ? stage : options.method, stage,
                     r.mask.acceleration()};
      torch::Tensor img;
      if (stage == "zero-filled") {
        img = zf;
      } else if (stage == "TV") {
        tv = tv_reconstruct(r.y, r.maps.tensor(), r.mask.tensor(), options.tv).x;
        img = tv;
      } else if (!stages.empty()) {
        img = stage_image(stages[i], stage);
      } else if (stage == "x_T" && r.pgi) {
        img = *r.pgi;
      }
      if (!img.defined()) {
        row.skipped = true;
        row.note = "stage unavailable";
        rep.warnings.push_back(r.id + ": stage " + stage + " unavailable, skipped");
      } else {
        row.psnr = psnr(img, xg);
        row.ssim = ssim(img, xg);
      }
      rep.rows.push_back(row);
    }
    if (options.figures && !figure_dir.empty()) {
      std::vector<torch::Tensor> panel{zf};
      if (!stages.empty()) {
        panel.push_back(stages[i].x_t);
        panel.push_back(stages[i].x_t0);
        panel.push_back(stage_image(stages[i], "x_z^K"));
      } else if (r.pgi) {
        panel.push_back(*r.pgi);
      }
      if (tv.defined()) { panel.push_back(tv); }
      write_panel(figure_dir / (r.id + ".png"), xg, panel);
    }
  }
  rep.summary = aggregate(rep.rows);
  return rep;
}

nlohmann::json summary_json(EvalReport const &report)
{
  nlohmann::json stages = nlohmann::json::array();
  for (auto const &s : report.summary) {
    stages.push_back({{"method", s.method}, {"stage", s.stage}, {"count", s.count}, {"psnr_mean", s.psnr_mean},
                      {"psnr_std", s.psnr_std}, {"ssim_mean", s.ssim_mean}, {"ssim_std", s.ssim_std}});
  }
  return {{"csv_schema", kMetricsCsvSchema}, {"stages", stages}, {"warnings", report.warnings}};
}

void write_report(EvalReport const &report, fs::path const &dir, nlohmann::json const &context)
{
  fs::create_directories(dir);
  auto const csv = dir / "metrics.csv";
  std::ofstream out(csv, std::ios::trunc);
  if (!out) { throw IoError(csv, "cannot open for writing"); }
  out << "record_id,method,stage,acceleration,psnr_db,ssim,status\n";
  out << std::setprecision(10);
  for (auto const &r : report.rows) {
    out << r.record_id << ',' << r.method << ',' << r.stage << ',' << r.acceleration << ',';
    if (r.skipped) {
      out << ",,skipped\n";
    } else {
      out << r.psnr << ',' << r.ssim << ",ok\n";
    }
  }
  auto j = summary_json(report);
  if (!context.is_null()) { j["context"] = context; }
  auto const js = dir / "summary.json";
  std::ofstream o(js, std::ios::trunc);
  if (!o) { throw IoError(js, "cannot open for writing"); }
  o << j.dump(2) << '\n';
}

} // namespace sgm
