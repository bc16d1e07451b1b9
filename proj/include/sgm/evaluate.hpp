#pragma once

// Per-record and aggregate PSNR/SSIM for reconstruction stages.
//
// metrics.csv columns (schema sgmnet-metrics-csv/1):
//   record_id,method,stage,acceleration,psnr_db,ssim,status
// status is "ok" or "skipped"; skipped rows leave psnr_db and ssim empty.

#include "sgm/baselines.hpp"
#include "sgm/dataset.hpp"
#include "sgm/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sgm {

inline constexpr char const *kMetricsCsvSchema = "sgmnet-metrics-csv/1";

/// Closed set of stage tags.
std::vector<std::string> const &known_stages();
/// Comma-separated list; throws ArgumentError on an unknown tag.
std::vector<std::string> parse_stages(std::string const &list);

struct MetricsRow
{
  std::string record_id, method, stage;
  int acceleration = 0;
  double psnr = 0, ssim = 0;
  bool skipped = false;
  std::string note;
};

struct StageSummary
{
  std::string method, stage;
  int64_t count = 0;
  /// Sample standard deviation (n - 1); zero for a single record.
  double psnr_mean = 0, psnr_std = 0, ssim_mean = 0, ssim_std = 0;
};

struct EvalOptions
{
  std::vector<std::string> stages{"zero-filled", "x_T", "x_T^0", "x_T^K", "x_z^K"};
  std::string method = "sgmnet";
  TvConfig tv;
  bool figures = false;
};

struct EvalReport
{
  std::vector<MetricsRow> rows;
  std::vector<StageSummary> summary;
  std::vector<std::string> warnings;
};

/// Image of a stage, undefined when the stage does not exist for this reconstruction.
torch::Tensor stage_image(Stages const &s, std::string const &stage);

/// Mean and sample std per (method, stage) over the non-skipped rows, in first-seen order.
std::vector<StageSummary> aggregate(std::vector<MetricsRow> const &rows);

/// `bundle` may be empty when only baselines are requested. Figures are written to
/// `figure_dir` when options.figures is set.
EvalReport evaluate(std::vector<DatasetRecord> const &records, ModelBundle *bundle, EvalOptions const &options,
                    std::filesystem::path const &figure_dir = {});

/// metrics.csv and summary.json in `dir`.
void write_report(EvalReport const &report, std::filesystem::path const &dir, nlohmann::json const &context = {});
nlohmann::json summary_json(EvalReport const &report);

/// Magnitude panel: top row images scaled by max|x_g|, bottom row 5x error maps.
void write_panel(std::filesystem::path const &file, torch::Tensor const &x_g,
                 std::vector<torch::Tensor> const &images);

} // namespace sgm
