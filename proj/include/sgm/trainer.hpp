#pragma once

// End-to-end training of the denoising module and the unrolled network, ablation
// variants, and reconstruction of every intermediate stage.

#include "sgm/dataset.hpp"
#include "sgm/denoiser.hpp"
#include "sgm/gic.hpp"
#include "sgm/losses.hpp"
#include "sgm/score_net.hpp"

#include "json.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sgm {

enum class Ablation
{
  SG,          // sampler output only
  MN,          // main branch alone on the zero-filled image
  SG_MN,       // main branch alone on the sampler output
  SG_MN_DM,    // denoised guidance image as the reconstruction
  SG_MN_DM_US, // no dense connections
  SG_MN_DM_DG, // guidance branch without updates
  SG_MN_US_DG, // no denoising module
  Full,
};

std::string to_string(Ablation a);
Ablation parse_ablation(std::string const &s);
std::vector<Ablation> all_ablations();

/// Which parts a variant uses.
struct AblationLayout
{
  bool needs_pgi = true;
  bool uses_dm = true;
  bool uses_gic = true;
  /// Main-branch input is the sampler output instead of the zero-filled image.
  bool main_from_pgi = false;
};
AblationLayout layout_of(Ablation a);
/// Applies the variant's toggles to a base configuration.
GICConfig gic_config_for(Ablation a, GICConfig base);

struct Stages
{
  torch::Tensor zero_filled, x_t, x_t0;
  GicOutput gic;
  /// x_z^K, x_T^0 or x_T depending on the variant.
  torch::Tensor final() const;
  /// x_T^K when the guidance branch exists.
  torch::Tensor x_tK() const;
};

class ModelBundleImpl : public torch::nn::Module
{
public:
  /// `psn` is only read (copied into the SIE) when the variant uses the denoiser.
  ModelBundleImpl(Ablation ablation, DenoiserConfig dm, GICConfig gic, ScoreNet const &psn);
  Stages forward(Batch const &batch);
  torch::Tensor loss(Stages const &s, torch::Tensor const &x_g, LossMode mode) const;

  Ablation ablation() const { return ablation_; }
  DenoiserConfig const &dm_config() const { return dm_config_; }
  GICConfig const &gic_config() const { return gic_config_; }
  DenoisingModule &dm() { return dm_; }
  SgmNet &gic() { return gic_; }
  bool trainable() const { return !parameters().empty(); }

private:
  Ablation ablation_;
  AblationLayout layout_;
  DenoiserConfig dm_config_;
  GICConfig gic_config_;
  DenoisingModule dm_{nullptr};
  SgmNet gic_{nullptr};
};
TORCH_MODULE(ModelBundle);

struct TrainConfig
{
  int64_t epochs = 30;
  double learning_rate = 1e-3;
  int64_t batch_size = 4;
  LossMode loss = LossMode::Mse;
  /// Use only the first N training records (0 = all).
  int64_t train_slices = 0;
  uint64_t seed = 0;
  /// Stop after this many optimizer steps (0 = no limit).
  int64_t max_steps = 0;
  /// Skip validation until the last epoch.
  bool validate_last_only = false;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochRow
{
  int64_t epoch = 0;
  double train_loss = 0, val_loss = 0, val_psnr = 0, val_ssim = 0;
};

struct TrainLog
{
  std::vector<EpochRow> rows;
  int64_t best_epoch = 0;
  double best_val_psnr = 0;
  int64_t steps = 0;
};

struct ValidationResult
{
  double loss = 0, psnr = 0, ssim = 0;
};

/// Mean loss and final-stage PSNR/SSIM over the records, in evaluation mode, no gradients.
ValidationResult validate(ModelBundle &bundle, std::vector<DatasetRecord> const &records, LossMode mode,
                          int64_t batch_size = 8);

/// Trains in place. Every training record needs a PGI when the variant uses one
/// (ArgumentError naming the record otherwise). The best-validation parameters are
/// restored at the end and saved to `checkpoint_dir` when it is non-empty.
TrainLog train_end_to_end(ModelBundle &bundle, std::vector<DatasetRecord> const &train,
                          std::vector<DatasetRecord> const &val, TrainConfig const &config,
                          std::filesystem::path const &checkpoint_dir = {},
                          std::function<void(EpochRow const &)> const &on_epoch = {});

void write_train_log(TrainLog const &log, std::filesystem::path const &csv);

/// Bundle checkpoints carry every configuration needed to rebuild the module.
void save_bundle(ModelBundle const &bundle, std::filesystem::path const &dir, nlohmann::json const &extra = {});
ModelBundle load_bundle(std::filesystem::path const &dir, nlohmann::json *meta = nullptr);

/// Score checkpoints: config, schedule, training history.
void save_score(ScoreNet const &model, std::filesystem::path const &dir, nlohmann::json const &extra = {});
ScoreNet load_score(std::filesystem::path const &dir);

/// Runs the bundle over records in evaluation mode.
std::vector<Stages> reconstruct(ModelBundle &bundle, std::vector<DatasetRecord> const &records,
                                int64_t batch_size = 8);

} // namespace sgm
