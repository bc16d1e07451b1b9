#pragma once

// Deterministic toy experiments: synthetic data, score training, guidance-image sampling,
// end-to-end training of one or more variants and held-out evaluation.

#include "sgm/dataset.hpp"
#include "sgm/evaluate.hpp"
#include "sgm/sampler.hpp"
#include "sgm/score_training.hpp"
#include "sgm/trainer.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sgm {

struct ToyExperiment
{
  std::string name = "e2e-4x";
  int64_t size = 32;
  int64_t coils = 4;
  int acceleration = 4;
  double center_fraction = 0.08;
  MaskKind mask_kind = MaskKind::Random;
  PhantomFamily family = PhantomFamily::A;
  double noise_std = 0.0;
  int64_t n_train = 200, n_val = 20, n_test = 30;
  uint64_t seed = 1234;

  ScoreModelConfig score = ScoreModelConfig::desk();
  double sigma_min = 0.01;
  ScoreTrainConfig score_train{.epochs = 60, .batch_size = 16};
  SamplerConfig sampler;
  /// Fraction of sampler.steps_per_level used for every split.
  double steps_fraction = 1.0;

  GICConfig gic = GICConfig::desk();
  TrainConfig train{.epochs = 30, .batch_size = 4};
  std::vector<Ablation> variants{Ablation::Full};

  static std::vector<std::string> names();
  /// e2e-4x, steps20 or ablation-sweep; ArgumentError otherwise.
  static ToyExperiment named(std::string const &name);
  DenoiserConfig denoiser() const { return DenoiserConfig::desk(coils); }
  nlohmann::json to_json() const;
};

struct ToyData
{
  std::vector<DatasetRecord> train, val, test;
};

/// Records named "<split>-NNNN"; every record has its own phantom, mask and noise seed.
ToyData make_toy_data(ToyExperiment const &e);

/// Trains a score model on the training ground truths with
/// sigma_max = max pairwise distance and sigma_min from the experiment.
ScoreNet train_toy_score(ToyExperiment const &e, std::vector<DatasetRecord> const &train,
                         ScoreTrainLog *log = nullptr);

/// Samples and attaches a guidance image to every record, `batch` records at a time.
/// Batch b uses seed config.seed + b.
void attach_pgis(std::vector<DatasetRecord> &records, ScoreNet &score, SamplerConfig const &config,
                 int64_t batch = 64);

struct VariantResult
{
  Ablation ablation = Ablation::Full;
  double steps_fraction = 1;
  TrainLog log;
  EvalReport test;
  double seconds = 0;
  /// Mean test PSNR/SSIM per stage tag.
  double mean_psnr(std::string const &stage) const;
};

/// Shares data, the score model and sampled guidance images between experiments
/// that differ only in the variant trained or the sampling budget.
class ToyRunner
{
public:
  explicit ToyRunner(ToyExperiment base, std::ostream *log = nullptr);

  ToyExperiment const &base() const { return base_; }
  ToyData const &data();
  ScoreNet &score();
  ToyData const &data_with_pgis(double steps_fraction);
  VariantResult const &variant(Ablation a, double steps_fraction);

private:
  void note(std::string const &msg) const;

  ToyExperiment base_;
  std::ostream *log_;
  std::optional<ToyData> data_;
  ScoreNet score_{nullptr};
  std::map<double, ToyData> sampled_;
  std::map<std::pair<int, double>, VariantResult> variants_;
};

struct CriterionLine
{
  std::string what;
  double measured = 0, required = 0;
  bool passed = false;
};

struct AcceptanceReport
{
  std::string name;
  std::vector<CriterionLine> lines;
  /// Stage-ordering table (mean +- std PSNR/SSIM per stage and variant).
  std::string table;
  bool passed() const;
};

AcceptanceReport run_acceptance(std::string const &name, ToyRunner &runner);
std::string stage_table(VariantResult const &r, std::string const &title);

} // namespace sgm
