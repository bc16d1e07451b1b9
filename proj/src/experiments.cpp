#include "sgm/experiments.hpp"

#include "sgm/errors.hpp"
#include "sgm/schedule.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace sgm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<DatasetRecord> make_split(ToyExperiment const &e, char const *split, int64_t n, uint64_t offset)
{
  std::vector<DatasetRecord> out;
  for (int64_t i = 0; i < n; ++i) {
    auto const s = e.seed * 1000003ULL + offset + static_cast<uint64_t>(i);
    auto const ph = PhantomSpec::for_family(e.family, e.size, e.size, s);
    AcquisitionConfig acq;
    acq.coils = e.coils;
    acq.acceleration = e.acceleration;
    acq.center_fraction = e.center_fraction;
    acq.mask_kind = e.mask_kind;
    acq.noise_std = e.noise_std;
    acq.seed = 2 * s;
    char id[32];
    std::snprintf(id, sizeof id, "%s-%04lld", split, static_cast<long long>(i));
    out.push_back(generate_record(id, ph, acq));
  }
  return out;
}

std::string fmt(double v, int prec = 2)
{
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

} // namespace

std::vector<std::string> ToyExperiment::names() { return {"e2e-4x", "steps20", "ablation-sweep"}; }

ToyExperiment ToyExperiment::named(std::string const &name)
{
  ToyExperiment e;
  e.name = name;
  if (name == "e2e-4x") { return e; }
  if (name == "steps20") {
    e.steps_fraction = 0.2;
    return e;
  }
  if (name == "ablation-sweep") {
    e.variants = {Ablation::Full, Ablation::SG, Ablation::SG_MN};
    return e;
  }
  throw ArgumentError("unknown toy experiment '" + name + "' (expected e2e-4x, steps20 or ablation-sweep)");
}

nlohmann::json ToyExperiment::to_json() const
{
  std::vector<std::string> vs;
  for (auto a : variants) { vs.push_back(to_string(a)); }
  return {{"name", name},
          {"size", size},
          {"coils", coils},
          {"acceleration", acceleration},
          {"center_fraction", center_fraction},
          {"mask", to_string(mask_kind)},
          {"family", to_string(family)},
          {"noise_std", noise_std},
          {"n_train", n_train},
          {"n_val", n_val},
          {"n_test", n_test},
          {"seed", seed},
          {"score", score.to_json()},
          {"sigma_min", sigma_min},
          {"score_epochs", score_train.epochs},
          {"sampler", {{"epsilon", sampler.epsilon}, {"steps_per_level", sampler.steps_per_level}}},
          {"steps_fraction", steps_fraction},
          {"gic", gic.to_json()},
          {"train", train.to_json()},
          {"variants", vs}};
}

ToyData make_toy_data(ToyExperiment const &e)
{
  return {make_split(e, "train", e.n_train, 0), make_split(e, "val", e.n_val, 100000),
          make_split(e, "test", e.n_test, 200000)};
}

ScoreNet train_toy_score(ToyExperiment const &e, std::vector<DatasetRecord> const &train, ScoreTrainLog *log)
{
  std::vector<torch::Tensor> xs;
  for (auto const &r : train) { xs.push_back(r.xg); }
  auto const images = torch::stack(xs);
  auto const schedule = make_schedule(max_pairwise_distance(images), e.sigma_min, e.score.noise_levels);
  torch::manual_seed(e.seed);
  ScoreNet model(e.score, schedule);
  auto cfg = e.score_train;
  cfg.seed = e.seed;
  auto l = train_score(model, images, cfg);
  model->eval();
  if (log) { *log = std::move(l); }
  return model;
}

void attach_pgis(std::vector<DatasetRecord> &records, ScoreNet &score, SamplerConfig const &config, int64_t batch)
{
  auto const fn = as_score_fn(score);
  auto const n = static_cast<int64_t>(records.size());
  for (int64_t b = 0; b < n; b += batch) {
    std::vector<int64_t> idx;
    for (int64_t i = b; i < std::min(n, b + batch); ++i) { idx.push_back(i); }
    auto const bt = make_batch(records, idx);
    auto cfg = config;
    cfg.seed = config.seed + static_cast<uint64_t>(b / batch);
    auto const x = sample_pgi(fn, bt.y, bt.maps, bt.mask, score->schedule(), cfg);
    for (size_t k = 0; k < idx.size(); ++k) {
      records[static_cast<size_t>(idx[k])].pgi = x[static_cast<int64_t>(k)].clone();
    }
  }
}

double VariantResult::mean_psnr(std::string const &stage) const
{
  for (auto const &s : test.summary) {
    if (s.stage == stage) { return s.psnr_mean; }
  }
  throw ArgumentError("no test summary for stage " + stage);
}

ToyRunner::ToyRunner(ToyExperiment base, std::ostream *log)
  : base_(std::move(base))
  , log_(log)
{
}

void ToyRunner::note(std::string const &msg) const
{
  if (log_) { *log_ << "[toy] " << msg << std::endl; }
}

ToyData const &ToyRunner::data()
{
  if (!data_) {
    auto const t0 = Clock::now();
    data_ = make_toy_data(base_);
    note("generated " + std::to_string(base_.n_train) + "/" + std::to_string(base_.n_val) + "/" +
         std::to_string(base_.n_test) + " records in " + fmt(seconds_since(t0), 1) + " s");
  }
  return *data_;
}

ScoreNet &ToyRunner::score()
{
  if (!score_) {
    auto const t0 = Clock::now();
    ScoreTrainLog log;
    score_ = train_toy_score(base_, data().train, &log);
    note("score model: " + std::to_string(log.epoch_loss.size()) + " epochs, final DSM loss " +
         fmt(log.epoch_loss.back(), 4) + " in " + fmt(seconds_since(t0), 1) + " s");
  }
  return score_;
}

ToyData const &ToyRunner::data_with_pgis(double steps_fraction)
{
  auto it = sampled_.find(steps_fraction);
  if (it != sampled_.end()) { return it->second; }
  auto d = data();
  auto &model = score();
  auto const t0 = Clock::now();
  auto cfg = base_.sampler.with_steps_fraction(steps_fraction);
  cfg.seed = base_.seed + 17;
  attach_pgis(d.train, model, cfg);
  cfg.seed += 1000;
  attach_pgis(d.val, model, cfg);
  cfg.seed += 1000;
  attach_pgis(d.test, model, cfg);
  note("sampled guidance images with " + std::to_string(cfg.steps_per_level) + " steps per level in " +
       fmt(seconds_since(t0), 1) + " s");
  return sampled_.emplace(steps_fraction, std::move(d)).first->second;
}

VariantResult const &ToyRunner::variant(Ablation a, double steps_fraction)
{
  auto const key = std::make_pair(static_cast<int>(a), steps_fraction);
  auto it = variants_.find(key);
  if (it != variants_.end()) { return it->second; }
  auto const &d = data_with_pgis(steps_fraction);
  auto const t0 = Clock::now();
  torch::manual_seed(base_.seed + 101);
  ModelBundle bundle(a, base_.denoiser(), base_.gic, score());
  auto cfg = base_.train;
  cfg.seed = base_.seed + 202;
  VariantResult r;
  r.ablation = a;
  r.steps_fraction = steps_fraction;
  r.log = train_end_to_end(bundle, d.train, d.val, cfg);
  EvalOptions opt;
  opt.method = to_string(a);
  r.test = evaluate(d.test, &bundle, opt);
  r.seconds = seconds_since(t0);
  note("variant " + to_string(a) + " (steps fraction " + fmt(steps_fraction) + "): best epoch " +
       std::to_string(r.log.best_epoch) + ", val PSNR " + fmt(r.log.best_val_psnr) + " dB, " +
       fmt(r.seconds, 1) + " s");
  return variants_.emplace(key, std::move(r)).first->second;
}

bool AcceptanceReport::passed() const
{
  for (auto const &l : lines) {
    if (!l.passed) { return false; }
  }
  return !lines.empty();
}

std::string stage_table(VariantResult const &r, std::string const &title)
{
  std::ostringstream os;
  os << title << '\n';
  os << "  " << std::left << std::setw(14) << "stage" << std::setw(22) << "PSNR (dB)" << "SSIM\n";
  for (auto const &s : r.test.summary) {
    os << "  " << std::left << std::setw(14) << s.stage << std::setw(22)
       << (fmt(s.psnr_mean) + " +- " + fmt(s.psnr_std)) << fmt(s.ssim_mean, 4) << " +- " << fmt(s.ssim_std, 4)
       << '\n';
  }
  return os.str();
}

AcceptanceReport run_acceptance(std::string const &name, ToyRunner &runner)
{
  auto const e = ToyExperiment::named(name);
  AcceptanceReport rep;
  rep.name = name;
  auto const &full = runner.variant(Ablation::Full, 1.0);
  if (name == "e2e-4x") {
    auto const zf = full.mean_psnr("zero-filled");
    auto const xt = full.mean_psnr("x_T");
    auto const xt0 = full.mean_psnr("x_T^0");
    auto const xzk = full.mean_psnr("x_z^K");
    rep.lines.push_back({"PSNR(x_z^K) - PSNR(zero-filled) >= 3 dB", xzk - zf, 3.0, xzk - zf >= 3.0});
    rep.lines.push_back({"PSNR(x_T^0) - PSNR(x_T) > 0 dB", xt0 - xt, 0.0, xt0 > xt});
    rep.lines.push_back({"PSNR(x_z^K) - PSNR(x_T^0) > 0 dB", xzk - xt0, 0.0, xzk > xt0});
    rep.table = stage_table(full, "e2e-4x, full model, test split");
  } else if (name == "steps20") {
    auto const &reduced = runner.variant(Ablation::Full, e.steps_fraction);
    auto const drop = full.mean_psnr("x_z^K") - reduced.mean_psnr("x_z^K");
    rep.lines.push_back({"PSNR drop of x_z^K with 20% sampling steps <= 1.5 dB", drop, 1.5, drop <= 1.5});
    rep.table = stage_table(full, "full sampling steps") + stage_table(reduced, "20% sampling steps");
  } else {
    auto const f = full.mean_psnr("x_z^K");
    auto const &sg = runner.variant(Ablation::SG, 1.0);
    auto const &sgmn = runner.variant(Ablation::SG_MN, 1.0);
    auto const sgv = sg.mean_psnr("x_T");
    auto const sgmnv = sgmn.mean_psnr("x_z^K");
    rep.lines.push_back({"PSNR(full) - PSNR(SG) > 0 dB", f - sgv, 0.0, f > sgv});
    rep.lines.push_back({"PSNR(full) - PSNR(SG-MN) > 0 dB", f - sgmnv, 0.0, f > sgmnv});
    std::ostringstream os;
    os << "ablation sweep, mean test PSNR of the final stage\n"
       << "  full   " << fmt(f) << " dB\n  SG     " << fmt(sgv) << " dB\n  SG-MN  " << fmt(sgmnv) << " dB\n";
    rep.table = os.str();
  }
  return rep;
}

} // namespace sgm
