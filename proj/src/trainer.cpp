#include "sgm/trainer.hpp"

#include "sgm/checkpoint.hpp"
#include "sgm/errors.hpp"
#include "sgm/metrics.hpp"
#include "sgm/phantom.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace fs = std::filesystem;

namespace sgm {

namespace {

struct AblationName
{
  Ablation a;
  char const *name;
};

constexpr AblationName kAblations[] = {
  {Ablation::SG, "SG"},
  {Ablation::MN, "MN"},
  {Ablation::SG_MN, "SG-MN"},
  {Ablation::SG_MN_DM, "SG-MN-DM"},
  {Ablation::SG_MN_DM_US, "SG-MN-DM-US"},
  {Ablation::SG_MN_DM_DG, "SG-MN-DM-DG"},
  {Ablation::SG_MN_US_DG, "SG-MN-US-DG"},
  {Ablation::Full, "full"},
};

void require_pgi(std::vector<DatasetRecord> const &records, char const *split)
{
  for (auto const &r : records) {
    if (!r.pgi) {
      throw ArgumentError(std::string(split) + " record '" + r.id +
                          "' has no cached guidance image (pgi.cplx); run `sgmnet sample` first");
    }
  }
}

torch::Tensor pick(torch::Tensor const &t, int64_t n)
{
  return t.defined() ? t[n] : torch::Tensor{};
}

std::map<std::string, torch::Tensor> snapshot(torch::nn::Module const &m)
{
  std::map<std::string, torch::Tensor> s;
  for (auto const &p : m.named_parameters(true)) { s[p.key()] = p.value().detach().clone(); }
  for (auto const &b : m.named_buffers(true)) { s[b.key()] = b.value().detach().clone(); }
  return s;
}

void load_snapshot(torch::nn::Module &m, std::map<std::string, torch::Tensor> const &s)
{
  torch::NoGradGuard guard;
  for (auto &p : m.named_parameters(true)) { p.value().copy_(s.at(p.key())); }
  for (auto &b : m.named_buffers(true)) { b.value().copy_(s.at(b.key())); }
}

} // namespace

std::string to_string(Ablation a)
{
  for (auto const &e : kAblations) {
    if (e.a == a) { return e.name; }
  }
  throw ArgumentError("unknown ablation");
}

Ablation parse_ablation(std::string const &s)
{
  for (auto const &e : kAblations) {
    if (s == e.name) { return e.a; }
  }
  if (s == "SG-MN-DM-US-DG") { return Ablation::Full; }
  throw ArgumentError("unknown ablation '" + s +
                      "' (expected SG, MN, SG-MN, SG-MN-DM, SG-MN-DM-US, SG-MN-DM-DG, SG-MN-US-DG or full)");
}

std::vector<Ablation> all_ablations()
{
  std::vector<Ablation> v;
  for (auto const &e : kAblations) { v.push_back(e.a); }
  return v;
}

AblationLayout layout_of(Ablation a)
{
  switch (a) {
  case Ablation::SG: return {true, false, false, false};
  case Ablation::MN: return {false, false, true, false};
  case Ablation::SG_MN: return {true, false, true, true};
  case Ablation::SG_MN_DM: return {true, true, false, false};
  case Ablation::SG_MN_US_DG: return {true, false, true, false};
  default: return {true, true, true, false};
  }
}

GICConfig gic_config_for(Ablation a, GICConfig base)
{
  switch (a) {
  case Ablation::MN:
  case Ablation::SG_MN:
    base.use_guidance_branch = false;
    base.use_dense = false;
    base.use_guidance_updates = false;
    base.use_attention = false;
    break;
  case Ablation::SG_MN_DM_US: base.use_dense = false; break;
  case Ablation::SG_MN_DM_DG: base.use_guidance_updates = false; break;
  default: break;
  }
  return base;
}

torch::Tensor Stages::final() const
{
  if (!gic.x_z.empty()) { return gic.x_z.back(); }
  if (x_t0.defined()) { return x_t0; }
  return x_t;
}

torch::Tensor Stages::x_tK() const { return gic.x_t.empty() ? torch::Tensor{} : gic.x_t.back(); }

ModelBundleImpl::ModelBundleImpl(Ablation ablation, DenoiserConfig dm, GICConfig gic, ScoreNet const &psn)
  : ablation_(ablation)
  , layout_(layout_of(ablation))
  , dm_config_(std::move(dm))
  , gic_config_(gic_config_for(ablation, std::move(gic)))
{
  if (layout_.uses_dm) {
    if (!psn) { throw ArgumentError("model: the denoising module needs a score network"); }
    dm_ = register_module("dm", DenoisingModule(dm_config_, psn));
  }
  if (layout_.uses_gic) { gic_ = register_module("gic", SgmNet(gic_config_)); }
}

Stages ModelBundleImpl::forward(Batch const &batch)
{
  Stages s;
  s.zero_filled = batch.zero_filled();
  if (layout_.needs_pgi) {
    if (!batch.pgi.defined()) { throw ArgumentError("model: batch has no guidance images"); }
    s.x_t = batch.pgi;
  }
  if (layout_.uses_dm) { s.x_t0 = dm_->forward(s.x_t, batch.y, batch.maps, batch.mask).x_t0; }
  if (layout_.uses_gic) {
    auto const guide = layout_.uses_dm ? s.x_t0 : s.x_t;
    auto const main = layout_.main_from_pgi ? s.x_t : s.zero_filled;
    s.gic = gic_->forward(gic_config_.use_guidance_branch ? guide : torch::Tensor{}, main, batch.y, batch.maps,
                          batch.mask);
  }
  return s;
}

torch::Tensor ModelBundleImpl::loss(Stages const &s, torch::Tensor const &x_g, LossMode mode) const
{
  return total_loss(layout_.uses_dm ? s.x_t0 : torch::Tensor{}, s.gic, x_g, mode);
}

void TrainConfig::validate() const
{
  if (epochs < 1) { throw ArgumentError("train: epochs must be >= 1"); }
  if (!(learning_rate > 0)) { throw ArgumentError("train: learning rate must be > 0"); }
  if (batch_size < 1) { throw ArgumentError("train: batch size must be >= 1"); }
  if (train_slices < 0 || max_steps < 0) { throw ArgumentError("train: caps must be >= 0"); }
}

nlohmann::json TrainConfig::to_json() const
{
  return {{"epochs", epochs},          {"learning_rate", learning_rate}, {"batch_size", batch_size},
          {"loss", to_string(loss)},   {"train_slices", train_slices},   {"seed", seed},
          {"max_steps", max_steps}};
}

ValidationResult validate(ModelBundle &bundle, std::vector<DatasetRecord> const &records, LossMode mode,
                          int64_t batch_size)
{
  ValidationResult r;
  if (records.empty()) { return r; }
  torch::NoGradGuard guard;
  auto const was_training = bundle->is_training();
  bundle->eval();
  double loss_sum = 0;
  std::vector<double> ps, ss;
  auto const n = static_cast<int64_t>(records.size());
  for (int64_t b = 0; b < n; b += batch_size) {
    std::vector<int64_t> idx(static_cast<size_t>(std::min(batch_size, n - b)));
    std::iota(idx.begin(), idx.end(), b);
    auto const batch = make_batch(records, idx);
    auto const st = bundle->forward(batch);
    auto const fin = st.final();
    if (bundle->trainable()) {
      loss_sum += bundle->loss(st, batch.xg, mode).item<double>() * static_cast<double>(idx.size());
    } else {
      loss_sum += image_loss(fin, batch.xg, mode).item<double>() * static_cast<double>(idx.size());
    }
    for (auto v : psnr_batch(fin, batch.xg)) { ps.push_back(v); }
    if (batch.xg.size(-1) >= kSsimWindow && batch.xg.size(-2) >= kSsimWindow) {
      for (auto v : ssim_batch(fin, batch.xg)) { ss.push_back(v); }
    }
  }
  bundle->train(was_training);
  r.loss = loss_sum / static_cast<double>(n);
  r.psnr = std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(ps.size());
  r.ssim = ss.empty() ? std::nan("") : std::accumulate(ss.begin(), ss.end(), 0.0) / static_cast<double>(ss.size());
  return r;
}

TrainLog train_end_to_end(ModelBundle &bundle, std::vector<DatasetRecord> const &train_all,
                          std::vector<DatasetRecord> const &val, TrainConfig const &config,
                          fs::path const &checkpoint_dir, std::function<void(EpochRow const &)> const &on_epoch)
{
  config.validate();
  if (train_all.empty()) { throw ArgumentError("train: empty training split"); }
  auto const lay = layout_of(bundle->ablation());
  if (lay.needs_pgi) {
    require_pgi(train_all, "training");
    require_pgi(val, "validation");
  }
  std::vector<DatasetRecord> train(train_all.begin(),
                                   config.train_slices > 0 && config.train_slices < static_cast<int64_t>(train_all.size())
                                     ? train_all.begin() + config.train_slices
                                     : train_all.end());
  TrainLog log;
  if (!bundle->trainable()) {
    auto const v = validate(bundle, val.empty() ? train : val, config.loss);
    log.rows.push_back({1, v.loss, v.loss, v.psnr, v.ssim});
    log.best_epoch = 1;
    log.best_val_psnr = v.psnr;
    if (!checkpoint_dir.empty()) { save_bundle(bundle, checkpoint_dir, {{"train", config.to_json()}}); }
    return log;
  }

  auto gen = make_generator(config.seed);
  std::vector<torch::Tensor> params;
  for (auto &p : bundle->parameters()) {
    if (p.requires_grad()) { params.push_back(p); }
  }
  torch::optim::Adam opt(params, torch::optim::AdamOptions(config.learning_rate));
  auto const n = static_cast<int64_t>(train.size());
  std::map<std::string, torch::Tensor> best;
  log.best_val_psnr = -std::numeric_limits<double>::infinity();
  bool stop = false;
  for (int64_t epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    bundle->train();
    auto const perm = torch::randperm(n, gen, torch::kLong);
    auto const *pi = perm.data_ptr<int64_t>();
    double sum = 0;
    int64_t count = 0;
    for (int64_t b = 0; b < n; b += config.batch_size) {
      std::vector<int64_t> idx(pi + b, pi + std::min(n, b + config.batch_size));
      auto const batch = make_batch(train, idx);
      auto const st = bundle->forward(batch);
      auto const loss = bundle->loss(st, batch.xg, config.loss);
      auto const lv = loss.item<double>();
      if (!std::isfinite(lv)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(log.steps + 1) + " (first record " + batch.ids.front() + ")");
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum += lv * static_cast<double>(idx.size());
      count += static_cast<int64_t>(idx.size());
      ++log.steps;
      if (config.max_steps > 0 && log.steps >= config.max_steps) {
        stop = true;
        break;
      }
    }
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = sum / static_cast<double>(count);
    auto const last = stop || epoch == config.epochs;
    if (!config.validate_last_only || last) {
      auto const v = validate(bundle, val.empty() ? train : val, config.loss);
      row.val_loss = v.loss;
      row.val_psnr = v.psnr;
      row.val_ssim = v.ssim;
      if (v.psnr > log.best_val_psnr) {
        log.best_val_psnr = v.psnr;
        log.best_epoch = epoch;
        best = snapshot(*bundle);
      }
    } else {
      row.val_loss = row.val_psnr = row.val_ssim = std::nan("");
    }
    log.rows.push_back(row);
    if (on_epoch) { on_epoch(row); }
  }
  if (!best.empty()) { load_snapshot(*bundle, best); }
  bundle->eval();
  if (!checkpoint_dir.empty()) {
    nlohmann::json hist = nlohmann::json::array();
    for (auto const &r : log.rows) {
      hist.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
                      {"val_psnr", r.val_psnr}, {"val_ssim", r.val_ssim}});
    }
    save_bundle(bundle, checkpoint_dir,
                {{"train", config.to_json()}, {"epoch", log.best_epoch}, {"history", hist}});
    write_train_log(log, checkpoint_dir / "train_log.csv");
  }
  return log;
}

void write_train_log(TrainLog const &log, fs::path const &csv)
{
  std::ofstream out(csv, std::ios::trunc);
  if (!out) { throw IoError(csv, "cannot open for writing"); }
  out << "epoch,train_loss,val_loss,val_psnr,val_ssim\n";
  out.precision(10);
  for (auto const &r : log.rows) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_psnr << ',' << r.val_ssim << '\n';
  }
}

namespace {

nlohmann::json schedule_json(NoiseSchedule const &s) { return s.sigmas(); }

} // namespace

void save_bundle(ModelBundle const &bundle, fs::path const &dir, nlohmann::json const &extra)
{
  nlohmann::json meta{{"ablation", to_string(bundle->ablation())},
                      {"denoiser", bundle->dm_config().to_json()},
                      {"gic", bundle->gic_config().to_json()}};
  if (layout_of(bundle->ablation()).uses_dm) {
    auto &dm = const_cast<ModelBundle &>(bundle)->dm();
    auto const &psn = dm->sie()->psn();
    meta["score"] = {{"config", psn->config().to_json()}, {"sigmas", schedule_json(psn->schedule())}};
  }
  for (auto const &[k, v] : extra.items()) { meta[k] = v; }
  save_checkpoint(dir, "sgmnet", meta, *bundle);
}

ModelBundle load_bundle(fs::path const &dir, nlohmann::json *meta_out)
{
  auto const ck = load_checkpoint(dir, "sgmnet");
  auto const &meta = ck.meta;
  try {
    auto const ablation = parse_ablation(meta.at("ablation").get<std::string>());
    auto const dm = DenoiserConfig::from_json(meta.at("denoiser"));
    auto const gic = GICConfig::from_json(meta.at("gic"));
    ScoreNet psn{nullptr};
    if (meta.contains("score")) {
      psn = ScoreNet(ScoreModelConfig::from_json(meta["score"].at("config")),
                     NoiseSchedule(meta["score"].at("sigmas").get<std::vector<double>>()));
    }
    ModelBundle bundle(ablation, dm, gic, psn);
    restore(ck, *bundle);
    bundle->eval();
    if (meta_out) { *meta_out = meta; }
    return bundle;
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(dir / "manifest.json", e.what());
  }
}

void save_score(ScoreNet const &model, fs::path const &dir, nlohmann::json const &extra)
{
  nlohmann::json meta{{"config", model->config().to_json()}, {"sigmas", schedule_json(model->schedule())}};
  for (auto const &[k, v] : extra.items()) { meta[k] = v; }
  save_checkpoint(dir, "score", meta, *model);
}

ScoreNet load_score(fs::path const &dir)
{
  auto const ck = load_checkpoint(dir, "score");
  try {
    ScoreNet model(ScoreModelConfig::from_json(ck.meta.at("config")),
                   NoiseSchedule(ck.meta.at("sigmas").get<std::vector<double>>()));
    restore(ck, *model);
    model->eval();
    return model;
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(dir / "manifest.json", e.what());
  }
}

std::vector<Stages> reconstruct(ModelBundle &bundle, std::vector<DatasetRecord> const &records, int64_t batch_size)
{
  torch::NoGradGuard guard;
  bundle->eval();
  std::vector<Stages> out;
  auto const n = static_cast<int64_t>(records.size());
  for (int64_t b = 0; b < n; b += batch_size) {
    std::vector<int64_t> idx(static_cast<size_t>(std::min(batch_size, n - b)));
    std::iota(idx.begin(), idx.end(), b);
    auto const st = bundle->forward(make_batch(records, idx));
    for (int64_t i = 0; i < static_cast<int64_t>(idx.size()); ++i) {
      Stages s;
      s.zero_filled = pick(st.zero_filled, i);
      s.x_t = pick(st.x_t, i);
      s.x_t0 = pick(st.x_t0, i);
      for (auto const &t : st.gic.x_t) { s.gic.x_t.push_back(t[i]); }
      for (auto const &t : st.gic.x_z) { s.gic.x_z.push_back(t[i]); }
      out.push_back(std::move(s));
    }
  }
  return out;
}

} // namespace sgm
