#include "oracles.hpp"
#include "support.hpp"

#include "sgm/checkpoint.hpp"
#include "sgm/trainer.hpp"

#include "catch.hpp"

#include <fstream>
#include <set>

using namespace sgm;
using oracle::max_abs;

namespace {

ScoreNet psn()
{
  torch::manual_seed(2);
  auto cfg = ScoreModelConfig::desk();
  cfg.widths = {4, 4, 4, 8, 8, 8};
  cfg.noise_levels = 4;
  return ScoreNet(cfg, make_schedule(2.0, 0.2, 4));
}

DenoiserConfig dm_config()
{
  auto c = DenoiserConfig::desk(2);
  c.cie_widths = {4, 8};
  c.fusion_widths = {4, 8};
  return c;
}

GICConfig gic_config()
{
  auto c = GICConfig::desk();
  c.cascades = 2;
  c.blocks = 1;
  c.reg_widths = {4, 8};
  c.attention_hidden = 4;
  return c;
}

ModelBundle bundle(Ablation a, uint64_t seed = 3)
{
  torch::manual_seed(seed);
  return ModelBundle(a, dm_config(), gic_config(), psn());
}

std::vector<DatasetRecord> data(int n, uint64_t seed) { return support::records(n, 16, 2, 2, seed, true); }

std::set<std::string> top_modules(torch::nn::Module const &m)
{
  std::set<std::string> out;
  for (auto const &c : m.named_children()) { out.insert(c.key()); }
  return out;
}

} // namespace

TEST_CASE("ablation names round trip")
{
  for (auto a : all_ablations()) { CHECK(parse_ablation(to_string(a)) == a); }
  CHECK(all_ablations().size() == 8);
  CHECK(parse_ablation("SG-MN-DM-US-DG") == Ablation::Full);
  CHECK_THROWS_AS(parse_ablation("SG-XX"), ArgumentError);
}

TEST_CASE("variant toggles")
{
  auto const base = gic_config();
  CHECK(!gic_config_for(Ablation::MN, base).use_guidance_branch);
  CHECK(!gic_config_for(Ablation::SG_MN, base).use_guidance_branch);
  CHECK(!gic_config_for(Ablation::SG_MN_DM_US, base).use_dense);
  CHECK(gic_config_for(Ablation::SG_MN_DM_US, base).use_guidance_updates);
  CHECK(!gic_config_for(Ablation::SG_MN_DM_DG, base).use_guidance_updates);
  CHECK(gic_config_for(Ablation::Full, base).use_dense);
  CHECK(!layout_of(Ablation::MN).needs_pgi);
  CHECK(layout_of(Ablation::SG_MN).main_from_pgi);
  CHECK(!layout_of(Ablation::SG_MN_US_DG).uses_dm);
  CHECK(!layout_of(Ablation::SG_MN_DM).uses_gic);
}

TEST_CASE("bundles hold only the modules their variant uses")
{
  CHECK(top_modules(*bundle(Ablation::Full)) == std::set<std::string>{"dm", "gic"});
  CHECK(top_modules(*bundle(Ablation::SG_MN_DM)) == std::set<std::string>{"dm"});
  CHECK(top_modules(*bundle(Ablation::MN)) == std::set<std::string>{"gic"});
  CHECK(top_modules(*bundle(Ablation::SG_MN_US_DG)) == std::set<std::string>{"gic"});
  CHECK(!bundle(Ablation::SG)->trainable());
  CHECK_THROWS_AS(ModelBundle(Ablation::Full, dm_config(), gic_config(), ScoreNet{nullptr}), ArgumentError);
}

TEST_CASE("stage routing per variant")
{
  auto const recs = data(2, 1);
  auto const b = make_batch(recs);
  torch::NoGradGuard ng;

  auto sg = bundle(Ablation::SG);
  auto const s_sg = sg->forward(b);
  CHECK(torch::equal(s_sg.final(), b.pgi));
  CHECK(!s_sg.x_tK().defined());

  auto mn = bundle(Ablation::MN);
  auto const s_mn = mn->forward(b);
  CHECK(torch::equal(s_mn.gic.x_z[0], b.zero_filled()));
  CHECK(s_mn.gic.x_t.empty());
  Batch no_pgi = b;
  no_pgi.pgi = torch::Tensor{};
  CHECK_NOTHROW(mn->forward(no_pgi));

  auto sgmn = bundle(Ablation::SG_MN);
  CHECK(torch::equal(sgmn->forward(b).gic.x_z[0], b.pgi));

  auto full = bundle(Ablation::Full);
  auto const s_full = full->forward(b);
  CHECK(torch::equal(s_full.x_t0, b.pgi));
  CHECK(torch::equal(s_full.gic.x_t[0], s_full.x_t0));
  CHECK(s_full.gic.x_z.size() == 3);
  CHECK(s_full.x_tK().defined());
  CHECK_THROWS_AS(full->forward(no_pgi), ArgumentError);
}

TEST_CASE("training demands guidance images and names the record")
{
  auto recs = data(2, 2);
  recs[1].pgi.reset();
  auto m = bundle(Ablation::Full);
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train_end_to_end(m, recs, {}, cfg);
    FAIL("expected ArgumentError");
  } catch (ArgumentError const &e) {
    CHECK(std::string(e.what()).find("r-1") != std::string::npos);
  }
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("training restores the best validation parameters and is reproducible")
{
  auto const train = data(4, 3);
  auto const val = data(2, 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 5;
  cfg.learning_rate = 3e-3;
  int64_t seen = 0;

  auto a = bundle(Ablation::Full, 9);
  auto const log = train_end_to_end(a, train, val, cfg, {}, [&](EpochRow const &) { ++seen; });
  CHECK(seen == 3);
  CHECK(log.rows.size() == 3);
  CHECK(log.steps == 6);
  CHECK(log.best_epoch >= 1);
  auto const v = validate(a, val, cfg.loss);
  CHECK(std::abs(v.psnr - log.best_val_psnr) < 1e-9);
  CHECK(std::isfinite(v.ssim));

  auto b = bundle(Ablation::Full, 9);
  auto const log_b = train_end_to_end(b, train, val, cfg);
  for (size_t i = 0; i < 3; ++i) { CHECK(log_b.rows[i].train_loss == log.rows[i].train_loss); }
}

TEST_CASE("step caps, slice caps and denoiser-only training")
{
  auto const train = data(4, 5);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 1;
  cfg.max_steps = 3;
  cfg.train_slices = 2;
  cfg.validate_last_only = true;
  auto m = bundle(Ablation::SG_MN_DM);
  auto const before = m->dm()->fusion()->parameters().back().clone();
  auto const log = train_end_to_end(m, train, {}, cfg);
  CHECK(log.steps == 3);
  CHECK(log.rows.size() == 2);
  CHECK(std::isnan(log.rows[0].val_psnr));
  CHECK(std::isfinite(log.rows[1].val_psnr));
  CHECK(max_abs(m->dm()->fusion()->parameters().back() - before) > 0);
}

TEST_CASE("sampler-only variant is evaluated without training")
{
  auto const train = data(2, 6);
  auto m = bundle(Ablation::SG);
  TrainConfig cfg;
  support::TempDir dir;
  auto const log = train_end_to_end(m, train, {}, cfg, dir / "sg");
  CHECK(log.steps == 0);
  CHECK(log.rows.size() == 1);
  auto back = load_bundle(dir / "sg");
  CHECK(back->ablation() == Ablation::SG);
}

TEST_CASE("bundle checkpoints reproduce reconstructions")
{
  auto const train = data(2, 7);
  auto m = bundle(Ablation::Full, 11);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  support::TempDir dir;
  train_end_to_end(m, train, {}, cfg, dir / "ck");
  CHECK(std::filesystem::exists(dir / "ck" / "train_log.csv"));
  std::ifstream csv(dir / "ck" / "train_log.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,train_loss,val_loss,val_psnr,val_ssim");

  nlohmann::json meta;
  auto back = load_bundle(dir / "ck", &meta);
  CHECK(meta.at("ablation") == "full");
  CHECK(meta.at("train").at("epochs") == 1);
  auto const r1 = reconstruct(m, train);
  auto const r2 = reconstruct(back, train);
  REQUIRE(r1.size() == 2);
  CHECK(r1[0].gic.x_z.size() == 3);
  CHECK(r1[0].final().sizes() == torch::IntArrayRef({16, 16}));
  for (size_t i = 0; i < 2; ++i) {
    CHECK(torch::equal(r1[i].final(), r2[i].final()));
    CHECK(torch::equal(r1[i].x_t0, r2[i].x_t0));
  }
  CHECK_THROWS_AS(load_score(dir / "ck"), FormatError);
  CHECK_THROWS_AS(load_bundle(dir / "missing"), IoError);
}

TEST_CASE("restore rejects mismatched checkpoints")
{
  auto m = bundle(Ablation::SG_MN_DM);
  support::TempDir dir;
  save_bundle(m, dir / "dm");
  auto const ck = load_checkpoint(dir / "dm", "sgmnet");
  auto other = bundle(Ablation::MN);
  CHECK_THROWS_AS(restore(ck, *other), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "dm", "score"), FormatError);
}
