// sgmnet: command-line front end for data generation, training, sampling,
// reconstruction, evaluation and the property suite.

#include "sgm/config.hpp"
#include "sgm/dataset.hpp"
#include "sgm/errors.hpp"
#include "sgm/evaluate.hpp"
#include "sgm/experiments.hpp"
#include "sgm/property_suite.hpp"
#include "sgm/sampler.hpp"
#include "sgm/schedule.hpp"
#include "sgm/score_training.hpp"
#include "sgm/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace sgm;

namespace {

std::vector<std::string> split_list(std::string const &s)
{
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) { out.push_back(item); }
  }
  return out;
}

/// Fills options that were not given on the command line from the --config file.
void apply_config(CLI::App &sub, std::string const &config_file)
{
  if (config_file.empty()) { return; }
  auto const cfg = FlatConfig::load(config_file);
  std::set<std::string> known;
  for (auto *opt : sub.get_options()) {
    auto const name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") { continue; }
    known.insert(name);
    if (opt->count() > 0 || !cfg.has(name)) { continue; }
    auto const value = *cfg.get(name);
    if (opt->get_expected_max() == 0) {
      if (FlatConfig::parse(name + "=" + value).get_bool(name, false)) { opt->add_result("true"); }
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
  cfg.require_known(known);
}

struct GenerateArgs
{
  std::string out;
  int64_t n_train = 200, n_val = 20, n_test = 30, size = 32, coils = 4;
  int accel = 4;
  double center_fraction = 0.08, noise_std = 0;
  std::string mask = "random", family = "A";
  uint64_t seed = 1234;
};

void run_generate(GenerateArgs const &a)
{
  ToyExperiment e;
  e.name = "generate";
  e.n_train = a.n_train;
  e.n_val = a.n_val;
  e.n_test = a.n_test;
  e.size = a.size;
  e.coils = a.coils;
  e.acceleration = a.accel;
  e.center_fraction = a.center_fraction;
  e.mask_kind = parse_mask_kind(a.mask);
  e.family = parse_family(a.family);
  e.seed = a.seed;
  e.noise_std = a.noise_std;
  auto data = make_toy_data(e);
  std::map<std::string, std::vector<DatasetRecord> *> splits{{"train", &data.train}, {"val", &data.val}, {"test", &data.test}};
  for (auto &[name, recs] : splits) {
    for (auto const &r : *recs) { write_record(r, fs::path(a.out) / name); }
  }
  nlohmann::json info{{"n_train", a.n_train}, {"n_val", a.n_val},   {"n_test", a.n_test},
                      {"size", a.size},       {"coils", a.coils},   {"acceleration", a.accel},
                      {"mask", a.mask},       {"family", a.family}, {"center_fraction", a.center_fraction},
                      {"noise_std", a.noise_std}, {"seed", a.seed}};
  std::ofstream(fs::path(a.out) / "dataset.json") << info.dump(2) << '\n';
  std::cout << "wrote " << a.n_train << "/" << a.n_val << "/" << a.n_test << " records to " << a.out << std::endl;
}

struct ScoreArgs
{
  std::string data, out, preset = "desk";
  int64_t epochs = 60, batch_size = 16, levels = 10;
  double lr = 1e-3, sigma_min = 0.01, sigma_max = 0;
  uint64_t seed = 0;
};

void run_train_score(ScoreArgs const &a)
{
  auto const recs = read_split(fs::path(a.data) / "train");
  if (recs.empty()) { throw ArgumentError("no training records under " + a.data + "/train"); }
  std::vector<torch::Tensor> xs;
  for (auto const &r : recs) { xs.push_back(r.xg); }
  auto const images = torch::stack(xs);
  auto const smax = a.sigma_max > 0 ? a.sigma_max : max_pairwise_distance(images);
  auto cfg = a.preset == "large" ? ScoreModelConfig::large() : ScoreModelConfig::desk();
  if (a.preset != "large" && a.preset != "desk") { throw ArgumentError("--preset must be desk or large"); }
  cfg.noise_levels = a.levels;
  torch::manual_seed(a.seed);
  ScoreNet model(cfg, make_schedule(smax, a.sigma_min, a.levels));
  ScoreTrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;
  tc.seed = a.seed;
  tc.on_epoch = [](int64_t epoch, double loss) {
    std::cout << "epoch " << epoch << "  dsm loss " << loss << std::endl;
  };
  auto const log = train_score(model, images, tc);
  model->eval();
  save_score(model, a.out, {{"epoch_loss", log.epoch_loss}, {"train_records", recs.size()}});
  std::cout << "saved score model to " << a.out << " (sigma_max " << smax << ")" << std::endl;
}

struct SampleArgs
{
  std::string data, score, splits = "train,val,test";
  int64_t steps_per_level = 5, batch = 64;
  double steps_fraction = 1.0, epsilon = 1e-4, noise_std = 0;
  uint64_t seed = 0;
};

void run_sample(SampleArgs const &a)
{
  auto model = load_score(a.score);
  model->eval();
  SamplerConfig base;
  base.epsilon = a.epsilon;
  base.steps_per_level = a.steps_per_level;
  base.measurement_noise_std = a.noise_std;
  base.seed = a.seed;
  auto cfg = base.with_steps_fraction(a.steps_fraction);
  uint64_t offset = 0;
  for (auto const &split : split_list(a.splits)) {
    auto const dir = fs::path(a.data) / split;
    auto recs = read_split(dir);
    cfg.seed = a.seed + offset;
    offset += 1000;
    auto const t0 = std::chrono::steady_clock::now();
    attach_pgis(recs, model, cfg, a.batch);
    for (auto &r : recs) {
      r.generation["pgi"] = {{"score", a.score},
                             {"steps_per_level", cfg.steps_per_level},
                             {"epsilon", cfg.epsilon},
                             {"seed", cfg.seed}};
      write_record(r, dir);
    }
    std::cout << split << ": sampled " << recs.size() << " guidance images with " << cfg.steps_per_level
              << " steps per level in "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s" << std::endl;
  }
}

struct TrainArgs
{
  std::string data, score, ablation = "full", out, preset = "desk", loss = "mse";
  int64_t train_slices = 0, epochs = 30, batch_size = 4, cascades = 0, blocks = 0, max_steps = 0;
  double lr = 1e-3;
  uint64_t seed = 0;
};

void run_train(TrainArgs const &a)
{
  auto const ablation = parse_ablation(a.ablation);
  auto const train = read_split(fs::path(a.data) / "train");
  auto const val = read_split(fs::path(a.data) / "val");
  if (train.empty()) { throw ArgumentError("no training records under " + a.data + "/train"); }
  if (a.preset != "large" && a.preset != "desk") { throw ArgumentError("--preset must be desk or large"); }
  auto const coils = train.front().maps.coils();
  auto dm = a.preset == "large" ? DenoiserConfig::large(coils) : DenoiserConfig::desk(coils);
  auto gic = a.preset == "large" ? GICConfig::large() : GICConfig::desk();
  if (a.cascades > 0) { gic.cascades = a.cascades; }
  if (a.blocks > 0) { gic.blocks = a.blocks; }
  ScoreNet psn{nullptr};
  if (layout_of(ablation).uses_dm) {
    if (a.score.empty()) { throw ArgumentError("--score is required for ablation " + a.ablation); }
    psn = load_score(a.score);
  }
  torch::manual_seed(a.seed);
  ModelBundle bundle(ablation, dm, gic, psn);
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch_size;
  tc.loss = parse_loss_mode(a.loss);
  tc.train_slices = a.train_slices;
  tc.seed = a.seed;
  tc.max_steps = a.max_steps;
  auto const log = train_end_to_end(bundle, train, val, tc, a.out, [](EpochRow const &r) {
    std::cout << "epoch " << r.epoch << "  train " << r.train_loss << "  val " << r.val_loss << "  psnr "
              << r.val_psnr << " dB  ssim " << r.val_ssim << std::endl;
  });
  std::cout << "best epoch " << log.best_epoch << " (val PSNR " << log.best_val_psnr << " dB); saved to " << a.out
            << std::endl;
}

struct ReconArgs
{
  std::string data, ckpt, out, split = "test";
};

void run_reconstruct(ReconArgs const &a)
{
  auto bundle = load_bundle(a.ckpt);
  auto const recs = read_split(fs::path(a.data) / a.split);
  auto const stages = reconstruct(bundle, recs);
  for (size_t i = 0; i < recs.size(); ++i) {
    auto const dir = fs::path(a.out) / recs[i].id;
    fs::create_directories(dir);
    nlohmann::json written = nlohmann::json::object();
    for (auto const &[name, file] : std::vector<std::pair<std::string, std::string>>{
           {"zero-filled", "zero_filled"}, {"x_T", "x_T"}, {"x_T^0", "x_T0"}, {"x_T^K", "x_TK"}, {"x_z^K", "x_zK"}}) {
      auto const img = stage_image(stages[i], name);
      if (!img.defined()) { continue; }
      write_cplx(dir / (file + ".cplx"), img.detach().to(torch::kComplexFloat));
      written[name] = {{"file", file + ".cplx"}, {"shape", img.sizes().vec()}};
    }
    std::ofstream(dir / "stages.json") << written.dump(2) << '\n';
  }
  std::cout << "reconstructed " << recs.size() << " records into " << a.out << std::endl;
}

struct EvalArgs
{
  std::string data, ckpt, out, split = "test", stages = "zero-filled,x_T,x_T^0,x_T^K,x_z^K", method = "sgmnet";
  bool figures = false;
  double tv_lambda = 2e-3, tv_alpha = 0.5;
  int64_t tv_steps = 200;
};

void run_evaluate(EvalArgs const &a)
{
  auto const recs = read_split(fs::path(a.data) / a.split);
  EvalOptions opt;
  opt.stages = parse_stages(a.stages);
  opt.method = a.method;
  opt.figures = a.figures;
  opt.tv.lambda = a.tv_lambda;
  opt.tv.alpha = a.tv_alpha;
  opt.tv.steps = a.tv_steps;
  opt.tv.validate();
  ModelBundle bundle{nullptr};
  nlohmann::json ctx{{"data", a.data}, {"split", a.split}};
  if (!a.ckpt.empty()) {
    bundle = load_bundle(a.ckpt);
    ctx["checkpoint"] = a.ckpt;
    ctx["ablation"] = to_string(bundle->ablation());
  }
  auto const rep = evaluate(recs, a.ckpt.empty() ? nullptr : &bundle, opt, fs::path(a.out) / "figures");
  write_report(rep, a.out, ctx);
  for (auto const &w : rep.warnings) { std::cerr << "warning: " << w << std::endl; }
  for (auto const &s : rep.summary) {
    std::cout << s.method << " " << s.stage << ": PSNR " << s.psnr_mean << " +- " << s.psnr_std << " dB, SSIM "
              << s.ssim_mean << " +- " << s.ssim_std << " (" << s.count << " records)" << std::endl;
  }
}

struct VerifyArgs
{
  std::string groups, fault, json;
  uint64_t seed = 0;
};

int run_verify(VerifyArgs const &a)
{
  SuiteOptions o;
  o.seed = a.seed;
  o.fault = a.fault;
  auto const rep = run_property_suite(split_list(a.groups), o);
  std::cout << rep.to_text();
  if (!a.json.empty()) { std::ofstream(a.json) << rep.to_json().dump(2) << '\n'; }
  return rep.passed() ? 0 : 1;
}

struct ExperimentArgs
{
  std::string name = "e2e-4x", out;
};

int run_experiment(ExperimentArgs const &a)
{
  ToyRunner runner(ToyExperiment::named("e2e-4x"), &std::cerr);
  auto const rep = run_acceptance(a.name, runner);
  std::cout << rep.table;
  for (auto const &l : rep.lines) {
    std::cout << (l.passed ? "PASS  " : "FAIL  ") << l.what << ": measured " << l.measured << ", required "
              << l.required << std::endl;
  }
  if (!a.out.empty()) {
    nlohmann::json lines = nlohmann::json::array();
    for (auto const &l : rep.lines) {
      lines.push_back({{"criterion", l.what}, {"measured", l.measured}, {"required", l.required}, {"passed", l.passed}});
    }
    fs::create_directories(a.out);
    std::ofstream(fs::path(a.out) / "acceptance.json")
      << nlohmann::json{{"name", a.name}, {"config", ToyExperiment::named(a.name).to_json()}, {"criteria", lines}}.dump(2)
      << '\n';
  }
  return rep.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"sgmnet: score-guided multicoil MRI reconstruction"};
  app.require_subcommand(1);
  std::string config;
  auto add_config = [&](CLI::App *s) { s->add_option("--config", config, "flat key = value file; CLI flags win"); };

  GenerateArgs g;
  auto *gen = app.add_subcommand("generate", "write a synthetic dataset");
  gen->add_option("--out", g.out, "dataset root")->required();
  gen->add_option("--n-train", g.n_train);
  gen->add_option("--n-val", g.n_val);
  gen->add_option("--n-test", g.n_test);
  gen->add_option("--size", g.size, "image height and width");
  gen->add_option("--coils", g.coils);
  gen->add_option("--accel", g.accel, "acceleration R");
  gen->add_option("--center-fraction", g.center_fraction);
  gen->add_option("--mask", g.mask, "random or equispaced");
  gen->add_option("--family", g.family, "phantom family A or B");
  gen->add_option("--noise-std", g.noise_std);
  gen->add_option("--seed", g.seed);
  add_config(gen);

  ScoreArgs sc;
  auto *ts = app.add_subcommand("train-score", "train the score network by denoising score matching");
  ts->add_option("--data", sc.data)->required();
  ts->add_option("--out", sc.out, "checkpoint directory")->required();
  ts->add_option("--epochs", sc.epochs);
  ts->add_option("--batch-size", sc.batch_size);
  ts->add_option("--lr", sc.lr);
  ts->add_option("--levels", sc.levels, "number of noise levels L");
  ts->add_option("--sigma-min", sc.sigma_min);
  ts->add_option("--sigma-max", sc.sigma_max, "0 = max pairwise training distance");
  ts->add_option("--preset", sc.preset, "desk or large widths");
  ts->add_option("--seed", sc.seed);
  add_config(ts);

  SampleArgs sa;
  auto *sm = app.add_subcommand("sample", "cache a guidance image (pgi.cplx) for every record");
  sm->add_option("--data", sa.data)->required();
  sm->add_option("--score", sa.score, "score checkpoint")->required();
  sm->add_option("--steps-per-level", sa.steps_per_level);
  sm->add_option("--steps-fraction", sa.steps_fraction, "scale steps per level, e.g. 0.2");
  sm->add_option("--epsilon", sa.epsilon);
  sm->add_option("--noise-std", sa.noise_std, "measurement noise std in the consistency term");
  sm->add_option("--splits", sa.splits);
  sm->add_option("--batch", sa.batch);
  sm->add_option("--seed", sa.seed);
  add_config(sm);

  TrainArgs ta;
  auto *tr = app.add_subcommand("train", "train the denoising module and unrolled network end to end");
  tr->add_option("--data", ta.data)->required();
  tr->add_option("--score", ta.score, "score checkpoint (needed when the variant uses the denoiser)");
  tr->add_option("--out", ta.out, "checkpoint directory")->required();
  tr->add_option("--ablation", ta.ablation,
                 "SG, MN, SG-MN, SG-MN-DM, SG-MN-DM-US, SG-MN-DM-DG, SG-MN-US-DG or full");
  tr->add_option("--train-slices", ta.train_slices, "use only the first N training records (0 = all)");
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--batch-size", ta.batch_size);
  tr->add_option("--lr", ta.lr);
  tr->add_option("--loss", ta.loss, "mse or mse+ssim");
  tr->add_option("--cascades", ta.cascades, "K (0 = preset)");
  tr->add_option("--blocks", ta.blocks, "I (0 = preset)");
  tr->add_option("--preset", ta.preset, "desk or large widths");
  tr->add_option("--max-steps", ta.max_steps);
  tr->add_option("--seed", ta.seed);
  add_config(tr);

  ReconArgs ra;
  auto *rc = app.add_subcommand("reconstruct", "write every reconstruction stage per record");
  rc->add_option("--data", ra.data)->required();
  rc->add_option("--ckpt", ra.ckpt)->required();
  rc->add_option("--out", ra.out)->required();
  rc->add_option("--split", ra.split);
  add_config(rc);

  EvalArgs ea;
  auto *ev = app.add_subcommand("evaluate", "PSNR/SSIM per record and stage");
  ev->add_option("--data", ea.data)->required();
  ev->add_option("--ckpt", ea.ckpt, "model checkpoint; omit to evaluate baselines only");
  ev->add_option("--out", ea.out)->required();
  ev->add_option("--split", ea.split);
  ev->add_option("--stages", ea.stages, "comma-separated: zero-filled,x_T,x_T^0,x_T^K,x_z^K,TV");
  ev->add_option("--method", ea.method);
  ev->add_flag("--figures", ea.figures, "write PNG panels");
  ev->add_option("--tv-lambda", ea.tv_lambda);
  ev->add_option("--tv-alpha", ea.tv_alpha);
  ev->add_option("--tv-steps", ea.tv_steps);
  add_config(ev);

  VerifyArgs va;
  auto *vf = app.add_subcommand("verify", "run the property suite");
  vf->add_option("--groups", va.groups, "comma-separated groups (default all)");
  vf->add_option("--seed", va.seed);
  vf->add_option("--inject-fault", va.fault, "fft-scale");
  vf->add_option("--json", va.json, "write the machine-readable report here");
  add_config(vf);

  ExperimentArgs xa;
  auto *xp = app.add_subcommand("experiment", "run a toy experiment and check its criteria");
  xp->add_option("--name", xa.name, "e2e-4x, steps20 or ablation-sweep");
  xp->add_option("--out", xa.out, "write acceptance.json here");
  add_config(xp);

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    return app.exit(e);
  }

  try {
    for (auto *s : app.get_subcommands()) { apply_config(*s, config); }
    if (*gen) { run_generate(g); }
    if (*ts) { run_train_score(sc); }
    if (*sm) { run_sample(sa); }
    if (*tr) { run_train(ta); }
    if (*rc) { run_reconstruct(ra); }
    if (*ev) { run_evaluate(ea); }
    if (*vf) { return run_verify(va); }
    if (*xp) { return run_experiment(xa); }
  } catch (ArgumentError const &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
