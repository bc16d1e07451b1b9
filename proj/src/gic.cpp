#include "sgm/gic.hpp"

#include "sgm/errors.hpp"

namespace nn = torch::nn;

namespace sgm {

namespace {

torch::Tensor stack_channels(std::vector<torch::Tensor> const &images)
{
  std::vector<torch::Tensor> ch;
  ch.reserve(images.size());
  for (auto const &im : images) { ch.push_back(to_channels(im)); }
  return torch::cat(ch, 1);
}

void check_image(torch::Tensor const &x, char const *what)
{
  if (!x.defined() || !x.is_complex() || x.dim() != 3) {
    throw ShapeError(std::string(what) + ": expected complex [N, H, W]");
  }
}

} // namespace

GICConfig GICConfig::desk() { return {}; }

GICConfig GICConfig::large()
{
  GICConfig c;
  c.cascades = 5;
  c.blocks = 3;
  c.reg_widths = {16, 32, 64, 128};
  return c;
}

void GICConfig::validate() const
{
  if (cascades < 1 || blocks < 1) { throw ArgumentError("gic: K and I must be >= 1"); }
  if (reg_widths.empty()) { throw ArgumentError("gic: empty regularizer widths"); }
  if (attention_layers < 2 || attention_hidden < 1) { throw ArgumentError("gic: attention needs >= 2 layers"); }
  if (!(mu_init > 0)) { throw ArgumentError("gic: mu_init must be > 0"); }
}

int64_t GICConfig::guidance_reg_channels(int64_t i) const { return use_dense ? 2 * (i + 2) : 2; }

int64_t GICConfig::main_reg_channels(int64_t i) const
{
  auto const own = use_dense ? 2 * (i + 2) : 2;
  return use_guidance_branch ? 2 * own : own;
}

int64_t GICConfig::attention_channels() const { return 4 * (blocks + 1); }

nlohmann::json GICConfig::to_json() const
{
  return {{"cascades", cascades},
          {"blocks", blocks},
          {"reg_widths", reg_widths},
          {"attention_hidden", attention_hidden},
          {"attention_layers", attention_layers},
          {"use_dense", use_dense},
          {"use_guidance_branch", use_guidance_branch},
          {"use_guidance_updates", use_guidance_updates},
          {"use_attention", use_attention},
          {"share_alpha", share_alpha},
          {"hard_dc", hard_dc},
          {"alpha_init", alpha_init},
          {"mu_init", mu_init}};
}

GICConfig GICConfig::from_json(nlohmann::json const &j)
{
  GICConfig c;
  c.cascades = j.at("cascades").get<int64_t>();
  c.blocks = j.at("blocks").get<int64_t>();
  c.reg_widths = j.at("reg_widths").get<std::vector<int64_t>>();
  c.attention_hidden = j.value("attention_hidden", c.attention_hidden);
  c.attention_layers = j.value("attention_layers", c.attention_layers);
  c.use_dense = j.value("use_dense", true);
  c.use_guidance_branch = j.value("use_guidance_branch", true);
  c.use_guidance_updates = j.value("use_guidance_updates", true);
  c.use_attention = j.value("use_attention", true);
  c.share_alpha = j.value("share_alpha", true);
  c.hard_dc = j.value("hard_dc", false);
  c.alpha_init = j.value("alpha_init", 1.0);
  c.mu_init = j.value("mu_init", 10.0);
  c.validate();
  return c;
}

AttentionImpl::AttentionImpl(int64_t in, int64_t hidden, int64_t layers)
  : in_(in)
{
  net_ = register_module("net", nn::Sequential());
  for (int64_t l = 0; l < layers; ++l) {
    auto const ci = l == 0 ? in : hidden;
    auto const co = l + 1 == layers ? 1 : hidden;
    net_->push_back(nn::Conv2d(nn::Conv2dOptions(ci, co, 3).padding(1)));
    if (l + 1 < layers) { net_->push_back(nn::ReLU()); }
  }
  net_->push_back(nn::Sigmoid());
}

torch::Tensor AttentionImpl::forward(torch::Tensor const &x)
{
  if (x.dim() != 4 || x.size(1) != in_) {
    throw ShapeError("attention: expected " + std::to_string(in_) + " feature channels");
  }
  return net_->forward(x);
}

GicCascadeImpl::GicCascadeImpl(GICConfig config)
  : config_(std::move(config))
{
  config_.validate();
  reg_t_ = register_module("reg_t", nn::ModuleList());
  reg_z_ = register_module("reg_z", nn::ModuleList());
  auto const guided = config_.use_guidance_branch;
  auto const updates = guided && config_.use_guidance_updates;
  for (int64_t i = 0; i < config_.blocks; ++i) {
    auto const s = std::to_string(i);
    alpha_z_.push_back(register_parameter("alpha_z" + s, torch::full({}, config_.alpha_init)));
    if (updates) {
      alpha_t_.push_back(config_.share_alpha ? alpha_z_.back()
                                             : register_parameter("alpha_t" + s, torch::full({}, config_.alpha_init)));
      UNetConfig uc;
      uc.in_channels = config_.guidance_reg_channels(i);
      uc.widths = config_.reg_widths;
      reg_t_->push_back(UNet(uc));
    }
    UNetConfig uz;
    uz.in_channels = config_.main_reg_channels(i);
    uz.widths = config_.reg_widths;
    reg_z_->push_back(UNet(uz));
  }
  auto const raw = positive_inverse(config_.mu_init);
  raw_mu_z_ = register_parameter("raw_mu_z", torch::full({}, raw));
  if (updates) { raw_mu_t_ = register_parameter("raw_mu_t", torch::full({}, raw)); }
  if (guided && config_.use_attention) {
    attention_ = register_module(
      "attention", Attention(config_.attention_channels(), config_.attention_hidden, config_.attention_layers));
  }
}

torch::Tensor GicCascadeImpl::alpha(int64_t i, char branch) const
{
  auto const &a = branch == 'T' ? alpha_t_ : alpha_z_;
  if (i < 0 || i >= static_cast<int64_t>(a.size())) { throw ArgumentError("gic: no alpha for this block"); }
  return a[static_cast<size_t>(i)];
}

torch::Tensor GicCascadeImpl::mu(char branch) const
{
  auto const &raw = branch == 'T' ? raw_mu_t_ : raw_mu_z_;
  if (!raw.defined()) { throw ArgumentError("gic: branch has no DC block"); }
  return to_positive(raw);
}

torch::Tensor GicCascadeImpl::regularize(char branch, int64_t i, std::vector<torch::Tensor> const &inputs,
                                         GicOverrides const *overrides)
{
  if (overrides && overrides->regularizer) { return overrides->regularizer(branch, i, inputs); }
  auto &list = branch == 'T' ? reg_t_ : reg_z_;
  return from_channels(list[static_cast<size_t>(i)]->as<UNet>()->forward(stack_channels(inputs)));
}

torch::Tensor GicCascadeImpl::attention_map(torch::Tensor const &features, GicOverrides const *overrides)
{
  if (overrides && overrides->attention) { return overrides->attention(features); }
  return attention_->forward(features);
}

torch::Tensor GicCascadeImpl::dc(torch::Tensor const &x, char branch, torch::Tensor const &y,
                                 torch::Tensor const &maps, torch::Tensor const &mask)
{
  if (config_.hard_dc) { return image_data_consistency(x, y, maps, mask, DcWeight::hard()); }
  return image_data_consistency(x, y, maps, mask, mu(branch));
}

BranchState GicCascadeImpl::forward(BranchState const &in, torch::Tensor const &y, torch::Tensor const &maps,
                                    torch::Tensor const &mask, GicOverrides const *overrides)
{
  check_image(in.x_z, "gic main branch");
  auto const guided = config_.use_guidance_branch;
  auto const updates = guided && config_.use_guidance_updates;
  if (guided) {
    check_image(in.x_t, "gic guidance branch");
    if (in.x_t.sizes() != in.x_z.sizes()) { throw ShapeError("gic: branch shapes differ"); }
  } else if (in.x_t.defined()) {
    throw ArgumentError("gic: guidance state given with the guidance branch disabled");
  }

  auto const I = config_.blocks;
  BranchState out;
  auto xt = in.x_t, xz = in.x_z;
  for (int64_t i = 0; i < I; ++i) {
    if (guided) {
      if (updates) {
        out.r_t.push_back(data_fidelity_step(xt, y, maps, mask, alpha(i, 'T')));
      } else {
        out.r_t.push_back(in.x_t);
      }
    }
    out.r_z.push_back(data_fidelity_step(xz, y, maps, mask, alpha(i, 'z')));

    std::vector<torch::Tensor> t_in, z_in;
    if (guided) {
      if (config_.use_dense) {
        t_in.push_back(in.x_t);
        t_in.insert(t_in.end(), out.r_t.begin(), out.r_t.end());
      } else {
        t_in.push_back(out.r_t.back());
      }
    }
    z_in = t_in;
    if (config_.use_dense) {
      z_in.push_back(in.x_z);
      z_in.insert(z_in.end(), out.r_z.begin(), out.r_z.end());
    } else {
      z_in.push_back(out.r_z.back());
    }
    if (updates) { xt = regularize('T', i, t_in, overrides); }
    xz = regularize('z', i, z_in, overrides);
  }

  if (!guided) {
    out.x_z = dc(in.x_z + xz, 'z', y, maps, mask);
    return out;
  }
  out.x_t = updates ? dc(in.x_t + xt, 'T', y, maps, mask) : in.x_t;
  auto const guide = updates ? xt : in.x_t;
  torch::Tensor fused;
  if (config_.use_attention || (overrides && overrides->attention)) {
    std::vector<torch::Tensor> feats{in.x_t};
    feats.insert(feats.end(), out.r_t.begin(), out.r_t.end());
    feats.push_back(in.x_z);
    feats.insert(feats.end(), out.r_z.begin(), out.r_z.end());
    auto const m = attention_map(stack_channels(feats), overrides).squeeze(1);
    fused = xz * m + guide * (1.0 - m);
  } else {
    fused = xz;
  }
  out.x_z = dc(in.x_z + fused, 'z', y, maps, mask);
  return out;
}

SgmNetImpl::SgmNetImpl(GICConfig config)
  : config_(std::move(config))
{
  config_.validate();
  for (int64_t k = 0; k < config_.cascades; ++k) {
    cascades_.push_back(register_module("gic" + std::to_string(k), GicCascade(config_)));
  }
}

GicOutput SgmNetImpl::forward(torch::Tensor const &x_t0, torch::Tensor const &x_z0, torch::Tensor const &y,
                              torch::Tensor const &maps, torch::Tensor const &mask)
{
  GicOutput o;
  BranchState s;
  s.x_z = x_z0;
  o.x_z.push_back(x_z0);
  if (config_.use_guidance_branch) {
    s.x_t = x_t0;
    o.x_t.push_back(x_t0);
  }
  auto const *ov = overrides();
  for (auto &c : cascades_) {
    s = c->forward(s, y, maps, mask, ov);
    o.x_z.push_back(s.x_z);
    if (config_.use_guidance_branch) { o.x_t.push_back(s.x_t); }
  }
  return o;
}

BranchState gic_forward(SgmNet &net, BranchState const &state, torch::Tensor const &y, torch::Tensor const &maps,
                        torch::Tensor const &mask, int64_t k)
{
  if (k < 0 || k >= net->config().cascades) { throw ArgumentError("gic_forward: cascade index out of range"); }
  return net->cascade(k)->forward(state, y, maps, mask, net->overrides());
}

} // namespace sgm
