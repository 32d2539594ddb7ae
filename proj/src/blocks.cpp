// lwisp/blocks.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "lwisp/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace lwisp {

int64_t Conv2d::macs(int64_t in_h, int64_t in_w) const {
  const int64_t oh = resolution.pooled ? 1 : in_h * resolution.num / resolution.den;
  const int64_t ow = resolution.pooled ? 1 : in_w * resolution.num / resolution.den;
  return out_channels * in_channels * kernel * kernel * oh * ow;
}

Conv2d ParamStore::make_conv(const std::string& name, int64_t in, int64_t out, int64_t kernel,
                             ConvRole role, Resolution res, int64_t stride, int64_t dilation) {
  if (in < 1 || out < 1 || kernel < 1)
    throw std::invalid_argument("conv '" + name + "': channel counts and kernel must be >= 1");
  Conv2d c;
  c.name = name;
  c.role = role;
  c.resolution = res;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel = kernel;
  c.opts.stride = stride;
  c.opts.dilation = dilation;
  c.opts.padding = dilation * (kernel - 1) / 2;

  Tensor w(Shape{out, in, kernel, kernel});
  std::normal_distribution<Real> normal(0.0, std::sqrt(2.0 / static_cast<Real>(in * kernel * kernel)));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = normal(rng_);
  c.weight = Var::parameter(std::move(w));
  c.bias = Var::parameter(Tensor(Shape{out}, 0.0));
  params_.push_back({name + ".weight", c.weight});
  params_.push_back({name + ".bias", c.bias});
  convs_.push_back(c);
  return c;
}

std::vector<Var> ParamStore::vars() const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.var;
  throw std::out_of_range("no parameter named '" + name + "'");
}

int64_t ParamStore::num_params() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.var.value().numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

// FGAM

Fgam::Fgam(ParamStore& store, const std::string& prefix, const FgamConfig& cfg, Resolution res)
    : cfg_(cfg) {
  if (cfg.reduction < 1 || cfg.channels % cfg.reduction != 0)
    throw std::invalid_argument("FGAM '" + prefix + "': reduction " +
                                std::to_string(cfg.reduction) + " does not divide " +
                                std::to_string(cfg.channels) + " channels");
  const int64_t hidden = cfg.channels / cfg.reduction;
  squeeze = store.make_conv(prefix + ".squeeze", cfg.channels, hidden, 1, ConvRole::kAttention,
                            Resolution::global());
  excite = store.make_conv(prefix + ".excite", hidden, cfg.channels, 1, ConvRole::kAttention,
                           Resolution::global());
  spatial = store.make_conv(prefix + ".spatial", 2, 1, cfg.spatial_kernel, ConvRole::kAttention,
                            res);
}

Var Fgam::channel_attention(const Var& x) const {
  return sigmoid(excite(activate(squeeze(global_avg_pool(x)), cfg_.activation)));
}

Var Fgam::spatial_attention(const Var& x) const {
  const Var pooled = concat_channels(
      {channel_pool(x, ChannelPoolMode::kMean), channel_pool(x, ChannelPoolMode::kMax)});
  return sigmoid(spatial(pooled));
}

Var Fgam::forward(const Var& x) const {
  if (x.dim(1) != cfg_.channels)
    throw ShapeError("FGAM: expected " + std::to_string(cfg_.channels) + " channels, got " +
                     x.shape().str());
  const Var ac = broadcast_to(channel_attention(x), x.shape());
  const Var as = broadcast_to(spatial_attention(x), x.shape());
  if (cfg_.fusion == FgamFusion::kMultiply) return concat_channels({x * ac, x * as});
  return concat_channels({x + ac, x + as});
}

// CCB

Ccb::Ccb(ParamStore& store, const std::string& prefix, const CcbConfig& cfg, Resolution in_res)
    : cfg_(cfg) {
  const Resolution out_res = in_res.times(2, 1);
  const int64_t wide = cfg.out_channels * 4;
  encoder_branch.adjust =
      store.make_conv(prefix + ".enc_adjust", cfg.encoder_channels, wide,
                      cfg.encoder_adjust_kernel, ConvRole::kUpsampling, in_res);
  encoder_branch.refine = store.make_conv(prefix + ".enc_refine", cfg.out_channels,
                                          cfg.out_channels, 3, ConvRole::kUpsampling, out_res);
  decoder_branch.adjust =
      store.make_conv(prefix + ".dec_adjust", cfg.decoder_channels, wide,
                      cfg.decoder_adjust_kernel, ConvRole::kUpsampling, in_res);
  decoder_branch.refine = store.make_conv(prefix + ".dec_refine", cfg.out_channels,
                                          cfg.out_channels, 3, ConvRole::kUpsampling, out_res);
  local_context = store.make_conv(prefix + ".ctx_d1", cfg.context_channels,
                                  cfg.complement_channels, 1, ConvRole::kUpsampling, out_res);
  wide_context = store.make_conv(prefix + ".ctx_d2", cfg.context_channels,
                                 cfg.complement_channels, 3, ConvRole::kUpsampling, out_res, 1, 2);
}

Var Ccb::core(const Var& encoder_feat, const Var& decoder_feat) const {
  if (encoder_feat.dim(2) != decoder_feat.dim(2) || encoder_feat.dim(3) != decoder_feat.dim(3))
    throw ShapeError("CCB core: branch extents differ, " + encoder_feat.shape().str() + " vs " +
                     decoder_feat.shape().str());
  return encoder_branch(encoder_feat) + decoder_branch(decoder_feat);
}

Var Ccb::contrast_map(const Var& context) const {
  return sigmoid(local_context(context) - wide_context(context));
}

Var Ccb::complement(const Var& context, const Var& core_out) const {
  if (context.dim(2) != core_out.dim(2) || context.dim(3) != core_out.dim(3))
    throw ShapeError("CCB complement: context " + context.shape().str() +
                     " does not match upsampled resolution " + core_out.shape().str());
  return concat_channels({core_out, contrast_map(context)});
}

Var Ccb::forward(const Var& encoder_feat, const Var& decoder_feat, const Var& context) const {
  return complement(context, core(encoder_feat, decoder_feat));
}

// Down / up stages

DownBlock::DownBlock(ParamStore& store, const std::string& prefix, const DownBlockConfig& cfg,
                     Resolution in_res)
    : cfg_(cfg) {
  const Resolution out_res = in_res.times(1, 2);
  reduce = store.make_conv(prefix + ".reduce", cfg.in_channels, cfg.out_channels, 3,
                           ConvRole::kBackbone, out_res, 2);
  conv = store.make_conv(prefix + ".conv", cfg.out_channels, cfg.out_channels, 3,
                         ConvRole::kBackbone, out_res);
  if (cfg.use_fgam) {
    FgamConfig fc = cfg.fgam;
    fc.channels = cfg.out_channels;
    fgam_ = Fgam(store, prefix + ".fgam", fc, out_res);
  }
}

DownBlock::Output DownBlock::forward(const Var& x) const {
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw ShapeError("down block: odd spatial extent " + x.shape().str());
  const Var h = activate(conv(activate(reduce(x), cfg_.activation)), cfg_.activation);
  return {h, cfg_.use_fgam ? fgam_.forward(h) : h};
}

int64_t DownBlock::out_channels() const {
  return cfg_.use_fgam ? 2 * cfg_.out_channels : cfg_.out_channels;
}

UpStage::UpStage(ParamStore& store, const std::string& prefix, const CcbConfig& cfg,
                 Activation activation, Resolution in_res)
    : activation_(activation) {
  ccb_ = Ccb(store, prefix + ".ccb", cfg, in_res);
  const Resolution out_res = in_res.times(2, 1);
  fuse = store.make_conv(prefix + ".fuse", ccb_.out_channels(), cfg.out_channels, 3,
                         ConvRole::kBackbone, out_res);
  refine = store.make_conv(prefix + ".refine", cfg.out_channels, cfg.out_channels, 3,
                           ConvRole::kBackbone, out_res);
}

Var UpStage::forward(const Var& decoder, const Var& skip_same, const Var& skip_double) const {
  const Var merged = ccb_.forward(skip_same, decoder, skip_double);
  return activate(refine(activate(fuse(merged), activation_)), activation_);
}

}  // namespace lwisp
