// lwisp/model.cpp

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

#include "lwisp/model.hpp"

#include <sstream>
#include <stdexcept>

namespace lwisp {

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

int64_t parse_int(const std::string& key, const std::string& v) {
  size_t used = 0;
  int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty())
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

void require_input(const Var& x, int64_t channels, int64_t divisor, const char* who) {
  const Tensor& v = x.value();
  if (v.rank() != 4 || v.dim(1) != channels)
    throw ShapeError(std::string(who) + ": expected input [N," + std::to_string(channels) +
                     ",H,W], got " + v.shape().str());
  if (v.dim(2) % divisor != 0 || v.dim(3) % divisor != 0)
    throw ShapeError(std::string(who) + ": input extents " + std::to_string(v.dim(2)) + "x" +
                     std::to_string(v.dim(3)) + " must be divisible by " +
                     std::to_string(divisor));
}

}  // namespace

void ModelConfig::validate() const {
  for (int64_t w : widths)
    if (w < 1) throw std::invalid_argument("model widths must be >= 1");
  if (head_width < 1) throw std::invalid_argument("head_width must be >= 1");
  if (complement_divisor < 1) throw std::invalid_argument("complement_divisor must be >= 1");
  if (head_width / complement_divisor < 1 || widths[0] / complement_divisor < 1)
    throw std::invalid_argument("complement_divisor leaves a zero-width contrast map");
  if (use_fgam)
    for (int64_t w : widths)
      if (fgam_reduction < 1 || w % fgam_reduction != 0)
        throw std::invalid_argument("fgam_reduction " + std::to_string(fgam_reduction) +
                                    " does not divide width " + std::to_string(w));
  if (spatial_kernel < 1 || spatial_kernel % 2 == 0)
    throw std::invalid_argument("spatial_kernel must be odd");
  if (encoder_adjust_kernel % 2 == 0 || decoder_adjust_kernel % 2 == 0)
    throw std::invalid_argument("adjust kernels must be odd");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::map<std::string, std::string> kv;
  kv["widths"] = std::to_string(widths[0]) + "," + std::to_string(widths[1]) + "," +
                 std::to_string(widths[2]) + "," + std::to_string(widths[3]);
  kv["head_width"] = std::to_string(head_width);
  kv["use_fgam"] = use_fgam ? "true" : "false";
  kv["use_global_vector"] = use_global_vector ? "true" : "false";
  kv["context_after_fgam"] = context_after_fgam ? "true" : "false";
  kv["fgam_reduction"] = std::to_string(fgam_reduction);
  kv["spatial_kernel"] = std::to_string(spatial_kernel);
  kv["fgam_fusion"] = fgam_fusion == FgamFusion::kAdd ? "add" : "multiply";
  kv["activation"] = std::string(to_string(activation));
  kv["encoder_adjust_kernel"] = std::to_string(encoder_adjust_kernel);
  kv["decoder_adjust_kernel"] = std::to_string(decoder_adjust_kernel);
  kv["complement_divisor"] = std::to_string(complement_divisor);
  return kv;
}

ModelConfig parse_model_config(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (const auto* v = get("widths")) {
    std::stringstream ss(*v);
    std::string item;
    size_t i = 0;
    while (std::getline(ss, item, ',')) {
      if (i >= 4) throw std::invalid_argument("widths: expected exactly 4 values, got '" + *v + "'");
      c.widths[i++] = parse_int("widths", item);
    }
    if (i != 4) throw std::invalid_argument("widths: expected exactly 4 values, got '" + *v + "'");
  }
  if (const auto* v = get("head_width")) c.head_width = parse_int("head_width", *v);
  if (const auto* v = get("use_fgam")) c.use_fgam = parse_bool("use_fgam", *v);
  if (const auto* v = get("use_global_vector"))
    c.use_global_vector = parse_bool("use_global_vector", *v);
  if (const auto* v = get("context_after_fgam"))
    c.context_after_fgam = parse_bool("context_after_fgam", *v);
  if (const auto* v = get("fgam_reduction")) c.fgam_reduction = parse_int("fgam_reduction", *v);
  if (const auto* v = get("spatial_kernel")) c.spatial_kernel = parse_int("spatial_kernel", *v);
  if (const auto* v = get("fgam_fusion")) {
    if (*v == "add") c.fgam_fusion = FgamFusion::kAdd;
    else if (*v == "multiply") c.fgam_fusion = FgamFusion::kMultiply;
    else throw std::invalid_argument("fgam_fusion: expected add or multiply, got '" + *v + "'");
  }
  if (const auto* v = get("activation")) c.activation = parse_activation(*v);
  if (const auto* v = get("encoder_adjust_kernel"))
    c.encoder_adjust_kernel = parse_int("encoder_adjust_kernel", *v);
  if (const auto* v = get("decoder_adjust_kernel"))
    c.decoder_adjust_kernel = parse_int("decoder_adjust_kernel", *v);
  if (const auto* v = get("complement_divisor"))
    c.complement_divisor = parse_int("complement_divisor", *v);
  c.validate();
  return c;
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.widths = {4, 4, 8, 8};
  c.head_width = 4;
  c.fgam_reduction = 2;
  return c;
}

// Tap sets

TapLocation parse_tap_location(const std::string& s) {
  static const std::map<std::string, TapLocation> names{
      {"down1", TapLocation::kDown1}, {"down2", TapLocation::kDown2},
      {"down3", TapLocation::kDown3}, {"down4", TapLocation::kDown4},
      {"up1", TapLocation::kUp1},     {"up2", TapLocation::kUp2},
      {"up3", TapLocation::kUp3},     {"up4", TapLocation::kUp4}};
  auto it = names.find(s);
  if (it == names.end())
    throw std::invalid_argument("unknown tap location '" + s + "' (expected down1..4 or up1..4)");
  return it->second;
}

std::string to_string(TapLocation loc) {
  const auto i = static_cast<int>(loc);
  return i < 4 ? "down" + std::to_string(i + 1) : "up" + std::to_string(i - 3);
}

TapSet TapSet::parse(const std::string& text) {
  TapSet t;
  if (text.empty() || text == "none") return t;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      const TapLocation loc = parse_tap_location(item);
      t.pairs.emplace_back(loc, loc);
    } else {
      t.pairs.emplace_back(parse_tap_location(item.substr(0, colon)),
                           parse_tap_location(item.substr(colon + 1)));
    }
  }
  return t;
}

TapSet TapSet::default_set() { return parse("up2,up3,up4"); }

std::string TapSet::str() const {
  if (pairs.empty()) return "none";
  std::string s;
  for (const auto& [a, b] : pairs) {
    if (!s.empty()) s += ',';
    s += to_string(a);
    if (a != b) s += ":" + to_string(b);
  }
  return s;
}

// Trunk

UNetTrunk::UNetTrunk(ParamStore& store, const ModelConfig& cfg, int64_t in_channels,
                     Resolution base)
    : cfg_(cfg) {
  cfg.validate();
  const auto& w = cfg.widths;
  stem0_ = store.make_conv("stem.conv0", in_channels, w[0], 3, ConvRole::kBackbone, base);
  stem1_ = store.make_conv("stem.conv1", w[0], w[0], 3, ConvRole::kBackbone, base);

  int64_t in = w[0];
  for (size_t i = 0; i < 4; ++i) {
    DownBlockConfig dc;
    dc.in_channels = in;
    dc.out_channels = w[i];
    dc.use_fgam = cfg.use_fgam;
    dc.activation = cfg.activation;
    dc.fgam.reduction = cfg.fgam_reduction;
    dc.fgam.spatial_kernel = cfg.spatial_kernel;
    dc.fgam.fusion = cfg.fgam_fusion;
    dc.fgam.activation = cfg.activation;
    down_[i] = DownBlock(store, "down" + std::to_string(i + 1), dc,
                         base.times(1, int64_t{1} << i));
    in = down_[i].out_channels();
  }

  const Resolution bottom = base.times(1, 16);
  int64_t fuse_in = in;
  if (cfg.use_global_vector) {
    global_dense_ = store.make_conv("bottleneck.global", in, w[3], 1, ConvRole::kBackbone,
                                    Resolution::global());
    fuse_in += w[3];
  }
  bottleneck0_ = store.make_conv("bottleneck.conv0", fuse_in, w[3], 3, ConvRole::kBackbone, bottom);
  bottleneck1_ = store.make_conv("bottleneck.conv1", w[3], w[3], 3, ConvRole::kBackbone, bottom);

  const std::array<int64_t, 4> up_widths{w[2], w[1], w[0], w[0]};
  int64_t dec = w[3];
  for (size_t k = 0; k < 4; ++k) {
    CcbConfig cc;
    cc.encoder_channels = down_[3 - k].out_channels();
    cc.decoder_channels = dec;
    if (k < 3) {
      const DownBlock& ctx = down_[2 - k];
      cc.context_channels =
          cfg.context_after_fgam ? ctx.out_channels() : w[2 - k];
    } else {
      cc.context_channels = w[0];
    }
    cc.out_channels = up_widths[k];
    cc.complement_channels = up_widths[k] / cfg.complement_divisor;
    cc.encoder_adjust_kernel = cfg.encoder_adjust_kernel;
    cc.decoder_adjust_kernel = cfg.decoder_adjust_kernel;
    up_[k] = UpStage(store, "up" + std::to_string(k + 1), cc, cfg.activation,
                     bottom.times(int64_t{1} << k, 1));
    dec = up_widths[k];
  }
}

UNetTrunk::Features UNetTrunk::forward(const Var& x) const {
  Features f;
  const Activation act = cfg_.activation;
  f.stem = activate(stem1_(activate(stem0_(x), act)), act);
  Var h = f.stem;
  for (size_t i = 0; i < 4; ++i) {
    auto out = down_[i].forward(h);
    f.down_pre[i] = out.pre_attention;
    f.down[i] = out.out;
    h = out.out;
  }

  Var fused = h;
  if (cfg_.use_global_vector) {
    const Var g = activate(global_dense_(global_avg_pool(h)), act);
    const Shape s{h.dim(0), g.dim(1), h.dim(2), h.dim(3)};
    fused = concat_channels({h, broadcast_to(g, s)});
  }
  f.bottleneck = activate(bottleneck1_(activate(bottleneck0_(fused), act)), act);

  Var dec = f.bottleneck;
  for (size_t k = 0; k < 4; ++k) {
    const Var& skip_same = f.down[3 - k];
    Var context;
    if (k < 3) context = cfg_.context_after_fgam ? f.down[2 - k] : f.down_pre[2 - k];
    else context = f.stem;
    dec = up_[k].forward(dec, skip_same, context);
    f.up[k] = dec;
  }
  return f;
}

Var select_tap(const UNetTrunk::Features& f, TapLocation loc) {
  const auto i = static_cast<size_t>(loc);
  return i < 4 ? f.down[i] : f.up[i - 4];
}

// Student

LwIspModel::LwIspModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg), store_(seed), trunk_(store_, cfg, 4, Resolution::scale(1, 1)) {
  CcbConfig cc;
  cc.encoder_channels = cfg.widths[0];
  cc.decoder_channels = trunk_.up_channels(3);
  cc.context_channels = 1;
  cc.out_channels = cfg.head_width;
  cc.complement_channels = cfg.head_width / cfg.complement_divisor;
  cc.encoder_adjust_kernel = cfg.encoder_adjust_kernel;
  cc.decoder_adjust_kernel = cfg.decoder_adjust_kernel;
  head_ccb_ = Ccb(store_, "head.ccb", cc, Resolution::scale(1, 1));
  const Resolution full = Resolution::scale(2, 1);
  head_fuse_ = store_.make_conv("head.fuse", head_ccb_.out_channels(), cfg.head_width, 3,
                                ConvRole::kBackbone, full);
  head_refine_ = store_.make_conv("head.refine", cfg.head_width, cfg.head_width, 3,
                                  ConvRole::kBackbone, full);
  head_out_ = store_.make_conv("head.out", cfg.head_width, 3, 3, ConvRole::kBackbone, full);
}

ForwardResult LwIspModel::forward(const Var& x, const TapSet& taps) const {
  require_input(x, 4, 16, "student forward");
  const auto f = trunk_.forward(x);
  // The packed channels are the 2x2 cell positions, so shuffling them back
  // yields the original single-channel mosaic at full resolution.
  const Var mosaic = pixel_shuffle(x, 2);
  const Var merged = head_ccb_.forward(f.stem, f.up[3], mosaic);
  const Activation act = cfg_.activation;
  const Var h = activate(head_refine_(activate(head_fuse_(merged), act)), act);
  ForwardResult r;
  r.rgb = sigmoid(head_out_(h));
  for (const auto& p : taps.pairs) r.taps.push_back(select_tap(f, p.first));
  return r;
}

// Teacher

TeacherModel::TeacherModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg), store_(seed), trunk_(store_, cfg, 12, Resolution::scale(1, 2)) {
  head_out_ = store_.make_conv("head.out", trunk_.up_channels(3), 12, 3, ConvRole::kBackbone,
                               Resolution::scale(1, 2));
}

ForwardResult TeacherModel::forward(const Var& j, const TapSet& taps) const {
  require_input(j, 3, 32, "teacher forward");
  const auto f = trunk_.forward(pixel_unshuffle(j, 2));
  ForwardResult r;
  r.rgb = sigmoid(pixel_shuffle(head_out_(f.up[3]), 2));
  for (const auto& p : taps.pairs) r.taps.push_back(select_tap(f, p.second));
  return r;
}

// Accounting

ModelStats count_params(const ParamStore& store) {
  ModelStats s;
  s.params = store.num_params();
  for (const Conv2d& c : store.convs()) {
    ++s.total_convs;
    if (c.role == ConvRole::kBackbone) ++s.backbone_convs;
  }
  return s;
}

int64_t estimate_flops(const ParamStore& store, int64_t in_h, int64_t in_w) {
  int64_t macs = 0;
  for (const Conv2d& c : store.convs()) macs += c.macs(in_h, in_w);
  return 2 * macs;
}

}  // namespace lwisp
