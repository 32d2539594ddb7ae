// lwisp/blocks.hpp

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

// Composite layers of the U-Net: fine-grained attention (FGAM), the
// contextual complement upsampling block (CCB), and the down/up stages built
// from them.

#ifndef LWISP_BLOCKS_HPP_
#define LWISP_BLOCKS_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lwisp/ops.hpp"

namespace lwisp {

// Which part of the network a convolution belongs to. Only kBackbone convs
// count toward the reported network depth.
enum class ConvRole { kBackbone, kAttention, kUpsampling };

// Spatial resolution of a conv's output relative to the network input:
// out = in * num / den, or a fixed 1x1 map for pooled descriptors.
struct Resolution {
  int64_t num = 1;
  int64_t den = 1;
  bool pooled = false;

  static Resolution scale(int64_t num, int64_t den) { return {num, den, false}; }
  static Resolution global() { return {1, 1, true}; }
  Resolution times(int64_t n, int64_t d) const { return {num * n, den * d, pooled}; }
};

struct Conv2d {
  std::string name;
  Var weight;
  Var bias;
  Conv2dOptions opts;
  ConvRole role = ConvRole::kBackbone;
  Resolution resolution;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel = 1;

  Var operator()(const Var& x) const { return conv2d(x, weight, bias, opts); }
  int64_t num_params() const { return weight.value().numel() + bias.value().numel(); }
  // Multiply-accumulates for a single sample at the given input extents.
  int64_t macs(int64_t in_h, int64_t in_w) const;
};

struct NamedParam {
  std::string name;
  Var var;
};

/// Owns every trainable tensor of a network, in registration order.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : rng_(seed) {}

  // Registers a conv with Kaiming fan-in normal weights and zero bias.
  // Padding defaults to "same" for stride 1.
  Conv2d make_conv(const std::string& name, int64_t in, int64_t out, int64_t kernel,
                   ConvRole role, Resolution res, int64_t stride = 1, int64_t dilation = 1);

  const std::vector<NamedParam>& params() const { return params_; }
  const std::vector<Conv2d>& convs() const { return convs_; }
  std::vector<Var> vars() const;
  Var find(const std::string& name) const;
  int64_t num_params() const;
  void zero_grad();

 private:
  std::mt19937_64 rng_;
  std::vector<NamedParam> params_;
  std::vector<Conv2d> convs_;
};

enum class FgamFusion { kAdd, kMultiply };

struct FgamConfig {
  int64_t channels = 16;
  int64_t reduction = 4;
  int64_t spatial_kernel = 7;
  FgamFusion fusion = FgamFusion::kAdd;
  Activation activation = Activation::kLeakyRelu;
};

/// Parallel channel and spatial attention; each map is fused with the input
/// separately and the two results are concatenated, giving 2C channels.
class Fgam {
 public:
  Fgam() = default;
  Fgam(ParamStore& store, const std::string& prefix, const FgamConfig& cfg, Resolution res);

  Var forward(const Var& x) const;
  Var channel_attention(const Var& x) const;  // [N,C,1,1]
  Var spatial_attention(const Var& x) const;  // [N,1,H,W]
  int64_t out_channels() const { return 2 * cfg_.channels; }
  const FgamConfig& config() const { return cfg_; }

  Conv2d squeeze, excite, spatial;

 private:
  FgamConfig cfg_;
};

/// Conv (channel adjust to C*4) -> pixel shuffle x2 -> 3x3 conv (fine-tune).
struct SubPixelBranch {
  Conv2d adjust;
  Conv2d refine;
  Var operator()(const Var& x) const { return refine(pixel_shuffle(adjust(x), 2)); }
};

struct CcbConfig {
  int64_t encoder_channels = 16;  // same-resolution feature from the encoder
  int64_t decoder_channels = 16;  // feature being upsampled
  int64_t context_channels = 16;  // encoder feature at twice the resolution
  int64_t out_channels = 16;
  int64_t complement_channels = 8;
  int64_t encoder_adjust_kernel = 1;
  int64_t decoder_adjust_kernel = 3;
};

/// Contextual complement upsampling block.
class Ccb {
 public:
  Ccb() = default;
  Ccb(ParamStore& store, const std::string& prefix, const CcbConfig& cfg, Resolution in_res);

  // Sum of the two sub-pixel branches, at twice the input resolution.
  Var core(const Var& encoder_feat, const Var& decoder_feat) const;
  // sigmoid(f_d1(ctx) - f_d2(ctx)): 1x1 conv minus 3x3 dilation-2 conv.
  Var contrast_map(const Var& context) const;
  // Concatenates the contrast map of `context` after `core_out`.
  Var complement(const Var& context, const Var& core_out) const;
  Var forward(const Var& encoder_feat, const Var& decoder_feat, const Var& context) const;

  int64_t out_channels() const { return cfg_.out_channels + cfg_.complement_channels; }
  const CcbConfig& config() const { return cfg_; }

  SubPixelBranch encoder_branch, decoder_branch;
  Conv2d local_context;  // f_d1
  Conv2d wide_context;   // f_d2

 private:
  CcbConfig cfg_;
};

struct DownBlockConfig {
  int64_t in_channels = 16;
  int64_t out_channels = 16;
  bool use_fgam = true;
  FgamConfig fgam;
  Activation activation = Activation::kLeakyRelu;
};

/// Stride-2 conv, 3x3 conv, then optional FGAM. Halves the spatial extent.
class DownBlock {
 public:
  struct Output {
    Var pre_attention;
    Var out;
  };

  DownBlock() = default;
  DownBlock(ParamStore& store, const std::string& prefix, const DownBlockConfig& cfg,
            Resolution in_res);

  Output forward(const Var& x) const;
  int64_t out_channels() const;
  bool has_fgam() const { return cfg_.use_fgam; }
  const Fgam& fgam() const { return fgam_; }

  Conv2d reduce, conv;

 private:
  DownBlockConfig cfg_;
  Fgam fgam_;
};

/// CCB upsampling followed by a fusion conv and a refinement conv.
class UpStage {
 public:
  UpStage() = default;
  UpStage(ParamStore& store, const std::string& prefix, const CcbConfig& cfg,
          Activation activation, Resolution in_res);

  // decoder: feature to upsample; skip_same: encoder feature at the same
  // resolution; skip_double: encoder feature at twice the resolution.
  Var forward(const Var& decoder, const Var& skip_same, const Var& skip_double) const;
  int64_t out_channels() const { return ccb_.config().out_channels; }
  const Ccb& ccb() const { return ccb_; }

  Conv2d fuse, refine;

 private:
  Ccb ccb_;
  Activation activation_ = Activation::kLeakyRelu;
};

}  // namespace lwisp

#endif  // LWISP_BLOCKS_HPP_
