// lwisp/model.hpp

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

// Student (RAW -> RGB) and teacher (RGB -> RGB) networks.
//
// Topology, for a packed input of extent H:
//
//   stem      2 convs at H                                  -> E0
//   down1..4  stride-2 conv + conv (+ FGAM) at H/2 .. H/16   -> D1..D4
//   bottleneck  GAP(D4) -> dense -> broadcast, concat with D4, 2 convs -> B
//   up1..4    CCB(skip_same = D4..D1, context = D3..D1,E0) + fuse + refine
//             -> U1 at H/8 .. U4 at H
//   head      CCB(E0, U4, context = Bayer mosaic at 2H) + fuse + refine
//             + 3-channel conv + sigmoid                    -> RGB at 2H
//
// The teacher pixel-unshuffles its RGB input (2H -> 12 channels at H), runs
// the same stem/down/bottleneck/up trunk, and replaces the CCB head with a
// 12-channel conv followed by pixel shuffle, so its tap tensors have the same
// shapes as the student's.
//
// Depth counting rule: a conv counts toward the backbone depth unless it is
// part of an FGAM (attention convs) or a CCB (sub-pixel branch convs and the
// dilated contrast pair). The default student has exactly 24 backbone convs:
// stem 2, down blocks 8, bottleneck 3 (dense + 2), up stages 8, head 3.

#ifndef LWISP_MODEL_HPP_
#define LWISP_MODEL_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lwisp/blocks.hpp"

namespace lwisp {

struct ModelConfig {
  std::array<int64_t, 4> widths{16, 32, 64, 128};
  int64_t head_width = 24;
  bool use_fgam = true;
  bool use_global_vector = true;
  // Contextual complement reads the encoder feature after FGAM (true) or
  // before it (false).
  bool context_after_fgam = true;
  int64_t fgam_reduction = 4;
  int64_t spatial_kernel = 7;
  FgamFusion fgam_fusion = FgamFusion::kAdd;
  Activation activation = Activation::kLeakyRelu;
  int64_t encoder_adjust_kernel = 1;
  int64_t decoder_adjust_kernel = 3;
  // Contextual complement width = block output width / complement_divisor.
  int64_t complement_divisor = 2;

  void validate() const;
  // Every field as key=value pairs; parse_model_config is the inverse.
  std::map<std::string, std::string> to_map() const;
};

ModelConfig parse_model_config(const std::map<std::string, std::string>& kv);

// Small configuration used by gradient checks and fast tests.
ModelConfig tiny_model_config();

enum class TapLocation { kDown1, kDown2, kDown3, kDown4, kUp1, kUp2, kUp3, kUp4 };

TapLocation parse_tap_location(const std::string& s);
std::string to_string(TapLocation loc);

/// Ordered (student location, teacher location) pairs for distillation.
struct TapSet {
  std::vector<std::pair<TapLocation, TapLocation>> pairs;

  // "up2,up3,up4" pairs each location with itself; "up2:down4" pairs explicitly.
  static TapSet parse(const std::string& text);
  static TapSet default_set();
  std::string str() const;
  bool empty() const { return pairs.empty(); }
};

struct ForwardResult {
  Var rgb;
  std::vector<Var> taps;
};

/// Shared encoder/decoder: stem, four down blocks, bottleneck, four up stages.
class UNetTrunk {
 public:
  struct Features {
    Var stem;
    std::array<Var, 4> down;       // post-FGAM
    std::array<Var, 4> down_pre;   // pre-FGAM
    Var bottleneck;
    std::array<Var, 4> up;
  };

  UNetTrunk(ParamStore& store, const ModelConfig& cfg, int64_t in_channels, Resolution base);

  Features forward(const Var& x) const;
  int64_t stem_channels() const { return cfg_.widths[0]; }
  int64_t up_channels(int i) const { return up_[static_cast<size_t>(i)].out_channels(); }
  const DownBlock& down(int i) const { return down_[static_cast<size_t>(i)]; }
  const UpStage& up(int i) const { return up_[static_cast<size_t>(i)]; }
  const Conv2d& global_dense() const { return global_dense_; }

 private:
  ModelConfig cfg_;
  Conv2d stem0_, stem1_;
  std::array<DownBlock, 4> down_;
  Conv2d global_dense_, bottleneck0_, bottleneck1_;
  std::array<UpStage, 4> up_;
};

Var select_tap(const UNetTrunk::Features& f, TapLocation loc);

/// The RAW -> RGB student network.
class LwIspModel {
 public:
  explicit LwIspModel(const ModelConfig& cfg, uint64_t seed = 0);

  // x: packed Bayer [N,4,H,W], H and W divisible by 16. Returns RGB
  // [N,3,2H,2W] in [0,1] plus tap features in TapSet order (student side).
  ForwardResult forward(const Var& x, const TapSet& taps = {}) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const UNetTrunk& trunk() const { return trunk_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  UNetTrunk trunk_;
  Ccb head_ccb_;
  Conv2d head_fuse_, head_refine_, head_out_;
};

/// The RGB -> RGB teacher. Same trunk, no CCB upsampling head.
class TeacherModel {
 public:
  explicit TeacherModel(const ModelConfig& cfg, uint64_t seed = 0);

  // j: RGB [N,3,H,W], H and W divisible by 32. Output has the input's shape.
  ForwardResult forward(const Var& j, const TapSet& taps = {}) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  UNetTrunk trunk_;
  Conv2d head_out_;
};

// Accounting. FLOPs are 2 x conv multiply-accumulates; element-wise work
// (activations, attention fusion, pooling, pixel shuffle) is not counted.
struct ModelStats {
  int64_t params = 0;
  int64_t backbone_convs = 0;
  int64_t total_convs = 0;
};

ModelStats count_params(const ParamStore& store);
// Input extents are those of the network's own input tensor.
int64_t estimate_flops(const ParamStore& store, int64_t in_h, int64_t in_w);

// Checkpoint file, little-endian:
//   magic "LWISPCKP", u32 version, u32 scalar bytes (4 or 8),
//   u32 config length, config text (key=value lines),
//   u32 tensor count, then per tensor: u32 name length, name, u32 rank,
//   u32 extents[rank], raw scalars.
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> tensors;
  uint32_t scalar_bytes = 8;

  const Tensor* find(const std::string& name) const;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies named tensors from a checkpoint into `store`; every parameter must be
// present with a matching shape.
void load_params(ParamStore& store, const Checkpoint& ckpt, const std::string& prefix = "");
void append_params(Checkpoint& ckpt, const ParamStore& store, const std::string& prefix = "");

}  // namespace lwisp

#endif  // LWISP_MODEL_HPP_
