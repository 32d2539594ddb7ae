// lwisp/train.hpp

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

// Teacher and student training, evaluation and inference.

#ifndef LWISP_TRAIN_HPP_
#define LWISP_TRAIN_HPP_

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lwisp/data.hpp"
#include "lwisp/losses.hpp"
#include "lwisp/model.hpp"

namespace lwisp {

struct LrSchedule {
  enum class Kind { kConstant, kStep };
  Kind kind = Kind::kConstant;
  Real factor = 1.0;
  int64_t every = 1;

  // "constant" or "step:<factor>:<every_n_epochs>"
  static LrSchedule parse(const std::string& s);
  std::string str() const;
  Real at(Real base_lr, int64_t epoch) const;
};

struct TrainConfig {
  Real lr = 8e-5;
  LrSchedule schedule;
  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_eps = 1e-8;
  int64_t batch = 4;
  int64_t epochs = 10;
  uint64_t seed = 0;
  LossWeights weights;
  std::string taps = "up2,up3,up4";
  int64_t ckpt_every = 1;   // epochs between checkpoint writes
  int64_t max_steps = 0;    // 0: no limit
  uint32_t scalar_bytes = 8;
  ModelConfig model;

  // Paths; not part of the hyper-parameter block stored in checkpoints.
  std::string data;
  std::string train_split = "train";
  std::string val_split;
  std::string ckpt;
  std::string out;
  std::string teacher;
  std::string resume;
  std::optional<Real> raw_black_level;
  std::optional<Real> raw_white_level;

  void validate() const;
  // Hyper-parameters only (model keys included, paths excluded).
  std::map<std::string, std::string> hyper_params() const;
  // Applies key=value pairs; unknown keys are rejected.
  void apply(const std::map<std::string, std::string>& kv);
};

std::map<std::string, std::string> read_key_values(const std::string& path);

/// Adam with bias correction. Moments are stored per parameter.
class Adam {
 public:
  Adam(std::vector<NamedParam> params, Real beta1, Real beta2, Real eps);
  void step(Real lr);
  int64_t steps() const { return t_; }
  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> m_, v_;
  Real beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

struct StepLosses {
  int64_t step = 0;
  int64_t epoch = 0;
  Real total = 0, reconstruction = 0, structural = 0, distillation = 0;
};

struct EpochRow {
  int64_t epoch = 0;
  int64_t steps = 0;
  Real lr = 0;
  Real total = 0, reconstruction = 0, structural = 0, distillation = 0;
  std::optional<Real> val_psnr, val_ms_ssim;
  Real wall_seconds = 0;
};

struct RunReport {
  std::string kind;
  int64_t params = 0;
  std::map<std::string, std::string> config;
  std::vector<EpochRow> epochs;
  std::vector<StepLosses> steps;

  void write_csv(const std::string& path) const;
  void write_steps_csv(const std::string& path) const;
  void write_summary(const std::string& path) const;
  std::string summary() const;
};

struct TrainHooks {
  std::ostream* log = nullptr;
  // Called after each optimizer step; returning false stops training.
  std::function<bool(const StepLosses&)> after_step;
};

/// Owns a network, its optimizer state and the epoch/step counters.
class Trainer {
 public:
  enum class Kind { kTeacher, kStudent };

  static Trainer teacher(const TrainConfig& cfg);
  // `teacher` may be null, in which case distillation is disabled.
  static Trainer student(const TrainConfig& cfg, std::shared_ptr<const TeacherModel> teacher);
  // Restores weights, optimizer moments and counters. Hyper-parameters come
  // from the checkpoint; only the epoch target, step limit and paths are
  // taken from `cfg`.
  static Trainer resume(const Checkpoint& ckpt, const TrainConfig& cfg,
                        std::shared_ptr<const TeacherModel> teacher);

  // Trains from the current epoch up to cfg.epochs.
  RunReport run(const std::vector<RawSample>& train, const std::vector<RawSample>& val,
                const TrainHooks& hooks = {});

  // Losses of the current weights on one batch, without updating anything.
  StepLosses evaluate_batch(const Batch& batch) const;

  Checkpoint checkpoint() const;
  Kind kind() const { return kind_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t epoch() const { return epoch_; }
  int64_t step() const { return step_; }
  LwIspModel& student_model() { return *student_; }
  TeacherModel& teacher_model() { return *own_teacher_; }
  ParamStore& params();

 private:
  Trainer(Kind kind, const TrainConfig& cfg);
  StepLosses forward_losses(const Batch& batch, Var* total) const;
  void check_taps(const RawSample& sample) const;

  Kind kind_;
  TrainConfig cfg_;
  TapSet taps_;
  std::unique_ptr<LwIspModel> student_;
  std::unique_ptr<TeacherModel> own_teacher_;
  std::shared_ptr<const TeacherModel> distill_from_;
  std::unique_ptr<Adam> adam_;
  int64_t epoch_ = 0;
  int64_t step_ = 0;
};

std::unique_ptr<LwIspModel> load_student(const Checkpoint& ckpt);
std::unique_ptr<TeacherModel> load_teacher(const Checkpoint& ckpt);

struct EvalRow {
  std::string id;
  Real psnr = 0;
  Real ms_ssim = 0;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  Real mean_psnr = 0;
  Real mean_ms_ssim = 0;
};

EvalResult evaluate(const LwIspModel& model, const std::vector<RawSample>& samples);
EvalResult evaluate_teacher(const TeacherModel& model, const std::vector<RawSample>& samples);
// id,psnr,ms_ssim rows followed by a "mean" row; infinite PSNR is written "inf".
void write_eval_csv(const std::string& path, const EvalResult& result);
std::string format_real(Real v);

// [1,2H,2W] mosaic -> [3,2H,2W] RGB.
Tensor infer_image(const LwIspModel& model, const Tensor& mosaic);

struct StatsRow {
  std::string label;
  ModelStats counts;
  int64_t flops_224 = 0;
  int64_t flops_960 = 0;
};
// Counts for a student built from `cfg`; FLOPs at 224x224 and 960x960 RGB output.
StatsRow model_stats(const ModelConfig& cfg, const std::string& label);

}  // namespace lwisp

#endif  // LWISP_TRAIN_HPP_
