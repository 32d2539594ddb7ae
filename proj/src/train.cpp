// lwisp/train.cpp

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

#include "lwisp/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lwisp {

namespace {

Real parse_real(const std::string& key, const std::string& v) {
  Real out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

int64_t parse_count(const std::string& key, const std::string& v) {
  int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

const std::set<std::string>& model_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k;
    for (const auto& [key, value] : ModelConfig{}.to_map()) k.insert(key);
    return k;
  }();
  return keys;
}

// Checkpoint bookkeeping entries that are not hyper-parameters.
const std::set<std::string> kStateKeys{"kind", "epoch", "step", "adam_steps"};

std::map<std::string, std::string> hyper_subset(const std::map<std::string, std::string>& kv) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : kv)
    if (!kStateKeys.count(k)) out[k] = v;
  return out;
}

ModelConfig model_from_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ckpt.config)
    if (model_keys().count(k)) kv[k] = v;
  return parse_model_config(kv);
}

void require_kind(const Checkpoint& ckpt, const std::string& want) {
  auto it = ckpt.config.find("kind");
  if (it == ckpt.config.end() || it->second != want)
    throw std::runtime_error("checkpoint holds a " +
                             (it == ckpt.config.end() ? std::string("unknown") : it->second) +
                             " network, expected " + want);
}

Real mean_of(Real sum, int64_t n) { return n > 0 ? sum / static_cast<Real>(n) : 0.0; }

}  // namespace

std::string format_real(Real v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Schedule

LrSchedule LrSchedule::parse(const std::string& s) {
  LrSchedule out;
  if (s == "constant") return out;
  if (s.rfind("step:", 0) == 0) {
    const auto second = s.find(':', 5);
    if (second == std::string::npos)
      throw std::invalid_argument("lr schedule '" + s + "': expected step:<factor>:<every>");
    out.kind = Kind::kStep;
    out.factor = parse_real("schedule", s.substr(5, second - 5));
    out.every = parse_count("schedule", s.substr(second + 1));
    if (!(out.factor > 0) || out.every < 1)
      throw std::invalid_argument("lr schedule '" + s + "': factor must be > 0, every >= 1");
    return out;
  }
  throw std::invalid_argument("unknown lr schedule '" + s + "'");
}

std::string LrSchedule::str() const {
  if (kind == Kind::kConstant) return "constant";
  return "step:" + format_real(factor) + ":" + std::to_string(every);
}

Real LrSchedule::at(Real base_lr, int64_t epoch) const {
  if (kind == Kind::kConstant) return base_lr;
  return base_lr * std::pow(factor, static_cast<Real>(epoch / every));
}

// Config

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (ckpt_every < 1) throw std::invalid_argument("ckpt_every must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1) ||
      !(adam_eps > 0))
    throw std::invalid_argument("Adam betas must lie in [0,1) and eps must be > 0");
  if (scalar_bytes != 4 && scalar_bytes != 8)
    throw std::invalid_argument("scalar_bytes must be 4 or 8");
  weights.validate();
  model.validate();
  TapSet::parse(taps);
}

std::map<std::string, std::string> TrainConfig::hyper_params() const {
  std::map<std::string, std::string> kv = model.to_map();
  kv["lr"] = format_real(lr);
  kv["schedule"] = schedule.str();
  kv["adam_beta1"] = format_real(adam_beta1);
  kv["adam_beta2"] = format_real(adam_beta2);
  kv["adam_eps"] = format_real(adam_eps);
  kv["batch"] = std::to_string(batch);
  kv["epochs"] = std::to_string(epochs);
  kv["seed"] = std::to_string(seed);
  kv["alpha"] = format_real(weights.alpha);
  kv["beta"] = format_real(weights.beta);
  kv["gamma"] = format_real(weights.gamma);
  kv["taps"] = TapSet::parse(taps).str();
  kv["ckpt_every"] = std::to_string(ckpt_every);
  kv["max_steps"] = std::to_string(max_steps);
  kv["scalar_bytes"] = std::to_string(scalar_bytes);
  kv["init"] = "kaiming_fan_in_normal,zero_bias";
  return kv;
}

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  std::map<std::string, std::string> model_kv = model.to_map();
  for (const auto& [k, v] : kv) {
    if (model_keys().count(k)) model_kv[k] = v;
    else if (k == "lr") lr = parse_real(k, v);
    else if (k == "schedule") schedule = LrSchedule::parse(v);
    else if (k == "adam_beta1") adam_beta1 = parse_real(k, v);
    else if (k == "adam_beta2") adam_beta2 = parse_real(k, v);
    else if (k == "adam_eps") adam_eps = parse_real(k, v);
    else if (k == "batch") batch = parse_count(k, v);
    else if (k == "epochs") epochs = parse_count(k, v);
    else if (k == "seed") seed = static_cast<uint64_t>(parse_count(k, v));
    else if (k == "alpha") weights.alpha = parse_real(k, v);
    else if (k == "beta") weights.beta = parse_real(k, v);
    else if (k == "gamma") weights.gamma = parse_real(k, v);
    else if (k == "taps") taps = v;
    else if (k == "ckpt_every") ckpt_every = parse_count(k, v);
    else if (k == "max_steps") max_steps = parse_count(k, v);
    else if (k == "scalar_bytes") scalar_bytes = static_cast<uint32_t>(parse_count(k, v));
    else if (k == "init") {
      if (v != "kaiming_fan_in_normal,zero_bias")
        throw std::invalid_argument("unsupported init scheme '" + v + "'");
    }
    else if (k == "data") data = v;
    else if (k == "train_split") train_split = v;
    else if (k == "val_split") val_split = v;
    else if (k == "ckpt") ckpt = v;
    else if (k == "out") out = v;
    else if (k == "teacher") teacher = v;
    else if (k == "resume") resume = v;
    else if (k == "raw_black_level") raw_black_level = parse_real(k, v);
    else if (k == "raw_white_level") raw_white_level = parse_real(k, v);
    else throw std::invalid_argument("unknown config key '" + k + "'");
  }
  model = parse_model_config(model_kv);
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Adam

Adam::Adam(std::vector<NamedParam> params, Real beta1, Real beta2, Real eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step(Real lr) {
  ++t_;
  const Real c1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
  const Real c2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Var v = params_[k].var;
    if (!v.has_grad()) continue;
    const Tensor& g = v.mutable_grad();
    Tensor& w = v.mutable_value();
    Real* m = m_[k].ptr();
    Real* s = v_[k].ptr();
    for (int64_t i = 0; i < w.numel(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      s[i] = beta2_ * s[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(s[i] / c2) + eps_);
    }
  }
}

void Adam::save(Checkpoint& ckpt) const {
  ckpt.config["adam_steps"] = std::to_string(t_);
  for (size_t k = 0; k < params_.size(); ++k) {
    ckpt.tensors.emplace_back("adam.m/" + params_[k].name, m_[k]);
    ckpt.tensors.emplace_back("adam.v/" + params_[k].name, v_[k]);
  }
}

void Adam::load(const Checkpoint& ckpt) {
  auto it = ckpt.config.find("adam_steps");
  if (it == ckpt.config.end()) throw std::runtime_error("checkpoint has no optimizer state");
  t_ = parse_count("adam_steps", it->second);
  for (size_t k = 0; k < params_.size(); ++k) {
    for (auto [prefix, dst] : {std::pair{"adam.m/", &m_[k]}, std::pair{"adam.v/", &v_[k]}}) {
      const Tensor* t = ckpt.find(prefix + params_[k].name);
      if (t == nullptr || t->shape() != dst->shape())
        throw std::runtime_error("checkpoint optimizer state for '" + params_[k].name +
                                 "' is missing or has the wrong shape");
      *dst = *t;
    }
  }
}

// Report

void RunReport::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "epoch,steps,lr,loss_total,loss_reconstruction,loss_structural,loss_distillation,"
        "val_psnr,val_ms_ssim,wall_seconds\n";
  for (const auto& r : epochs) {
    os << r.epoch << ',' << r.steps << ',' << format_real(r.lr) << ',' << format_real(r.total)
       << ',' << format_real(r.reconstruction) << ',' << format_real(r.structural) << ','
       << format_real(r.distillation) << ',' << (r.val_psnr ? format_real(*r.val_psnr) : "")
       << ',' << (r.val_ms_ssim ? format_real(*r.val_ms_ssim) : "") << ','
       << format_real(r.wall_seconds) << '\n';
  }
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

void RunReport::write_steps_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "step,epoch,loss_total,loss_reconstruction,loss_structural,loss_distillation\n";
  for (const auto& s : steps)
    os << s.step << ',' << s.epoch << ',' << format_real(s.total) << ','
       << format_real(s.reconstruction) << ',' << format_real(s.structural) << ','
       << format_real(s.distillation) << '\n';
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

std::string RunReport::summary() const {
  std::ostringstream os;
  os << kind << " training run\n";
  os << "  parameters: " << params << "\n";
  os << "  epochs run: " << epochs.size() << ", optimizer steps: " << steps.size() << "\n";
  if (!epochs.empty()) {
    const EpochRow& first = epochs.front();
    const EpochRow& last = epochs.back();
    os << std::setprecision(6);
    os << "  loss: " << first.total << " (epoch " << first.epoch << ") -> " << last.total
       << " (epoch " << last.epoch << ")\n";
    if (last.val_psnr)
      os << "  validation: PSNR " << format_real(*last.val_psnr) << " dB, MS-SSIM "
         << *last.val_ms_ssim << "\n";
    Real wall = 0;
    for (const auto& r : epochs) wall += r.wall_seconds;
    os << "  wall time: " << wall << " s\n";
  }
  os << "  config:\n";
  for (const auto& [k, v] : config) os << "    " << k << " = " << v << "\n";
  return os.str();
}

void RunReport::write_summary(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << summary();
}

// Trainer

Trainer::Trainer(Kind kind, const TrainConfig& cfg) : kind_(kind), cfg_(cfg) {
  cfg_.validate();
  taps_ = TapSet::parse(cfg_.taps);
  if (kind == Kind::kTeacher) own_teacher_ = std::make_unique<TeacherModel>(cfg_.model, cfg_.seed);
  else student_ = std::make_unique<LwIspModel>(cfg_.model, cfg_.seed);
  adam_ = std::make_unique<Adam>(params().params(), cfg_.adam_beta1, cfg_.adam_beta2,
                                 cfg_.adam_eps);
}

ParamStore& Trainer::params() {
  return kind_ == Kind::kTeacher ? own_teacher_->params() : student_->params();
}

Trainer Trainer::teacher(const TrainConfig& cfg) { return Trainer(Kind::kTeacher, cfg); }

Trainer Trainer::student(const TrainConfig& cfg, std::shared_ptr<const TeacherModel> teacher) {
  TrainConfig c = cfg;
  if (!teacher) c.weights.beta = 0;
  if (c.weights.beta != 0 && TapSet::parse(c.taps).empty())
    throw std::invalid_argument("distillation needs at least one tap pair");
  Trainer t(Kind::kStudent, c);
  t.distill_from_ = std::move(teacher);
  return t;
}

Trainer Trainer::resume(const Checkpoint& ckpt, const TrainConfig& cfg,
                        std::shared_ptr<const TeacherModel> teacher) {
  auto it = ckpt.config.find("kind");
  if (it == ckpt.config.end()) throw std::runtime_error("checkpoint does not record its kind");
  const Kind kind = it->second == "teacher" ? Kind::kTeacher : Kind::kStudent;
  TrainConfig c;
  c.apply(hyper_subset(ckpt.config));
  c.epochs = cfg.epochs;
  c.max_steps = cfg.max_steps;
  c.data = cfg.data;
  c.train_split = cfg.train_split;
  c.val_split = cfg.val_split;
  c.ckpt = cfg.ckpt;
  c.out = cfg.out;
  c.teacher = cfg.teacher;
  c.resume = cfg.resume;
  c.raw_black_level = cfg.raw_black_level;
  c.raw_white_level = cfg.raw_white_level;
  if (kind == Kind::kStudent && c.weights.beta != 0 && !teacher)
    throw std::invalid_argument("resuming a distilled student run needs the teacher checkpoint");

  Trainer t(kind, c);
  if (kind == Kind::kStudent) t.distill_from_ = std::move(teacher);
  load_params(t.params(), ckpt);
  t.adam_->load(ckpt);
  t.epoch_ = parse_count("epoch", ckpt.config.at("epoch"));
  t.step_ = parse_count("step", ckpt.config.at("step"));
  return t;
}

StepLosses Trainer::forward_losses(const Batch& batch, Var* total) const {
  const Var target = Var::constant(batch.target);
  StepLosses s;
  Var loss;
  if (kind_ == Kind::kTeacher) {
    const Var g = own_teacher_->forward(target).rgb;
    const Var l2 = mean(square(g - target));
    s.reconstruction = l2.value()[0];
    loss = l2;
    if (cfg_.weights.gamma != 0) {
      const Var ls = structural_loss(g, target);
      s.structural = ls.value()[0];
      loss = l2 + cfg_.weights.gamma * ls;
    }
  } else {
    const bool distill = cfg_.weights.beta != 0;
    const ForwardResult fr =
        student_->forward(Var::constant(batch.input), distill ? taps_ : TapSet{});
    std::vector<Var> teacher_taps;
    if (distill) teacher_taps = distill_from_->forward(target, taps_).taps;
    const LossTerms t = overall_loss(fr.rgb, target, fr.taps, teacher_taps, cfg_.weights);
    s.reconstruction = LossTerms::value_of(t.reconstruction);
    s.structural = LossTerms::value_of(t.structural);
    s.distillation = LossTerms::value_of(t.distillation);
    loss = t.total;
  }
  s.total = loss.value()[0];
  if (total) *total = loss;
  return s;
}

StepLosses Trainer::evaluate_batch(const Batch& batch) const {
  NoGradGuard no_grad;
  return forward_losses(batch, nullptr);
}

void Trainer::check_taps(const RawSample& sample) const {
  NoGradGuard no_grad;
  const Batch b = make_batch({sample}, {0});
  const auto s = student_->forward(Var::constant(b.input), taps_).taps;
  const auto t = distill_from_->forward(Var::constant(b.target), taps_).taps;
  for (size_t i = 0; i < s.size(); ++i)
    if (s[i].shape() != t[i].shape())
      throw ShapeError("tap pair " + std::to_string(i) + " (" +
                       to_string(taps_.pairs[i].first) + ":" + to_string(taps_.pairs[i].second) +
                       ") has student shape " + s[i].shape().str() + " but teacher shape " +
                       t[i].shape().str());
}

RunReport Trainer::run(const std::vector<RawSample>& train, const std::vector<RawSample>& val,
                       const TrainHooks& hooks) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (kind_ == Kind::kStudent && cfg_.weights.beta != 0) check_taps(train.front());

  RunReport report;
  report.kind = kind_ == Kind::kTeacher ? "teacher" : "student";
  report.params = params().num_params();
  report.config = cfg_.hyper_params();

  bool stop = false;
  while (epoch_ < cfg_.epochs && !stop) {
    const auto t0 = std::chrono::steady_clock::now();
    const Real lr = cfg_.schedule.at(cfg_.lr, epoch_);
    const auto batches = epoch_batches(train, cfg_.batch, cfg_.seed, epoch_);
    EpochRow row;
    row.epoch = epoch_;
    row.lr = lr;
    size_t done = 0;
    for (const Batch& b : batches) {
      if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) {
        stop = true;
        break;
      }
      Var total;
      StepLosses s = forward_losses(b, &total);
      s.step = step_;
      s.epoch = epoch_;
      if (!std::isfinite(s.total))
        throw std::runtime_error("training diverged: loss is " + format_real(s.total) +
                                 " at step " + std::to_string(step_));
      backward(total);
      if (distill_from_) {
        for (const auto& p : distill_from_->params().params()) {
          if (!p.var.has_grad()) continue;
          const Tensor g_teacher = p.var.grad();
          for (Real g : g_teacher.data())
            if (g != 0)
              throw std::logic_error("teacher parameter '" + p.name +
                                     "' received a gradient at step " + std::to_string(step_));
        }
      }
      adam_->step(lr);
      params().zero_grad();
      ++step_;
      ++done;
      row.total += s.total;
      row.reconstruction += s.reconstruction;
      row.structural += s.structural;
      row.distillation += s.distillation;
      report.steps.push_back(s);
      if (hooks.after_step && !hooks.after_step(s)) {
        stop = true;
        break;
      }
    }
    if (done == 0) break;
    row.steps = static_cast<int64_t>(done);
    row.total = mean_of(row.total, row.steps);
    row.reconstruction = mean_of(row.reconstruction, row.steps);
    row.structural = mean_of(row.structural, row.steps);
    row.distillation = mean_of(row.distillation, row.steps);
    // A partially processed epoch is reported but not counted as complete.
    if (done == batches.size()) ++epoch_;
    if (!val.empty()) {
      const EvalResult e = kind_ == Kind::kTeacher ? evaluate_teacher(*own_teacher_, val)
                                                    : evaluate(*student_, val);
      row.val_psnr = e.mean_psnr;
      row.val_ms_ssim = e.mean_ms_ssim;
    }
    row.wall_seconds =
        std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(row);
    if (hooks.log) {
      *hooks.log << report.kind << " epoch " << row.epoch << " steps " << row.steps << " loss "
                 << format_real(row.total);
      if (row.val_psnr) *hooks.log << " val_psnr " << format_real(*row.val_psnr);
      *hooks.log << " (" << std::setprecision(3) << row.wall_seconds << " s)\n";
    }
    if (!cfg_.ckpt.empty() &&
        (stop || epoch_ % cfg_.ckpt_every == 0 || epoch_ == cfg_.epochs))
      save_checkpoint(cfg_.ckpt, checkpoint());
  }
  return report;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.scalar_bytes = cfg_.scalar_bytes;
  ckpt.config = cfg_.hyper_params();
  ckpt.config["kind"] = kind_ == Kind::kTeacher ? "teacher" : "student";
  ckpt.config["epoch"] = std::to_string(epoch_);
  ckpt.config["step"] = std::to_string(step_);
  append_params(ckpt, kind_ == Kind::kTeacher ? own_teacher_->params() : student_->params());
  adam_->save(ckpt);
  return ckpt;
}

std::unique_ptr<LwIspModel> load_student(const Checkpoint& ckpt) {
  require_kind(ckpt, "student");
  auto m = std::make_unique<LwIspModel>(model_from_checkpoint(ckpt));
  load_params(m->params(), ckpt);
  return m;
}

std::unique_ptr<TeacherModel> load_teacher(const Checkpoint& ckpt) {
  require_kind(ckpt, "teacher");
  auto m = std::make_unique<TeacherModel>(model_from_checkpoint(ckpt));
  load_params(m->params(), ckpt);
  return m;
}

// Evaluation

namespace {

template <typename Forward>
EvalResult evaluate_with(const std::vector<RawSample>& samples, Forward forward) {
  NoGradGuard no_grad;
  EvalResult r;
  Real psnr_sum = 0, ssim_sum = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Batch b = make_batch(samples, {i});
    const Tensor pred = forward(b);
    EvalRow row;
    row.id = samples[i].id;
    row.psnr = psnr(pred, b.target);
    row.ms_ssim = ms_ssim_value(pred, b.target);
    psnr_sum += row.psnr;
    ssim_sum += row.ms_ssim;
    r.rows.push_back(row);
  }
  const auto n = static_cast<int64_t>(samples.size());
  r.mean_psnr = mean_of(psnr_sum, n);
  r.mean_ms_ssim = mean_of(ssim_sum, n);
  return r;
}

}  // namespace

EvalResult evaluate(const LwIspModel& model, const std::vector<RawSample>& samples) {
  return evaluate_with(samples, [&](const Batch& b) {
    return model.forward(Var::constant(b.input)).rgb.value();
  });
}

EvalResult evaluate_teacher(const TeacherModel& model, const std::vector<RawSample>& samples) {
  return evaluate_with(samples, [&](const Batch& b) {
    return model.forward(Var::constant(b.target)).rgb.value();
  });
}

void write_eval_csv(const std::string& path, const EvalResult& result) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << "id,psnr,ms_ssim\n";
  for (const auto& r : result.rows)
    os << r.id << ',' << format_real(r.psnr) << ',' << format_real(r.ms_ssim) << '\n';
  os << "mean," << format_real(result.mean_psnr) << ',' << format_real(result.mean_ms_ssim)
     << '\n';
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

Tensor infer_image(const LwIspModel& model, const Tensor& mosaic) {
  NoGradGuard no_grad;
  const Tensor packed = pack_bayer(mosaic);
  const Tensor x = packed.reshaped(Shape{1, 4, packed.dim(1), packed.dim(2)});
  const Tensor rgb = model.forward(Var::constant(x)).rgb.value();
  return rgb.reshaped(Shape{3, rgb.dim(2), rgb.dim(3)});
}

StatsRow model_stats(const ModelConfig& cfg, const std::string& label) {
  const LwIspModel m(cfg, 0);
  StatsRow r;
  r.label = label;
  r.counts = count_params(m.params());
  r.flops_224 = estimate_flops(m.params(), 112, 112);
  r.flops_960 = estimate_flops(m.params(), 480, 480);
  return r;
}

}  // namespace lwisp
