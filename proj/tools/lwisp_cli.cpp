// lwisp/tools/lwisp_cli.cpp

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

// Command-line front end: train-teacher, train, eval, infer, gradcheck, stats,
// make-synthetic.

#include <omp.h>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lwisp/gradcheck_suites.hpp"
#include "lwisp/train.hpp"

namespace fs = std::filesystem;
using namespace lwisp;

namespace {

// Flags shared by every subcommand that builds a TrainConfig. Each one is
// optional so that only flags given on the command line override the file.
struct ConfigFlags {
  std::string config_file;
  std::optional<double> lr, alpha, beta, gamma;
  std::optional<int64_t> batch, epochs, max_steps;
  std::optional<uint64_t> seed;
  std::optional<std::string> taps, widths, data, ckpt, out, teacher, resume, val_split,
      schedule, activation;
  bool no_fgam = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value configuration file")
        ->check(CLI::ExistingFile);
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--alpha", alpha, "structural loss weight");
    app->add_option("--beta", beta, "distillation loss weight");
    app->add_option("--gamma", gamma, "teacher structural loss weight");
    app->add_option("--batch", batch, "batch size");
    app->add_option("--epochs", epochs, "number of epochs");
    app->add_option("--max-steps", max_steps, "stop after this many optimizer steps");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--taps", taps, "distillation taps, e.g. up2,up3,up4 or up4:down4");
    app->add_flag("--no-fgam", no_fgam, "disable the attention modules");
    app->add_option("--widths", widths, "encoder widths, e.g. 16,32,64,128");
    app->add_option("--activation", activation, "relu or leaky_relu");
    app->add_option("--schedule", schedule, "constant or step:<factor>:<every>");
    app->add_option("--data", data, "dataset root");
    app->add_option("--val-split", val_split, "validation split evaluated after each epoch");
    app->add_option("--ckpt", ckpt, "checkpoint path");
    app->add_option("--out", out, "output path");
    app->add_option("--teacher", teacher, "teacher checkpoint for distillation");
    app->add_option("--resume", resume, "checkpoint to resume from");
  }

  TrainConfig build() const {
    TrainConfig cfg;
    if (!config_file.empty()) cfg.apply(read_key_values(config_file));
    std::map<std::string, std::string> kv;
    auto put = [&kv](const char* key, const auto& v) {
      if (!v) return;
      if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, double>) kv[key] = format_real(*v);
      else if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>) kv[key] = *v;
      else kv[key] = std::to_string(*v);
    };
    put("lr", lr);
    put("alpha", alpha);
    put("beta", beta);
    put("gamma", gamma);
    put("batch", batch);
    put("epochs", epochs);
    put("max_steps", max_steps);
    put("seed", seed);
    put("taps", taps);
    put("widths", widths);
    put("activation", activation);
    put("schedule", schedule);
    put("data", data);
    put("val_split", val_split);
    put("ckpt", ckpt);
    put("out", out);
    put("teacher", teacher);
    put("resume", resume);
    if (no_fgam) kv["use_fgam"] = "false";
    cfg.apply(kv);
    cfg.validate();
    return cfg;
  }
};

DatasetManifest open_split(const TrainConfig& cfg, const std::string& split) {
  if (cfg.data.empty()) throw std::invalid_argument("--data is required");
  DatasetManifest m = DatasetManifest::load(cfg.data, split);
  m.black_level = cfg.raw_black_level;
  m.white_level = cfg.raw_white_level;
  m.validate();
  return m;
}

void write_report(const RunReport& report, const TrainConfig& cfg) {
  fs::path dir = cfg.out.empty() ? fs::path(cfg.ckpt).parent_path() : fs::path(cfg.out);
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  const std::string stem = (dir / report.kind).string();
  report.write_csv(stem + "_report.csv");
  report.write_steps_csv(stem + "_steps.csv");
  report.write_summary(stem + "_summary.txt");
  std::cout << report.summary();
  std::cout << "report: " << stem << "_report.csv, " << stem << "_summary.txt\n";
}

int run_train(const TrainConfig& cfg, bool teacher_phase) {
  if (cfg.ckpt.empty()) throw std::invalid_argument("--ckpt is required");
  const DatasetManifest train = open_split(cfg, cfg.train_split);
  std::vector<RawSample> val;
  if (!cfg.val_split.empty()) {
    const DatasetManifest v = open_split(cfg, cfg.val_split);
    require_disjoint(train, v);
    val = load_all(v);
  }
  const std::vector<RawSample> samples = load_all(train);

  std::shared_ptr<const TeacherModel> teacher;
  if (!teacher_phase && !cfg.teacher.empty()) teacher = load_teacher(load_checkpoint(cfg.teacher));
  if (!teacher_phase && !teacher && cfg.weights.beta != 0)
    std::cout << "note: no --teacher given, distillation weight beta set to 0\n";

  Trainer trainer = !cfg.resume.empty()
                        ? Trainer::resume(load_checkpoint(cfg.resume), cfg, teacher)
                        : teacher_phase ? Trainer::teacher(cfg) : Trainer::student(cfg, teacher);
  if ((trainer.kind() == Trainer::Kind::kTeacher) != teacher_phase)
    throw std::invalid_argument("--resume checkpoint is for the other training phase");
  TrainHooks hooks;
  hooks.log = &std::cout;
  const RunReport report = trainer.run(samples, val, hooks);
  save_checkpoint(cfg.ckpt, trainer.checkpoint());
  write_report(report, trainer.config());
  std::cout << "checkpoint: " << cfg.ckpt << "\n";
  return 0;
}

int run_eval(const TrainConfig& cfg, const std::string& split) {
  if (cfg.ckpt.empty()) throw std::invalid_argument("--ckpt is required");
  const auto model = load_student(load_checkpoint(cfg.ckpt));
  const EvalResult r = evaluate(*model, load_all(open_split(cfg, split)));
  if (!cfg.out.empty()) {
    write_eval_csv(cfg.out, r);
    std::cout << "per-sample metrics: " << cfg.out << "\n";
  }
  std::cout << "samples " << r.rows.size() << "  mean PSNR " << format_real(r.mean_psnr)
            << " dB  mean MS-SSIM " << format_real(r.mean_ms_ssim) << "\n";
  return 0;
}

int run_infer(const TrainConfig& cfg, const std::string& raw) {
  if (cfg.ckpt.empty() || cfg.out.empty() || raw.empty())
    throw std::invalid_argument("infer needs --ckpt, --raw and --out");
  const auto model = load_student(load_checkpoint(cfg.ckpt));
  Tensor mosaic = read_gray_png(raw);
  if (cfg.raw_black_level || cfg.raw_white_level) {
    const Real b = cfg.raw_black_level.value_or(0.0), w = cfg.raw_white_level.value_or(1.0);
    for (Real& v : mosaic.data()) v = (v - b) / (w - b);
  }
  const Tensor rgb = infer_image(*model, mosaic);
  write_rgb(cfg.out, rgb);
  std::cout << "wrote " << rgb.dim(2) << "x" << rgb.dim(1) << " RGB to " << cfg.out << "\n";
  return 0;
}

int run_gradcheck(const std::string& scope, int seeds) {
  GradSuiteOptions opts;
  opts.seeds = seeds;
  std::vector<GradScope> scopes;
  if (scope == "all") scopes = {GradScope::kOps, GradScope::kBlocks, GradScope::kModel};
  else scopes = {parse_grad_scope(scope)};
  int failed = 0, total = 0;
  for (GradScope s : scopes) {
    std::cout << "== gradcheck " << to_string(s) << " (" << seeds << " seeds, eps "
              << opts.check.eps << ", tolerance " << opts.check.tolerance << ")\n";
    for (const auto& r : run_grad_suite(s, opts, &std::cout)) {
      ++total;
      if (!case_passed(r)) ++failed;
    }
  }
  std::cout << (failed == 0 ? "PASS" : "FAIL") << ": " << total - failed << "/" << total
            << " checks within tolerance\n";
  return failed == 0 ? 0 : 1;
}

void print_stats(const StatsRow& r) {
  std::cout << std::left << std::setw(14) << r.label << std::right << std::setw(10)
            << r.counts.params << std::setw(10) << r.counts.backbone_convs << std::setw(8)
            << r.counts.total_convs << std::setw(12) << std::fixed << std::setprecision(3)
            << r.flops_224 / 1e9 << "G" << std::setw(12) << r.flops_960 / 1e9 << "G\n"
            << std::defaultfloat;
}

int run_stats(const TrainConfig& cfg) {
  ModelConfig model = cfg.model;
  if (!cfg.ckpt.empty()) model = load_student(load_checkpoint(cfg.ckpt))->config();
  std::cout << "counting rule: backbone convs exclude attention (FGAM) and upsampling (CCB) "
               "convs; FLOPs = 2 x conv multiply-accumulates, RGB output extent\n";
  std::cout << std::left << std::setw(14) << "config" << std::right << std::setw(10) << "params"
            << std::setw(10) << "backbone" << std::setw(8) << "convs" << std::setw(13)
            << "FLOPs@224" << std::setw(13) << "FLOPs@960" << "\n";
  ModelConfig other = model;
  other.use_fgam = !model.use_fgam;
  const StatsRow a = model_stats(model, model.use_fgam ? "w/ FGAM" : "w/o FGAM");
  const StatsRow b = model_stats(other, other.use_fgam ? "w/ FGAM" : "w/o FGAM");
  print_stats(model.use_fgam ? a : b);
  print_stats(model.use_fgam ? b : a);
  std::cout << "selected: " << a.label << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LW-ISP: learnable RAW-to-RGB pipeline"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (default: runtime choice)");

  ConfigFlags teacher_flags, student_flags, eval_flags, infer_flags, stats_flags;
  auto* teacher_cmd = app.add_subcommand("train-teacher", "train the RGB->RGB teacher");
  teacher_flags.attach(teacher_cmd);
  auto* train_cmd = app.add_subcommand("train", "train the RAW->RGB student");
  student_flags.attach(train_cmd);

  std::string split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "per-sample PSNR and MS-SSIM of a student");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--split", split, "dataset split to evaluate");

  std::string raw;
  auto* infer_cmd = app.add_subcommand("infer", "run a student on one RAW mosaic PNG");
  infer_flags.attach(infer_cmd);
  infer_cmd->add_option("--raw", raw, "single-channel mosaic PNG")->check(CLI::ExistingFile);

  std::string scope = "all";
  int seeds = 20;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad_cmd->add_option("scope", scope, "ops, blocks, model or all")
      ->check(CLI::IsMember({"ops", "blocks", "model", "all"}));
  grad_cmd->add_option("--seeds", seeds, "random seeds per case")->check(CLI::PositiveNumber);

  auto* stats_cmd = app.add_subcommand("stats", "parameter and FLOP counts");
  stats_flags.attach(stats_cmd);

  std::string synth_root, synth_split = "train";
  int synth_count = 8;
  int64_t synth_size = 64;
  uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("make-synthetic", "write a synthetic paired dataset");
  synth_cmd->add_option("--out", synth_root, "dataset root")->required();
  synth_cmd->add_option("--split", synth_split, "split name");
  synth_cmd->add_option("--count", synth_count, "number of samples")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--size", synth_size, "RGB extent (even)")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_seed, "random seed");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (*teacher_cmd) return run_train(teacher_flags.build(), true);
    if (*train_cmd) return run_train(student_flags.build(), false);
    if (*eval_cmd) return run_eval(eval_flags.build(), split);
    if (*infer_cmd) return run_infer(infer_flags.build(), raw);
    if (*grad_cmd) return run_gradcheck(scope, seeds);
    if (*stats_cmd) return run_stats(stats_flags.build());
    if (*synth_cmd) {
      const DatasetManifest m =
          make_synthetic_dataset(synth_root, synth_split, synth_count, synth_size, synth_seed);
      std::cout << "wrote " << m.ids.size() << " samples to " << synth_root << "/" << synth_split
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
