// lwisp/gradcheck_suites.cpp

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

#include "lwisp/gradcheck_suites.hpp"

#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <stdexcept>

#include "lwisp/blocks.hpp"
#include "lwisp/losses.hpp"
#include "lwisp/model.hpp"

namespace lwisp {

namespace {

struct Case {
  std::vector<Var> leaves;
  std::function<Var()> fn;
  // Keeps parameter stores and models alive for the closure.
  std::vector<std::shared_ptr<void>> owned;
  int64_t coords_per_leaf = 0;
};

class Rand {
 public:
  explicit Rand(uint64_t seed) : rng_(seed) {}
  Tensor uniform(const Shape& s, Real lo, Real hi) {
    std::uniform_real_distribution<Real> u(lo, hi);
    Tensor t(s);
    for (Real& v : t.data()) v = u(rng_);
    return t;
  }
  // Magnitudes in [lo, hi] with random sign.
  Tensor away_from_zero(const Shape& s, Real lo, Real hi) {
    Tensor t = uniform(s, lo, hi);
    std::bernoulli_distribution flip(0.5);
    for (Real& v : t.data())
      if (flip(rng_)) v = -v;
    return t;
  }
  Var param(const Shape& s, Real lo = -2.0, Real hi = 2.0) { return Var::parameter(uniform(s, lo, hi)); }
  uint64_t next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

// Contracts an arbitrary output with fixed random weights so every output
// element influences the scalar.
Var project(const Var& y, uint64_t seed) {
  Rand r(seed);
  return sum(y * Var::constant(r.uniform(y.shape(), -1.0, 1.0)));
}

void randomize_biases(ParamStore& store, Rand& r) {
  for (const auto& p : store.params())
    if (p.var.value().rank() == 1) {
      Var v = p.var;
      v.mutable_value() = r.uniform(v.shape(), -0.5, 0.5);
    }
}

using Builder = std::function<Case(Rand&)>;

Case unary(Rand& r, const Shape& s, std::function<Var(const Var&)> op, Real lo = -2.0,
           Real hi = 2.0) {
  Case c;
  const Var x = r.param(s, lo, hi);
  const uint64_t pseed = r.next();
  c.leaves = {x};
  c.fn = [=] { return project(op(x), pseed); };
  return c;
}

Case binary(Rand& r, const Shape& s, std::function<Var(const Var&, const Var&)> op) {
  Case c;
  const Var a = r.param(s), b = r.param(s);
  const uint64_t pseed = r.next();
  c.leaves = {a, b};
  c.fn = [=] { return project(op(a, b), pseed); };
  return c;
}

Case conv_case(Rand& r, Shape x_shape, Shape w_shape, bool bias, Conv2dOptions opts) {
  Case c;
  const Var x = r.param(x_shape);
  const Var w = r.param(w_shape, -1.0, 1.0);
  const Var b = bias ? r.param(Shape{w_shape[0]}) : Var{};
  const uint64_t pseed = r.next();
  c.leaves = {x, w};
  if (bias) c.leaves.push_back(b);
  c.fn = [=] { return project(conv2d(x, w, b, opts), pseed); };
  return c;
}

const std::vector<std::pair<std::string, Builder>>& op_cases() {
  static const std::vector<std::pair<std::string, Builder>> cases{
      {"conv2d_3x3_pad1", [](Rand& r) { return conv_case(r, {2, 3, 5, 6}, {4, 3, 3, 3}, true, {1, 1, 1}); }},
      {"conv2d_3x3_stride2", [](Rand& r) { return conv_case(r, {1, 2, 7, 6}, {3, 2, 3, 3}, true, {2, 1, 1}); }},
      {"conv2d_3x3_dilation2", [](Rand& r) { return conv_case(r, {1, 2, 6, 7}, {2, 2, 3, 3}, true, {1, 2, 2}); }},
      {"conv2d_1x1", [](Rand& r) { return conv_case(r, {2, 3, 4, 4}, {5, 3, 1, 1}, true, {1, 0, 1}); }},
      {"conv2d_7x7_nobias", [](Rand& r) { return conv_case(r, {1, 2, 7, 7}, {1, 2, 7, 7}, false, {1, 3, 1}); }},
      {"conv2d_1x11_valid", [](Rand& r) { return conv_case(r, {2, 1, 3, 13}, {1, 1, 1, 11}, false, {1, 0, 1}); }},
      {"global_avg_pool", [](Rand& r) { return unary(r, {2, 3, 4, 5}, [](const Var& x) { return global_avg_pool(x); }); }},
      {"channel_pool_mean", [](Rand& r) { return unary(r, {2, 4, 3, 3}, [](const Var& x) { return channel_pool(x, ChannelPoolMode::kMean); }); }},
      {"channel_pool_max", [](Rand& r) { return unary(r, {2, 4, 3, 3}, [](const Var& x) { return channel_pool(x, ChannelPoolMode::kMax); }); }},
      {"pixel_shuffle", [](Rand& r) { return unary(r, {2, 8, 3, 2}, [](const Var& x) { return pixel_shuffle(x, 2); }); }},
      {"pixel_unshuffle", [](Rand& r) { return unary(r, {1, 2, 4, 6}, [](const Var& x) { return pixel_unshuffle(x, 2); }); }},
      {"avg_pool2x2", [](Rand& r) { return unary(r, {1, 2, 5, 7}, [](const Var& x) { return avg_pool2x2(x); }); }},
      {"add", [](Rand& r) { return binary(r, {2, 3, 3, 2}, [](const Var& a, const Var& b) { return a + b; }); }},
      {"sub", [](Rand& r) { return binary(r, {2, 3, 3, 2}, [](const Var& a, const Var& b) { return a - b; }); }},
      {"mul", [](Rand& r) { return binary(r, {2, 3, 3, 2}, [](const Var& a, const Var& b) { return a * b; }); }},
      {"div", [](Rand& r) {
         Case c;
         const Var a = r.param({2, 3, 3, 2});
         const Var b = Var::parameter(r.away_from_zero({2, 3, 3, 2}, 0.5, 2.0));
         const uint64_t pseed = r.next();
         c.leaves = {a, b};
         c.fn = [=] { return project(a / b, pseed); };
         return c;
       }},
      {"scale", [](Rand& r) { return unary(r, {3, 4}, [](const Var& x) { return x * -1.7; }); }},
      {"add_scalar", [](Rand& r) { return unary(r, {3, 4}, [](const Var& x) { return x + 0.3; }); }},
      {"broadcast_channels", [](Rand& r) { return unary(r, {2, 3, 1, 1}, [](const Var& x) { return broadcast_to(x, Shape{2, 3, 4, 5}); }); }},
      {"broadcast_spatial", [](Rand& r) { return unary(r, {2, 1, 4, 5}, [](const Var& x) { return broadcast_to(x, Shape{2, 3, 4, 5}); }); }},
      {"concat_channels", [](Rand& r) {
         Case c;
         const Var a = r.param({2, 3, 2, 2}), b = r.param({2, 5, 2, 2});
         const uint64_t pseed = r.next();
         c.leaves = {a, b};
         c.fn = [=] { return project(concat_channels({a, b, a}), pseed); };
         return c;
       }},
      {"slice_channels", [](Rand& r) { return unary(r, {2, 6, 2, 3}, [](const Var& x) { return slice_channels(x, 1, 4); }); }},
      {"reshape", [](Rand& r) { return unary(r, {2, 3, 2, 2}, [](const Var& x) { return reshape(x, Shape{6, 4}); }); }},
      {"sigmoid", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return sigmoid(x); }); }},
      {"relu", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return relu(x); }); }},
      {"leaky_relu", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return leaky_relu(x, 0.2); }); }},
      {"abs", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return abs(x); }); }},
      {"square", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return square(x); }); }},
      {"pow_1.7", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return pow(x, 1.7); }, 0.1, 2.0); }},
      {"pow_0.3", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return pow(x, 0.3); }, 0.1, 2.0); }},
      {"sum", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return sum(x); }); }},
      {"mean", [](Rand& r) { return unary(r, {2, 3, 4}, [](const Var& x) { return mean(x); }); }},
      {"reconstruction_loss", [](Rand& r) {
         Case c;
         const Var p = r.param({2, 3, 4, 4});
         const Var t = Var::constant(r.uniform({2, 3, 4, 4}, -2.0, 2.0));
         c.leaves = {p};
         c.fn = [=] { return reconstruction_loss(p, t); };
         return c;
       }},
      {"structural_loss", [](Rand& r) {
         Case c;
         const Var p = r.param({1, 2, 24, 24}, 0.0, 1.0);
         const Var t = Var::constant(r.uniform({1, 2, 24, 24}, 0.0, 1.0));
         c.leaves = {p};
         c.fn = [=] { return structural_loss(p, t); };
         return c;
       }},
      {"distillation_loss", [](Rand& r) {
         Case c;
         std::vector<Var> s, t;
         for (const Shape& sh : {Shape{1, 2, 2, 2}, Shape{1, 3, 4, 4}, Shape{1, 1, 8, 8}}) {
           s.push_back(r.param(sh));
           t.push_back(Var::constant(r.uniform(sh, -2.0, 2.0)));
         }
         c.leaves = s;
         c.fn = [=] { return distillation_loss(s, t); };
         return c;
       }},
      {"teacher_loss", [](Rand& r) {
         Case c;
         const Var g = r.param({1, 3, 22, 22}, 0.0, 1.0);
         const Var j = Var::constant(r.uniform({1, 3, 22, 22}, 0.0, 1.0));
         c.leaves = {g};
         c.fn = [=] { return teacher_loss(g, j, 0.4); };
         return c;
       }},
      {"overall_loss", [](Rand& r) {
         Case c;
         const Var p = r.param({1, 3, 22, 22}, 0.0, 1.0);
         const Var t = Var::constant(r.uniform({1, 3, 22, 22}, 0.0, 1.0));
         const Var s = r.param({1, 4, 3, 3});
         const Var tt = Var::constant(r.uniform({1, 4, 3, 3}, -2.0, 2.0));
         c.leaves = {p, s};
         c.fn = [=] { return overall_loss(p, t, {s}, {tt}, LossWeights{0.4, 1.0, 0.4}).total; };
         return c;
       }},
  };
  return cases;
}

// Block cases: every parameter of the block plus its inputs are leaves.
Case block_case(Rand& r, std::function<std::function<Var()>(ParamStore&, std::vector<Var>&)> build) {
  auto store = std::make_shared<ParamStore>(r.next());
  std::vector<Var> inputs;
  auto fn = build(*store, inputs);
  randomize_biases(*store, r);
  Case c;
  c.leaves = store->vars();
  c.leaves.insert(c.leaves.end(), inputs.begin(), inputs.end());
  const uint64_t pseed = r.next();
  c.fn = [fn, pseed] { return project(fn(), pseed); };
  c.owned.push_back(store);
  return c;
}

FgamConfig small_fgam() {
  FgamConfig f;
  f.channels = 4;
  f.reduction = 2;
  return f;
}

CcbConfig small_ccb() {
  CcbConfig cc;
  cc.encoder_channels = 3;
  cc.decoder_channels = 2;
  cc.context_channels = 2;
  cc.out_channels = 2;
  cc.complement_channels = 1;
  return cc;
}

const std::vector<std::pair<std::string, Builder>>& block_cases() {
  static const std::vector<std::pair<std::string, Builder>> cases{
      {"fgam", [](Rand& r) {
         return block_case(r, [&r](ParamStore& s, std::vector<Var>& in) {
           auto f = std::make_shared<Fgam>(s, "fgam", small_fgam(), Resolution::scale(1, 1));
           const Var x = r.param({1, 4, 5, 5});
           in.push_back(x);
           return std::function<Var()>([f, x] { return f->forward(x); });
         });
       }},
      {"fgam_multiply", [](Rand& r) {
         return block_case(r, [&r](ParamStore& s, std::vector<Var>& in) {
           FgamConfig fc = small_fgam();
           fc.fusion = FgamFusion::kMultiply;
           auto f = std::make_shared<Fgam>(s, "fgam", fc, Resolution::scale(1, 1));
           const Var x = r.param({1, 4, 5, 5});
           in.push_back(x);
           return std::function<Var()>([f, x] { return f->forward(x); });
         });
       }},
      {"ccb_core", [](Rand& r) {
         return block_case(r, [&r](ParamStore& s, std::vector<Var>& in) {
           auto b = std::make_shared<Ccb>(s, "ccb", small_ccb(), Resolution::scale(1, 1));
           const Var f1 = r.param({1, 3, 3, 3}), f2 = r.param({1, 2, 3, 3});
           in = {f1, f2};
           return std::function<Var()>([b, f1, f2] { return b->core(f1, f2); });
         });
       }},
      {"contextual_complement", [](Rand& r) {
         return block_case(r, [&r](ParamStore& s, std::vector<Var>& in) {
           auto b = std::make_shared<Ccb>(s, "ccb", small_ccb(), Resolution::scale(1, 1));
           const Var ctx = r.param({1, 2, 6, 6}), core = r.param({1, 2, 6, 6});
           in = {ctx, core};
           return std::function<Var()>([b, ctx, core] { return b->complement(ctx, core); });
         });
       }},
      {"ccb_forward", [](Rand& r) {
         return block_case(r, [&r](ParamStore& s, std::vector<Var>& in) {
           auto b = std::make_shared<Ccb>(s, "ccb", small_ccb(), Resolution::scale(1, 1));
           const Var f1 = r.param({1, 3, 3, 3}), f2 = r.param({1, 2, 3, 3});
           const Var ctx = r.param({1, 2, 6, 6});
           in = {f1, f2, ctx};
           return std::function<Var()>([b, f1, f2, ctx] { return b->forward(f1, f2, ctx); });
         });
       }},
      {"down_block", [](Rand& r) {
         return block_case(r, [&r](ParamStore& s, std::vector<Var>& in) {
           DownBlockConfig dc;
           dc.in_channels = 3;
           dc.out_channels = 4;
           dc.fgam = small_fgam();
           auto b = std::make_shared<DownBlock>(s, "down", dc, Resolution::scale(1, 1));
           const Var x = r.param({1, 3, 8, 6});
           in.push_back(x);
           return std::function<Var()>([b, x] { return b->forward(x).out; });
         });
       }},
      {"up_stage", [](Rand& r) {
         return block_case(r, [&r](ParamStore& s, std::vector<Var>& in) {
           auto b = std::make_shared<UpStage>(s, "up", small_ccb(), Activation::kLeakyRelu,
                                              Resolution::scale(1, 1));
           const Var dec = r.param({1, 2, 3, 3}), same = r.param({1, 3, 3, 3});
           const Var dbl = r.param({1, 2, 6, 6});
           in = {dec, same, dbl};
           return std::function<Var()>([b, dec, same, dbl] { return b->forward(dec, same, dbl); });
         });
       }},
  };
  return cases;
}

void perturb_params(ParamStore& store, Rand& r) {
  // Small random biases so no activation sits exactly on a kink at init.
  randomize_biases(store, r);
}

const std::vector<std::pair<std::string, Builder>>& model_cases() {
  static const std::vector<std::pair<std::string, Builder>> cases{
      {"student_all_losses", [](Rand& r) {
         const ModelConfig cfg = tiny_model_config();
         auto student = std::make_shared<LwIspModel>(cfg, r.next());
         auto teacher = std::make_shared<TeacherModel>(cfg, r.next());
         perturb_params(student->params(), r);
         perturb_params(teacher->params(), r);
         const Var x = Var::parameter(r.uniform({1, 4, 16, 16}, 0.0, 1.0));
         const Var target = Var::constant(r.uniform({1, 3, 32, 32}, 0.0, 1.0));
         const TapSet taps = TapSet::default_set();
         std::vector<Var> teacher_taps;
         {
           NoGradGuard no_grad;
           teacher_taps = teacher->forward(target, taps).taps;
         }
         Case c;
         c.leaves = student->params().vars();
         c.leaves.push_back(x);
         c.fn = [=] {
           const ForwardResult fr = student->forward(x, taps);
           return overall_loss(fr.rgb, target, fr.taps, teacher_taps, LossWeights{0.4, 1.0, 0.4})
               .total;
         };
         c.owned = {student, teacher};
         return c;
       }},
      {"teacher_loss", [](Rand& r) {
         const ModelConfig cfg = tiny_model_config();
         auto teacher = std::make_shared<TeacherModel>(cfg, r.next());
         perturb_params(teacher->params(), r);
         const Var j = Var::constant(r.uniform({1, 3, 32, 32}, 0.0, 1.0));
         Case c;
         c.leaves = teacher->params().vars();
         c.fn = [=] { return teacher_loss(teacher->forward(j).rgb, j, 0.4); };
         c.owned = {teacher};
         return c;
       }},
  };
  return cases;
}

const std::vector<std::pair<std::string, Builder>>& cases_for(GradScope scope) {
  switch (scope) {
    case GradScope::kOps: return op_cases();
    case GradScope::kBlocks: return block_cases();
    case GradScope::kModel: return model_cases();
  }
  throw std::logic_error("bad scope");
}

uint64_t case_seed(const std::string& name, uint64_t seed) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ULL;
  return h ^ (seed * 0x9e3779b97f4a7c15ULL);
}

}  // namespace

GradScope parse_grad_scope(const std::string& s) {
  if (s == "ops") return GradScope::kOps;
  if (s == "blocks") return GradScope::kBlocks;
  if (s == "model") return GradScope::kModel;
  throw std::invalid_argument("unknown gradcheck scope '" + s + "' (expected ops, blocks or model)");
}

std::string to_string(GradScope s) {
  switch (s) {
    case GradScope::kOps: return "ops";
    case GradScope::kBlocks: return "blocks";
    case GradScope::kModel: return "model";
  }
  return "?";
}

std::vector<std::string> grad_case_names(GradScope scope) {
  std::vector<std::string> out;
  for (const auto& [name, build] : cases_for(scope)) out.push_back(name);
  return out;
}

GradCaseResult run_grad_case(GradScope scope, const std::string& name, uint64_t seed,
                             const GradSuiteOptions& opts) {
  for (const auto& [case_name, build] : cases_for(scope)) {
    if (case_name != name) continue;
    Rand r(case_seed(name, seed));
    Case c = build(r);
    GradCheckOptions o = opts.check;
    o.seed = seed;
    if (scope == GradScope::kModel) o.max_coords_per_leaf = opts.model_coords_per_leaf;
    GradCaseResult res;
    res.name = name;
    res.seed = seed;
    res.report = check_gradients(name, c.leaves, c.fn, o);
    return res;
  }
  throw std::invalid_argument("no gradcheck case '" + name + "' in scope " + to_string(scope));
}

bool case_passed(const GradCaseResult& r) { return r.report.passed && r.report.checked > 0; }

std::vector<GradCaseResult> run_grad_suite(GradScope scope, const GradSuiteOptions& opts,
                                           std::ostream* log) {
  std::vector<GradCaseResult> out;
  for (const auto& name : grad_case_names(scope)) {
    for (int k = 0; k < opts.seeds; ++k) {
      out.push_back(run_grad_case(scope, name, opts.first_seed + static_cast<uint64_t>(k), opts));
      const auto& r = out.back();
      if (log)
        *log << std::left << std::setw(26) << r.name << " seed " << std::setw(3) << r.seed
             << " checked " << std::setw(6) << r.report.checked << " refined " << std::setw(4)
             << r.report.refined << " skipped " << std::setw(4) << r.report.skipped << " max_rel " << std::scientific << std::setprecision(3)
             << r.report.max_rel_error << std::defaultfloat << "  "
             << (case_passed(r) ? "PASS" : "FAIL") << "\n";
    }
  }
  return out;
}

}  // namespace lwisp
