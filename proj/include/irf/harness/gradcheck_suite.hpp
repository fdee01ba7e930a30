#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "irf/meta/trainer.hpp"
#include "irf/tensor/gradcheck.hpp"

namespace irf::harness {

using VarD = Var<double>;

inline Tensor<double> random_tensor(Shape s, CounterRng& rng, double lo = -1, double hi = 1,
                                    double min_abs = 0) {
  Tensor<double> t(s);
  for (auto& x : t.storage()) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::abs(x) < min_abs);
  }
  return t;
}

/// Scale applied to every analytic gradient before comparison. Anything but 1
/// must make the suite fail; used as a negative control.
struct GradcheckHook {
  double analytic_scale = 1.0;
};

inline std::vector<Tensor<double>> scaled(std::vector<Tensor<double>> g, double s) {
  if (s != 1.0)
    for (auto& t : g)
      for (auto& x : t.storage()) x *= s;
  return g;
}

// Primitive probes: an op's output reduced to a scalar by a fixed random
// projection.

using PrimitiveFn = std::function<VarD(const std::vector<VarD>&)>;

struct Probe {
  PrimitiveFn f;
  Tensor<double> proj;

  VarD scalar(const std::vector<VarD>& xs) const {
    return sum(mul(reshape(f(xs), proj.shape()), VarD(proj)));
  }
  double eval(const std::vector<Tensor<double>>& xs) const {
    std::vector<VarD> c;
    for (const auto& x : xs) c.emplace_back(x);
    return scalar(c).item();
  }
};

inline Probe make_probe(PrimitiveFn f, const std::vector<Tensor<double>>& inputs,
                        CounterRng& rng) {
  std::vector<VarD> c;
  for (const auto& x : inputs) c.emplace_back(x);
  const Shape out = f(c).shape();
  return Probe{std::move(f), random_tensor(out, rng)};
}

inline double first_order_error(const Probe& p, const std::vector<Tensor<double>>& xs,
                                 GradcheckHook hook = {}) {
  Tape<double> tape;
  std::vector<VarD> leaves;
  for (const auto& x : xs) leaves.push_back(tape.leaf(x));
  std::vector<Tensor<double>> analytic;
  for (auto& v : grad(p.scalar(leaves), leaves)) analytic.push_back(v.value());
  const auto fd = finite_difference<double>(
      [&](const std::vector<Tensor<double>>& in) { return p.eval(in); }, xs);
  return max_relative_error(scaled(analytic, hook.analytic_scale), fd);
}

/// Hessian-vector product by backward-of-backward against finite differences
/// of the projected first gradient.
inline double second_order_error(const Probe& p, const std::vector<Tensor<double>>& xs,
                                 CounterRng& rng, GradcheckHook hook = {}) {
  std::vector<Tensor<double>> dirs;
  for (const auto& x : xs) dirs.push_back(random_tensor(x.shape(), rng));
  auto projected_grad = [&](const std::vector<VarD>& leaves, bool create) {
    auto g = grad(p.scalar(leaves), leaves, create);
    VarD acc(Tensor<double>::scalar(0));
    for (std::size_t k = 0; k < g.size(); ++k)
      acc = add(acc, sum(mul(reshape(g[k], dirs[k].shape()), VarD(dirs[k]))));
    return acc;
  };
  Tape<double> tape;
  std::vector<VarD> leaves;
  for (const auto& x : xs) leaves.push_back(tape.leaf(x));
  const VarD s = projected_grad(leaves, true);
  std::vector<Tensor<double>> hv;
  if (s.on_tape()) {
    for (auto& v : grad(s, leaves)) hv.push_back(v.value());
  } else {
    for (const auto& x : xs) hv.emplace_back(x.shape());
  }
  const auto fd = finite_difference<double>(
      [&](const std::vector<Tensor<double>>& in) {
        Tape<double> t;
        std::vector<VarD> l;
        for (const auto& x : in) l.push_back(t.leaf(x));
        return projected_grad(l, false).item();
      },
      xs);
  return max_relative_error(scaled(hv, hook.analytic_scale), fd);
}

struct PrimitiveCase {
  const char* name;
  PrimitiveFn f;
  std::vector<Shape> shapes;
  double min_abs = 0;  // keeps inputs away from kinks and poles
};

inline std::vector<PrimitiveCase> primitive_cases() {
  return {
      {"add", [](auto& x) { return add(x[0], x[1]); }, {{3, 2}, {3, 2}}},
      {"sub", [](auto& x) { return sub(x[0], x[1]); }, {{4}, {4}}},
      {"mul", [](auto& x) { return mul(x[0], x[1]); }, {{5}, {5}}},
      {"scale", [](auto& x) { return scale(x[0], 2.5); }, {{3}}},
      {"mul_scalar", [](auto& x) { return mul_scalar(x[0], x[1]); }, {{4}, {1}}},
      {"relu", [](auto& x) { return relu(mul(x[0], x[0])); }, {{6}}, 0.1},
      {"relu_signed", [](auto& x) { return mul(relu(x[0]), x[0]); }, {{6}}, 0.1},
      {"sigmoid", [](auto& x) { return sigmoid(x[0]); }, {{5}}},
      {"tanh", [](auto& x) { return tanh(x[0]); }, {{5}}},
      {"arctan", [](auto& x) { return arctan(x[0]); }, {{5}}},
      {"exp", [](auto& x) { return exp(x[0]); }, {{4}}},
      {"reciprocal", [](auto& x) { return reciprocal(x[0]); }, {{4}}, 0.3},
      {"log_softmax", [](auto& x) { return log_softmax(x[0]); }, {{4}}},
      {"sum", [](auto& x) { return sum(mul(x[0], x[0])); }, {{3, 3}}},
      {"mean", [](auto& x) { return mean(mul(x[0], x[0])); }, {{7}}},
      {"index_select", [](auto& x) { return index_select(mul(x[0], x[0]), {2, 0, 2}); },
       {{4}}},
      {"slice", [](auto& x) { return slice(mul(x[0], x[0]), 1, 3); }, {{5}}},
      {"concat", [](auto& x) { return concat<double>({mul(x[0], x[1]), x[1], x[0]}); },
       {{2}, {2}}},
      {"matmul_mv", [](auto& x) { return matmul(x[0], x[1]); }, {{3, 4}, {4}}},
      {"matmul_mm", [](auto& x) { return matmul(x[0], x[1]); }, {{2, 3}, {3, 4}}},
      {"matmul_tn", [](auto& x) { return matmul(x[0], x[1], true, false); },
       {{3, 2}, {3, 4}}},
      {"matmul_nt", [](auto& x) { return matmul(x[0], x[1], false, true); },
       {{2, 3}, {4, 3}}},
      {"matmul_tt", [](auto& x) { return matmul(x[0], x[1], true, true); },
       {{3, 2}, {4, 3}}},
      {"conv2d", [](auto& x) { return conv2d(x[0], x[1]); }, {{2, 5, 4}, {3, 2, 3, 3}}},
      {"conv2d_input_grad", [](auto& x) { return conv2d_input_grad(x[0], x[1]); },
       {{3, 3, 2}, {3, 2, 3, 3}}},
      {"conv2d_kernel_grad", [](auto& x) { return conv2d_kernel_grad(x[0], x[1]); },
       {{2, 5, 4}, {3, 3, 2}}},
      {"broadcast_channels",
       [](auto& x) { return mul(broadcast_channels(x[0], 2, 3), x[1]); },
       {{3}, {3, 2, 3}}},
      {"channel_sum", [](auto& x) { return channel_sum(mul(x[0], x[0])); }, {{3, 2, 2}}},
      {"entropy", [](auto& x) { return entropy_from_log_probs(log_softmax(x[0])); }, {{4}}},
  };
}

/// Gradient of f over every entry of `params` against central differences.
inline double param_gradcheck(const ParamSet<double>& params,
                              const std::function<VarD(std::span<const VarD>)>& f,
                              GradcheckHook hook = {}) {
  Tape<double> tape;
  const auto vars = bind(tape, params);
  std::vector<Tensor<double>> analytic;
  for (const auto& g : grad(f(vars), vars)) analytic.push_back(g.value());
  std::vector<Tensor<double>> inputs;
  for (std::size_t i = 0; i < params.size(); ++i) inputs.push_back(params[i]);
  const auto numeric = finite_difference<double>(
      [&](const std::vector<Tensor<double>>& x) {
        std::vector<VarD> c;
        for (const auto& t : x) c.emplace_back(t);
        return f(c).item();
      },
      inputs);
  return max_relative_error(scaled(analytic, hook.analytic_scale), numeric);
}

// Small networks and histories for the loss checks.

inline nn::Arch tiny_arch() {
  nn::Arch a;
  a.height = 3;
  a.width = 3;
  a.conv_filters = 2;
  a.fc_hidden = 4;
  a.lstm_hidden = 4;
  return a;
}

inline std::vector<nn::StepFeatures> random_history(const nn::Arch& a, int steps,
                                                    CounterRng& rng) {
  std::vector<nn::StepFeatures> f(static_cast<std::size_t>(steps));
  for (std::size_t t = 0; t < f.size(); ++t) {
    f[t].observation =
        env::Observation(Shape{a.channels, a.height, a.width});
    for (auto& x : f[t].observation.storage()) x = rng.uniform() < 0.25 ? 1.0 : 0.0;
    f[t].action = static_cast<int>(rng.below(static_cast<std::uint64_t>(a.history_actions)));
    f[t].extrinsic_reward = rng.uniform(-1, 1);
    f[t].done = rng.uniform() < 0.3;
  }
  return f;
}

/// Parameters with non-zero biases so every entry carries gradient.
inline ParamSet<double> with_random_biases(ParamSet<double> p, CounterRng& rng) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.name(i).size() < 2 || p.name(i).substr(p.name(i).size() - 2) != ".b") continue;
    Tensor<double> b = p[i];
    for (auto& v : b.storage()) v = rng.uniform(-0.3, 0.3);
    p.set(i, b);
  }
  return p;
}

/// The inner policy loss over a 5-step window with hand-set returns.
inline double policy_loss_gradcheck(GradcheckHook hook = {}) {
  const auto a = tiny_arch();
  CounterRng rng(101);
  const auto theta = with_random_biases(nn::init_policy<double>(a, rng), rng);
  const auto hist = random_history(a, 5, rng);
  std::vector<int> actions;
  std::vector<double> returns;
  for (std::size_t t = 0; t < hist.size(); ++t) {
    actions.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(a.num_actions))));
    returns.push_back(rng.uniform(-1, 2));
  }
  return param_gradcheck(
      theta,
      [&](std::span<const VarD> p) {
        agent::TrajectoryWindow<double> w;
        for (std::size_t t = 0; t < hist.size(); ++t) {
          agent::Transition<double> tr;
          tr.observation = hist[t].observation;
          tr.action_index = actions[t];
          w.steps.push_back(tr);
        }
        agent::score_window<double>(p, w);
        std::vector<VarD> g;
        for (double r : returns) g.emplace_back(Tensor<double>::vector({r}));
        return agent::policy_loss(w, g, 0.05, 4);
      },
      hook);
}

/// Mean squared TD error of the recurrent value network over 6 steps.
inline double value_loss_gradcheck(GradcheckHook hook = {}) {
  const auto a = tiny_arch();
  CounterRng rng(102);
  const auto phi = with_random_biases(nn::init_recurrent<double>(a, rng), rng);
  const auto hist = random_history(a, 6, rng);
  std::vector<const nn::StepFeatures*> ptrs;
  for (const auto& f : hist) ptrs.push_back(&f);
  const std::vector<double> targets{0.3, -0.2, 0.9, 0.1, 0.0};
  return param_gradcheck(
      phi,
      [&](std::span<const VarD> p) {
        const auto seq = nn::recurrent_sequence<double>(
            p, ptrs, nn::RecurrentState<double>::zeros(a.lstm_hidden));
        return meta::value_loss(seq.values, targets);
      },
      hook);
}

/// Reward LSTM unrolled step by step over 6 steps, weighted outputs summed.
inline double lstm_bptt_gradcheck(GradcheckHook hook = {}) {
  const auto a = tiny_arch();
  CounterRng rng(103);
  const auto eta = with_random_biases(nn::init_recurrent<double>(a, rng), rng);
  const auto hist = random_history(a, 6, rng);
  return param_gradcheck(
      eta,
      [&](std::span<const VarD> p) {
        auto s = nn::RecurrentState<double>::zeros(a.lstm_hidden);
        VarD total(Tensor<double>::scalar(0));
        double w = 1.0;
        for (const auto& f : hist) {
          auto out = nn::reward_forward<double>(p, f, s);
          total = add(total, scale(out.value, w));
          w *= -0.7;
          s = out.state;
        }
        return total;
      },
      hook);
}

// Meta-gradient toy: one outer window replayed with recorded actions so the
// objective is a smooth function of eta.

/// 3x3 single room, two episodes of at most five steps, N = 2, width 4.
inline meta::TrainSetup meta_toy_setup(meta::Objective objective = meta::Objective::Lifetime) {
  meta::TrainSetup s;
  s.domain = env::Domain::FixedABC;
  s.env.room_size = 3;
  s.env.episodes_per_lifetime = 2;
  s.env.time_limit = 5;
  s.arch.conv_filters = 4;
  s.arch.fc_hidden = 4;
  s.arch.lstm_hidden = 4;
  s.meta.outer_unroll = 2;
  s.meta.objective = objective;
  return s;
}

/// Larger variant: 5x5 room, three episodes of up to ten steps, N = 3.
inline meta::TrainSetup meta_small_setup(meta::Objective objective = meta::Objective::Lifetime) {
  auto s = meta_toy_setup(objective);
  s.env.room_size = 5;
  s.env.episodes_per_lifetime = 3;
  s.env.time_limit = 10;
  s.arch.conv_filters = 6;
  s.arch.fc_hidden = 8;
  s.arch.lstm_hidden = 8;
  s.meta.outer_unroll = 3;
  return s;
}

struct MetaToy {
  meta::TrainSetup setup;
  nn::Arch arch;
  env::TaskSpec task;
  ParamSet<double> theta0, eta, phi;
  std::vector<int> actions;
  std::uint64_t seed = 0;

  agent::LifetimeStream<double> stream() const {
    return agent::LifetimeStream<double>(task, setup.mode, CounterRng(seed).split(3),
                                         arch.lstm_hidden);
  }

  /// One outer window with theta0 and eta bound to `tape`, replaying
  /// `actions` once they have been recorded.
  meta::OuterStep<double> unroll(Tape<double>& tape, const ParamSet<double>& eta_values,
                                 std::vector<VarD>* eta_vars = nullptr) const {
    auto s = stream();
    const auto theta = bind(tape, theta0);
    const auto e = bind(tape, eta_values);
    const auto p = constants_of(phi);
    if (eta_vars) *eta_vars = e;
    return meta::unroll_outer_window<double>(s, theta, e, p, setup,
                                             actions.empty() ? nullptr : &actions);
  }
};

inline MetaToy make_meta_toy(const meta::TrainSetup& setup, std::uint64_t seed) {
  MetaToy toy;
  toy.setup = setup;
  toy.seed = seed;
  CounterRng rng(seed);
  toy.task = env::sample_task(setup.domain, rng, setup.env);
  toy.arch = nn::arch_for(toy.task, setup.mode, setup.arch);
  auto r = rng.split(7);
  toy.theta0 = nn::init_policy<double>(toy.arch, r);
  toy.eta = nn::init_reward<double>(toy.arch, setup.reward_input, r);
  toy.phi = nn::init_recurrent<double>(toy.arch, r);
  Tape<double> tape;
  const auto os = toy.unroll(tape, toy.eta);
  os.window.for_each_step([&](const auto& t) { toy.actions.push_back(t.action_index); });
  return toy;
}

struct MetaGradcheck {
  bool ok = false;
  double max_rel_error = 0;  // |a - n| / max(1, |n|) per entry
  double scaled_error = 0;   // max |a - n| / max |n|
  double grad_scale = 0;     // max |n|
  std::size_t entries = 0;
  std::size_t steps = 0;

  double error() const { return std::max(max_rel_error, scaled_error); }
  std::string detail() const {
    std::ostringstream os;
    os << "entries=" << entries << " steps=" << steps << " max_rel=" << max_rel_error
       << " scaled=" << scaled_error << " |grad|max=" << grad_scale;
    return os.str();
  }
};

/// Tape meta-gradient against central differences over every eta entry.
inline MetaGradcheck meta_gradient_fd(const MetaToy& toy, double tol = 1e-4,
                                      double step = 1e-5, GradcheckHook hook = {}) {
  MetaGradcheck out;
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<VarD> eta_vars;
    const auto os = toy.unroll(tape, toy.eta, &eta_vars);
    out.steps = os.window.steps();
    for (const auto& g : grad(os.objective, eta_vars)) analytic.push_back(g.value());
  }
  analytic = scaled(std::move(analytic), hook.analytic_scale);
  std::vector<Tensor<double>> inputs;
  for (std::size_t i = 0; i < toy.eta.size(); ++i) inputs.push_back(toy.eta[i]);
  const auto numeric = finite_difference<double>(
      [&](const std::vector<Tensor<double>>& x) {
        auto eta = toy.eta;
        for (std::size_t i = 0; i < x.size(); ++i) eta.set(i, x[i]);
        Tape<double> tape;
        return toy.unroll(tape, eta).objective.item();
      },
      inputs, step);

  out.max_rel_error = max_relative_error(analytic, numeric);
  double worst_abs = 0;
  for (std::size_t k = 0; k < numeric.size(); ++k)
    for (std::size_t i = 0; i < numeric[k].size(); ++i) {
      out.grad_scale = std::max(out.grad_scale, std::abs(numeric[k][i]));
      worst_abs = std::max(worst_abs, std::abs(analytic[k][i] - numeric[k][i]));
      ++out.entries;
    }
  out.scaled_error = out.grad_scale > 0 ? worst_abs / out.grad_scale : INFINITY;
  out.ok = out.max_rel_error < tol && out.scaled_error < tol && out.grad_scale > 0;
  return out;
}

// The suite as run from the command line.

struct GradcheckLine {
  std::string name;
  double error = 0;
  double threshold = 0;
  std::string detail;
  bool ok() const { return std::isfinite(error) && error < threshold; }
};

enum class GradcheckScale : std::uint8_t { Tiny, Small };

inline std::vector<GradcheckLine> run_gradcheck_suite(GradcheckScale scale,
                                                      GradcheckHook hook = {}) {
  std::vector<GradcheckLine> lines;
  CounterRng rng(42);
  for (const auto& c : primitive_cases()) {
    std::vector<Tensor<double>> xs;
    for (const auto& s : c.shapes) xs.push_back(random_tensor(s, rng, -1, 1, c.min_abs));
    const auto probe = make_probe(c.f, xs, rng);
    lines.push_back({std::string("primitive ") + c.name, first_order_error(probe, xs, hook),
                     1e-6, "first order"});
    lines.push_back({std::string("primitive ") + c.name + " (second order)",
                     second_order_error(probe, xs, rng, hook), 1e-5, "hessian-vector"});
  }
  lines.push_back({"policy loss", policy_loss_gradcheck(hook), 1e-6, ""});
  lines.push_back({"value loss", value_loss_gradcheck(hook), 1e-6, ""});
  lines.push_back({"lstm bptt 6 steps", lstm_bptt_gradcheck(hook), 1e-5, ""});

  auto meta_line = [&](std::string name, const meta::TrainSetup& setup, std::uint64_t seed) {
    const auto r = meta_gradient_fd(make_meta_toy(setup, seed), 1e-4, 1e-5, hook);
    lines.push_back({std::move(name), r.error(), 1e-4, r.detail()});
  };
  auto base = scale == GradcheckScale::Tiny ? meta_toy_setup() : meta_small_setup();
  meta_line("meta-gradient lifetime", base, 1);
  auto ff = base;
  ff.reward_input = nn::RewardInput::FeedForward;
  meta_line("meta-gradient feed-forward reward", ff, 2);
  auto epi = base;
  epi.meta.objective = meta::Objective::Episodic;
  meta_line("meta-gradient episodic objective", epi, 1);
  return lines;
}

}  // namespace irf::harness
