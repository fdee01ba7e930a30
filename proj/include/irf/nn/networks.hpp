#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "irf/core/rng.hpp"
#include "irf/env/actions.hpp"
#include "irf/env/gridworld.hpp"
#include "irf/tensor/autodiff.hpp"
#include "irf/tensor/param_set.hpp"

namespace irf::nn {

/// Layer sizes shared by the policy, reward and value networks.
struct Arch {
  int channels = env::kNumChannels;
  int height = 5;
  int width = 5;
  int conv_filters = 16;
  int kernel = 3;
  int fc_hidden = 64;
  int lstm_hidden = 64;
  int num_actions = env::kBaseActions;  // policy head width
  int history_actions = env::kExtendedActions;  // one-hot width in features

  int flat_size() const { return conv_filters * height * width; }
  int feature_size() const { return fc_hidden + history_actions + 2; }
  friend bool operator==(const Arch&, const Arch&) = default;
};

enum class RewardInput : std::uint8_t { Lstm, FeedForward };

// Parameter order inside every ParamSet built here.
enum PolicyParam : std::size_t { kPConvW, kPConvB, kPFcW, kPFcB, kPHeadW, kPHeadB };
enum RecurrentParam : std::size_t {
  kRConvW,
  kRConvB,
  kRFcW,
  kRFcB,
  kRLstmWx,
  kRLstmWh,
  kRLstmB,
  kRHeadW,
  kRHeadB,
};
enum FeedForwardParam : std::size_t {
  kFConvW,
  kFConvB,
  kFFcW,
  kFFcB,
  kFHiddenW,
  kFHiddenB,
  kFHeadW,
  kFHeadB,
};

namespace detail {

template <class T>
Tensor<T> fan_in_uniform(Shape s, int fan_in, CounterRng& rng) {
  Tensor<T> t(s);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <class T>
void add_conv_trunk(ParamSet<T>& p, const Arch& a, CounterRng& rng) {
  const int k = a.kernel;
  p.add("conv.w", fan_in_uniform<T>({a.conv_filters, a.channels, k, k},
                                    a.channels * k * k, rng));
  p.add("conv.b", Tensor<T>(Shape{a.conv_filters}));
  p.add("fc.w",
        fan_in_uniform<T>({a.fc_hidden, a.flat_size()}, a.flat_size(), rng));
  p.add("fc.b", Tensor<T>(Shape{a.fc_hidden}));
}

}  // namespace detail

/// Policy parameters: Conv-FC trunk and an action-logit head.
template <class T>
ParamSet<T> init_policy(const Arch& a, CounterRng& rng) {
  ParamSet<T> p;
  detail::add_conv_trunk(p, a, rng);
  p.add("head.w",
        detail::fan_in_uniform<T>({a.num_actions, a.fc_hidden}, a.fc_hidden, rng));
  p.add("head.b", Tensor<T>(Shape{a.num_actions}));
  return p;
}

/// Reward or value parameters: Conv-FC embedding, LSTM, scalar head.
template <class T>
ParamSet<T> init_recurrent(const Arch& a, CounterRng& rng) {
  ParamSet<T> p;
  detail::add_conv_trunk(p, a, rng);
  const int h = a.lstm_hidden;
  p.add("lstm.wx", detail::fan_in_uniform<T>({4 * h, a.feature_size()},
                                             a.feature_size(), rng));
  p.add("lstm.wh", detail::fan_in_uniform<T>({4 * h, h}, h, rng));
  p.add("lstm.b", Tensor<T>(Shape{4 * h}));
  p.add("head.w", detail::fan_in_uniform<T>({1, h}, h, rng));
  p.add("head.b", Tensor<T>(Shape{1}));
  return p;
}

/// Stateless reward parameters for the feed-forward ablation.
template <class T>
ParamSet<T> init_feedforward(const Arch& a, CounterRng& rng) {
  ParamSet<T> p;
  detail::add_conv_trunk(p, a, rng);
  const int h = a.lstm_hidden;
  p.add("ff.w", detail::fan_in_uniform<T>({h, a.feature_size()},
                                          a.feature_size(), rng));
  p.add("ff.b", Tensor<T>(Shape{h}));
  p.add("head.w", detail::fan_in_uniform<T>({1, h}, h, rng));
  p.add("head.b", Tensor<T>(Shape{1}));
  return p;
}

template <class T>
ParamSet<T> init_reward(const Arch& a, RewardInput input, CounterRng& rng) {
  return input == RewardInput::Lstm ? init_recurrent<T>(a, rng)
                                    : init_feedforward<T>(a, rng);
}

namespace detail {

template <class T>
Var<T> ones(int rows, int cols) {
  return Var<T>(Tensor<T>(Shape{rows, cols}, T(1)));
}

template <class T>
Var<T> as_constant(Tensor<T> t) {
  return Var<T>(std::move(t));
}

/// im2col with zero padding k/2: one row per (observation, cell), one column
/// per (channel, kernel row, kernel column).
template <class T>
Tensor<T> patches(const std::vector<const env::Observation*>& obs, int channels, int k) {
  expects(!obs.empty(), "network input: empty batch");
  const auto& s0 = obs.front()->shape();
  if (s0.rank() != 3 || s0[0] != channels)
    throw ShapeError("observation must be (" + std::to_string(channels) +
                     ", height, width), got " + s0.str());
  const int H = s0[1], W = s0[2], pad = k / 2;
  const int B = static_cast<int>(obs.size());
  const int cols = channels * k * k;
  Tensor<T> out(Shape{B * H * W, cols});
  T* dst = out.data().data();
  for (int b = 0; b < B; ++b) {
    if (!(obs[static_cast<std::size_t>(b)]->shape() == s0))
      throw ShapeError("observation batch has mixed shapes");
    const double* src = obs[static_cast<std::size_t>(b)]->data().data();
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        T* row = dst + static_cast<std::size_t>((b * H + i) * W + j) * cols;
        for (int c = 0; c < channels; ++c)
          for (int di = 0; di < k; ++di) {
            const int y = i + di - pad;
            if (y < 0 || y >= H) continue;
            for (int dj = 0; dj < k; ++dj) {
              const int x = j + dj - pad;
              if (x < 0 || x >= W) continue;
              row[(c * k + di) * k + dj] =
                  static_cast<T>(src[static_cast<std::size_t>((c * H + y) * W + x)]);
            }
          }
      }
  }
  return out;
}

}  // namespace detail

/// relu(FC(relu(conv(obs)))) for a batch, using the first four entries of
/// `p`; returns (fc_hidden, batch).
template <class T>
Var<T> embed_columns(std::span<const Var<T>> p,
                     const std::vector<const env::Observation*>& obs) {
  const auto& w = p[0];
  if (w.shape().rank() != 4) throw ShapeError("conv weights must be rank 4");
  const int F = w.shape()[0], C = w.shape()[1], k = w.shape()[2];
  const int B = static_cast<int>(obs.size());
  const auto P = detail::as_constant(detail::patches<T>(obs, C, k));
  const int cells = P.shape()[0] / B;
  auto conv = matmul(P, reshape(w, Shape{F, C * k * k}), false, true);
  conv = relu(add(conv, matmul(detail::ones<T>(B * cells, 1), reshape(p[1], Shape{1, F}))));
  if (cells * F != p[2].shape()[1])
    throw ShapeError("observation " + obs.front()->shape().str() +
                     " does not match fc weights " + p[2].shape().str());
  const auto flat = reshape(conv, Shape{B, cells * F});
  const int hidden = p[2].shape()[0];
  return relu(add(matmul(p[2], flat, false, true),
                  matmul(reshape(p[3], Shape{hidden, 1}), detail::ones<T>(1, B))));
}

/// Single-observation embedding, shape (fc_hidden).
template <class T>
Var<T> conv_fc_embed(std::span<const Var<T>> p, const env::Observation& obs) {
  const auto e = embed_columns<T>(p, {&obs});
  return reshape(e, Shape{e.shape()[0]});
}

/// Action logits for a batch of observations, shape (batch, actions).
template <class T>
Var<T> policy_logit_rows(std::span<const Var<T>> theta,
                         const std::vector<const env::Observation*>& obs) {
  const auto e = embed_columns<T>(theta, obs);
  const int B = static_cast<int>(obs.size());
  const int A = theta[kPHeadW].shape()[0];
  return add(matmul(e, theta[kPHeadW], true, true),
             matmul(detail::ones<T>(B, 1), reshape(theta[kPHeadB], Shape{1, A})));
}

/// Action logits of the policy.
template <class T>
Var<T> policy_forward(std::span<const Var<T>> theta, const env::Observation& obs) {
  const auto rows = policy_logit_rows<T>(theta, {&obs});
  return reshape(rows, Shape{rows.shape()[1]});
}

template <class T>
Var<T> policy_forward(const std::vector<Var<T>>& theta,
                      const env::Observation& obs) {
  return policy_forward<T>(std::span<const Var<T>>(theta), obs);
}

/// Per-observation log-probabilities, each of shape (actions).
template <class T>
std::vector<Var<T>> policy_log_probs(std::span<const Var<T>> theta,
                                     const std::vector<const env::Observation*>& obs) {
  const auto rows = policy_logit_rows<T>(theta, obs);
  const int B = rows.shape()[0], A = rows.shape()[1];
  const auto flat = reshape(rows, Shape{B * A});
  std::vector<Var<T>> out;
  out.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) out.push_back(log_softmax(slice(flat, b * A, A)));
  return out;
}

template <class T>
struct ActionSample {
  int action = 0;
  Var<T> log_prob;  // shape (1)
  Var<T> entropy;   // shape (1)
};

/// Draws an action from softmax(logits) by inverse CDF; log-probability and
/// entropy stay on the tape.
template <class T>
ActionSample<T> sample_action(const Var<T>& logits, CounterRng& rng) {
  if (!logits.value().all_finite())
    throw NumericError("sample_action: non-finite logits");
  const auto lp = log_softmax(logits);
  const double u = rng.uniform();
  const int n = static_cast<int>(lp.size());
  int a = n - 1;
  double cdf = 0;
  for (int i = 0; i < n; ++i) {
    cdf += std::exp(static_cast<double>(lp.value()[static_cast<std::size_t>(i)]));
    if (u < cdf) {
      a = i;
      break;
    }
  }
  return {a, index_select(lp, {a}), entropy_from_log_probs(lp)};
}

/// One element of the lifetime history: s_{t+1}, a_t, r_{t+1}, d_{t+1}.
struct StepFeatures {
  env::Observation observation;
  int action = -1;  // -1 at lifetime start
  double extrinsic_reward = 0;
  bool done = false;
};

template <class T>
struct RecurrentState {
  Var<T> hidden;
  Var<T> cell;

  static RecurrentState zeros(int width) {
    return {Var<T>(Tensor<T>(Shape{width})), Var<T>(Tensor<T>(Shape{width}))};
  }
  RecurrentState detached() const { return {detach(hidden), detach(cell)}; }
};

template <class T>
struct RecurrentOutput {
  Var<T> value;  // shape (1)
  RecurrentState<T> state;
};

/// Outputs and states after each element of a history segment.
template <class T>
struct RecurrentSequence {
  std::vector<Var<T>> values;
  std::vector<RecurrentState<T>> states;
};

namespace detail {

template <class T>
Tensor<T> history_columns(const std::vector<const StepFeatures*>& f, int action_width) {
  const int B = static_cast<int>(f.size());
  Tensor<T> out(Shape{action_width + 2, B});
  for (int b = 0; b < B; ++b) {
    const auto& s = *f[static_cast<std::size_t>(b)];
    if (s.action >= 0) {
      expects(s.action < action_width, "history action exceeds one-hot width");
      out[static_cast<std::size_t>(s.action * B + b)] = T(1);
    }
    out[static_cast<std::size_t>(action_width * B + b)] = static_cast<T>(s.extrinsic_reward);
    out[static_cast<std::size_t>((action_width + 1) * B + b)] = s.done ? T(1) : T(0);
  }
  return out;
}

/// Embedding stacked over the other history features, shape (features, batch).
template <class T>
Var<T> feature_columns(std::span<const Var<T>> p, const std::vector<const StepFeatures*>& f,
                       int input_width) {
  std::vector<const env::Observation*> obs;
  obs.reserve(f.size());
  for (const auto* s : f) obs.push_back(&s->observation);
  const auto e = embed_columns<T>(p, obs);
  const int B = static_cast<int>(f.size());
  const int hidden = e.shape()[0];
  const int action_width = input_width - hidden - 2;
  if (action_width < 0)
    throw ShapeError("history input width " + std::to_string(input_width) +
                     " is smaller than the embedding");
  const auto h = as_constant(history_columns<T>(f, action_width));
  const auto stacked = concat<T>({reshape(e, Shape{hidden * B}),
                                  reshape(h, Shape{(action_width + 2) * B})});
  return reshape(stacked, Shape{input_width, B});
}

}  // namespace detail

/// LSTM over a segment of history features; returns the linear head output
/// and the state after each element.
template <class T>
RecurrentSequence<T> recurrent_sequence(std::span<const Var<T>> p,
                                        const std::vector<const StepFeatures*>& f,
                                        const RecurrentState<T>& s0) {
  expects(!f.empty(), "recurrent_sequence: empty segment");
  const int h = p[kRLstmWh].shape()[1];
  const int B = static_cast<int>(f.size());
  const auto x = detail::feature_columns<T>(p, f, p[kRLstmWx].shape()[1]);
  const auto gx = reshape(matmul(x, p[kRLstmWx], true, true), Shape{B * 4 * h});
  RecurrentSequence<T> out;
  out.values.reserve(f.size());
  out.states.reserve(f.size());
  RecurrentState<T> s = s0;
  for (int b = 0; b < B; ++b) {
    const auto gates =
        add(add(slice(gx, b * 4 * h, 4 * h), matmul(p[kRLstmWh], s.hidden)), p[kRLstmB]);
    const auto in_gate = sigmoid(slice(gates, 0, h));
    const auto forget_gate = sigmoid(slice(gates, h, h));
    const auto candidate = tanh(slice(gates, 2 * h, h));
    const auto out_gate = sigmoid(slice(gates, 3 * h, h));
    const auto cell = add(mul(forget_gate, s.cell), mul(in_gate, candidate));
    const auto hidden = mul(out_gate, tanh(cell));
    s = {hidden, cell};
    out.values.push_back(add(matmul(p[kRHeadW], hidden), p[kRHeadB]));
    out.states.push_back(s);
  }
  return out;
}

template <class T>
RecurrentOutput<T> recurrent_step(std::span<const Var<T>> p, const StepFeatures& f,
                                  const RecurrentState<T>& s) {
  auto seq = recurrent_sequence<T>(p, {&f}, s);
  return {seq.values[0], seq.states[0]};
}

/// Intrinsic reward arctan(head(LSTM(...))) in (-pi/2, pi/2).
template <class T>
RecurrentOutput<T> reward_forward(std::span<const Var<T>> eta, const StepFeatures& f,
                                  const RecurrentState<T>& s) {
  auto out = recurrent_step<T>(eta, f, s);
  out.value = arctan(out.value);
  return out;
}

/// Lifetime value estimate, unbounded.
template <class T>
RecurrentOutput<T> value_forward(std::span<const Var<T>> phi, const StepFeatures& f,
                                 const RecurrentState<T>& s) {
  return recurrent_step<T>(phi, f, s);
}

/// Stateless intrinsic rewards, one per element, each shape (1).
template <class T>
std::vector<Var<T>> feed_forward_rewards(std::span<const Var<T>> eta,
                                         const std::vector<const StepFeatures*>& f) {
  expects(!f.empty(), "feed_forward_rewards: empty segment");
  const int B = static_cast<int>(f.size());
  const int h = eta[kFHiddenW].shape()[0];
  const auto x = detail::feature_columns<T>(eta, f, eta[kFHiddenW].shape()[1]);
  const auto hidden =
      relu(add(matmul(eta[kFHiddenW], x),
               matmul(reshape(eta[kFHiddenB], Shape{h, 1}), detail::ones<T>(1, B))));
  const auto out = arctan(reshape(
      add(matmul(eta[kFHeadW], hidden), matmul(eta[kFHeadB], detail::ones<T>(1, B))),
      Shape{B}));
  std::vector<Var<T>> r;
  r.reserve(f.size());
  for (int b = 0; b < B; ++b) r.push_back(slice(out, b, 1));
  return r;
}

template <class T>
Var<T> feed_forward_reward_forward(std::span<const Var<T>> eta, const StepFeatures& f) {
  return feed_forward_rewards<T>(eta, {&f})[0];
}

/// Intrinsic rewards of either network kind over a history segment; the
/// feed-forward variant passes its recurrent state through unchanged.
template <class T>
RecurrentSequence<T> intrinsic_rewards(RewardInput input, std::span<const Var<T>> eta,
                                       const std::vector<const StepFeatures*>& f,
                                       const RecurrentState<T>& s) {
  if (input == RewardInput::Lstm) {
    auto seq = recurrent_sequence<T>(eta, f, s);
    for (auto& v : seq.values) v = arctan(v);
    return seq;
  }
  RecurrentSequence<T> seq;
  seq.values = feed_forward_rewards<T>(eta, f);
  seq.states.assign(f.size(), s);
  return seq;
}

template <class T>
RecurrentOutput<T> intrinsic_reward(RewardInput input, std::span<const Var<T>> eta,
                                    const StepFeatures& f, const RecurrentState<T>& s) {
  auto seq = intrinsic_rewards<T>(input, eta, {&f}, s);
  return {seq.values[0], seq.states[0]};
}

/// Architecture for a domain's grid and an action mode.
inline Arch arch_for(const env::TaskSpec& task, env::ActionMode mode,
                     Arch base = {}) {
  base.height = task.layout->height;
  base.width = task.layout->width;
  base.num_actions = env::action_count(mode);
  return base;
}

}  // namespace irf::nn
