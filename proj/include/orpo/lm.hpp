#pragma once

// Fixed-window neural language model:
//   window embeddings -> concat -> tanh hidden layer -> softmax over vocab.
// Forward and backward passes are written out by hand so gradients are exact.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "orpo/rng.hpp"
#include "orpo/vocab.hpp"

namespace orpo {

struct LMConfig {
  std::uint32_t vocab_size = 1;
  std::uint32_t embed_dim = 16;
  std::uint32_t hidden_dim = 32;
  std::uint32_t context_window = 4;
  std::uint32_t seed = 0;
  TokenId pad_id = 0;

  void validate() const {
    if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1 || context_window < 1) {
      throw std::invalid_argument("LMConfig: all sizes must be >= 1");
    }
    if (pad_id < 0 || static_cast<std::uint32_t>(pad_id) >= vocab_size) {
      throw std::invalid_argument("LMConfig: pad_id out of range");
    }
  }
  std::size_t window_width() const { return std::size_t{context_window} * embed_dim; }
};

/// One parameter block. Used for the model weights, for gradient accumulators
/// and for optimizer moments, so all three share shapes by construction.
template <typename Scalar>
struct Params {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Map = Eigen::Map<Vector>;
  using ConstMap = Eigen::Map<const Vector>;

  Matrix embedding;       // vocab x embed
  Matrix hidden_weights;  // (window * embed) x hidden
  Vector hidden_bias;     // hidden
  Matrix output_weights;  // hidden x vocab
  Vector output_bias;     // vocab

  static Params zeros(const LMConfig& c) {
    Params p;
    p.embedding = Matrix::Zero(c.vocab_size, c.embed_dim);
    p.hidden_weights = Matrix::Zero(static_cast<Eigen::Index>(c.window_width()), c.hidden_dim);
    p.hidden_bias = Vector::Zero(c.hidden_dim);
    p.output_weights = Matrix::Zero(c.hidden_dim, c.vocab_size);
    p.output_bias = Vector::Zero(c.vocab_size);
    return p;
  }

  /// Visits every tensor as a flat vector, in declaration order.
  template <typename F>
  void for_each(F&& f) {
    f("embedding", Map(embedding.data(), embedding.size()));
    f("hidden_weights", Map(hidden_weights.data(), hidden_weights.size()));
    f("hidden_bias", Map(hidden_bias.data(), hidden_bias.size()));
    f("output_weights", Map(output_weights.data(), output_weights.size()));
    f("output_bias", Map(output_bias.data(), output_bias.size()));
  }
  template <typename F>
  void for_each(F&& f) const {
    f("embedding", ConstMap(embedding.data(), embedding.size()));
    f("hidden_weights", ConstMap(hidden_weights.data(), hidden_weights.size()));
    f("hidden_bias", ConstMap(hidden_bias.data(), hidden_bias.size()));
    f("output_weights", ConstMap(output_weights.data(), output_weights.size()));
    f("output_bias", ConstMap(output_bias.data(), output_bias.size()));
  }

  Eigen::Index size() const {
    return embedding.size() + hidden_weights.size() + hidden_bias.size() + output_weights.size() +
           output_bias.size();
  }

  void set_zero() {
    for_each([](const char*, Map m) { m.setZero(); });
  }

  bool same_shape(const Params& o) const {
    return embedding.rows() == o.embedding.rows() && embedding.cols() == o.embedding.cols() &&
           hidden_weights.rows() == o.hidden_weights.rows() &&
           hidden_weights.cols() == o.hidden_weights.cols() && hidden_bias.size() == o.hidden_bias.size() &&
           output_weights.rows() == o.output_weights.rows() &&
           output_weights.cols() == o.output_weights.cols() && output_bias.size() == o.output_bias.size();
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const char*, ConstMap m) { ok = ok && m.allFinite(); });
    return ok;
  }

  /// Flat coefficient access across all tensors (declaration order).
  Scalar& flat(Eigen::Index k) {
    Scalar* out = nullptr;
    for_each([&](const char*, Map m) {
      if (out == nullptr && k < m.size()) out = &m[k];
      else if (out == nullptr) k -= m.size();
    });
    if (out == nullptr) throw std::out_of_range("flat parameter index");
    return *out;
  }
};

template <typename Scalar>
using GradBlock = Params<Scalar>;

/// Cached activations for one prediction position.
template <typename Scalar>
struct WindowActivation {
  using Vector = typename Params<Scalar>::Vector;
  std::vector<TokenId> window;  // context_window ids, left-padded
  Vector concat;                // window embeddings stacked
  Vector hidden;                // tanh output
};

template <typename Scalar = double>
class TinyLM {
 public:
  using Vector = typename Params<Scalar>::Vector;
  using Matrix = typename Params<Scalar>::Matrix;

  TinyLM() = default;

  /// Embedding and hidden weights ~ U(-0.08, 0.08) from config.seed; hidden
  /// bias and the whole output layer start at zero, so step-0 predictions
  /// are exactly uniform.
  explicit TinyLM(const LMConfig& config) : config_(config), params_(Params<Scalar>::zeros(config)) {
    config_.validate();
    Rng rng = make_rng({config.seed, 0x6c6d});
    auto fill = [&](Matrix& m) {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = Scalar(uniform_range(rng, -0.08, 0.08));
    };
    fill(params_.embedding);
    fill(params_.hidden_weights);
  }

  TinyLM(const LMConfig& config, Params<Scalar> params) : config_(config), params_(std::move(params)) {
    config_.validate();
    if (!params_.same_shape(Params<Scalar>::zeros(config_))) {
      throw std::invalid_argument("TinyLM: parameter shapes do not match config");
    }
  }

  const LMConfig& config() const { return config_; }
  const Params<Scalar>& params() const { return params_; }
  Params<Scalar>& params() { return params_; }
  GradBlock<Scalar> zero_grads() const { return Params<Scalar>::zeros(config_); }

  /// The last context_window ids of `context`, left-padded with pad_id.
  std::vector<TokenId> window_of(std::span<const TokenId> context) const {
    const std::size_t w = config_.context_window;
    std::vector<TokenId> ids(w, config_.pad_id);
    const std::size_t take = std::min(w, context.size());
    for (std::size_t i = 0; i < take; ++i) {
      TokenId id = context[context.size() - take + i];
      if (id < 0 || static_cast<std::uint32_t>(id) >= config_.vocab_size) {
        throw std::out_of_range("token out of range");
      }
      ids[w - take + i] = id;
    }
    return ids;
  }

  WindowActivation<Scalar> activate(std::span<const TokenId> context) const {
    WindowActivation<Scalar> a;
    a.window = window_of(context);
    const Eigen::Index d = config_.embed_dim;
    a.concat.resize(static_cast<Eigen::Index>(config_.window_width()));
    for (std::size_t s = 0; s < a.window.size(); ++s) {
      a.concat.segment(static_cast<Eigen::Index>(s) * d, d) = params_.embedding.row(a.window[s]).transpose();
    }
    a.hidden = (params_.hidden_weights.transpose() * a.concat + params_.hidden_bias).array().tanh().matrix();
    return a;
  }

  Vector logits(const WindowActivation<Scalar>& a) const {
    return params_.output_weights.transpose() * a.hidden + params_.output_bias;
  }

  /// log-softmax over the vocabulary for the next token after `context`.
  Vector next_token_logprobs(std::span<const TokenId> context) const { return log_softmax(logits(activate(context))); }

  static Vector log_softmax(const Vector& z) {
    const Scalar mx = z.maxCoeff();
    const Scalar lse = mx + std::log((z.array() - mx).exp().sum());
    return (z.array() - lse).matrix();
  }

  /// Backpropagates d(loss)/d(hidden) of one window into hidden and
  /// embedding parameters.
  void backward_hidden(const WindowActivation<Scalar>& a, const Vector& d_hidden, GradBlock<Scalar>& g) const {
    const Vector d_pre = (d_hidden.array() * (Scalar(1) - a.hidden.array().square())).matrix();
    g.hidden_weights.noalias() += a.concat * d_pre.transpose();
    g.hidden_bias += d_pre;
    const Vector d_concat = params_.hidden_weights * d_pre;
    const Eigen::Index d = config_.embed_dim;
    for (std::size_t s = 0; s < a.window.size(); ++s) {
      g.embedding.row(a.window[s]) += d_concat.segment(static_cast<Eigen::Index>(s) * d, d).transpose();
    }
  }

 private:
  LMConfig config_;
  Params<Scalar> params_;
};

/// Length-normalized sequence score. prob() is the geometric mean of the
/// per-token probabilities.
template <typename Scalar = double>
struct SeqScore {
  Scalar avg_logp = 0;
  Scalar sum_logp = 0;
  int length = 0;

  static SeqScore from_avg(Scalar avg, int len) { return {avg, avg * Scalar(len), len}; }
  Scalar prob() const { return std::exp(avg_logp); }
};

namespace detail {
inline Tokens concat(std::span<const TokenId> x, std::span<const TokenId> y) {
  Tokens seq(x.begin(), x.end());
  seq.insert(seq.end(), y.begin(), y.end());
  return seq;
}
}  // namespace detail

/// Teacher-forced score of y given prefix x.
template <typename Scalar>
SeqScore<Scalar> seq_score(const TinyLM<Scalar>& m, std::span<const TokenId> x, std::span<const TokenId> y) {
  if (y.empty()) throw std::invalid_argument("empty target");
  const Tokens seq = detail::concat(x, y);
  Scalar sum = 0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const auto lp = m.next_token_logprobs(std::span<const TokenId>(seq.data(), x.size() + t));
    const TokenId target = y[t];
    if (target < 0 || static_cast<std::uint32_t>(target) >= m.config().vocab_size) {
      throw std::out_of_range("token out of range");
    }
    sum += lp[target];
  }
  const int len = static_cast<int>(y.size());
  return {sum / Scalar(len), sum, len};
}

/// grads += upstream_scale * d(avg_logp(y | x)) / d(theta).
template <typename Scalar>
void backward_seq_logp(const TinyLM<Scalar>& m, std::span<const TokenId> x, std::span<const TokenId> y,
                       Scalar upstream_scale, GradBlock<Scalar>& grads) {
  if (y.empty()) throw std::invalid_argument("empty target");
  if (!grads.same_shape(m.params())) throw std::invalid_argument("gradient block shape mismatch");
  if (upstream_scale == Scalar(0)) return;
  const Tokens seq = detail::concat(x, y);
  const Scalar per_token = upstream_scale / Scalar(y.size());
  const auto& p = m.params();
  using Vector = typename TinyLM<Scalar>::Vector;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const auto a = m.activate(std::span<const TokenId>(seq.data(), x.size() + t));
    const Vector lp = TinyLM<Scalar>::log_softmax(m.logits(a));
    // d log p(target) / d logits = onehot - softmax
    Vector d_logits = -lp.array().exp().matrix() * per_token;
    d_logits[y[t]] += per_token;
    grads.output_weights.noalias() += a.hidden * d_logits.transpose();
    grads.output_bias += d_logits;
    const Vector d_hidden = p.output_weights * d_logits;
    m.backward_hidden(a, d_hidden, grads);
  }
}

/// Mean hidden activation over the windows ending at each token of y
/// (prefix x supplies left context). Feature extractor for reward heads and
/// response embeddings.
template <typename Scalar>
typename TinyLM<Scalar>::Vector response_features(const TinyLM<Scalar>& m, std::span<const TokenId> x,
                                                  std::span<const TokenId> y) {
  if (y.empty()) throw std::invalid_argument("empty target");
  const Tokens seq = detail::concat(x, y);
  typename TinyLM<Scalar>::Vector mean = TinyLM<Scalar>::Vector::Zero(m.config().hidden_dim);
  for (std::size_t t = 0; t < y.size(); ++t) {
    mean += m.activate(std::span<const TokenId>(seq.data(), x.size() + t + 1)).hidden;
  }
  return mean / Scalar(y.size());
}

/// grads += d(upstream . response_features(x, y)) / d(theta).
template <typename Scalar>
void backward_response_features(const TinyLM<Scalar>& m, std::span<const TokenId> x, std::span<const TokenId> y,
                                const typename TinyLM<Scalar>::Vector& upstream, GradBlock<Scalar>& grads) {
  if (y.empty()) throw std::invalid_argument("empty target");
  if (!grads.same_shape(m.params())) throw std::invalid_argument("gradient block shape mismatch");
  const Tokens seq = detail::concat(x, y);
  const typename TinyLM<Scalar>::Vector per_pos = upstream / Scalar(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) {
    const auto a = m.activate(std::span<const TokenId>(seq.data(), x.size() + t + 1));
    m.backward_hidden(a, per_pos, grads);
  }
}

/// Ancestral sampling with temperature-scaled logits. Stops after emitting
/// eos or max_len tokens; the eos token, when sampled, is kept.
template <typename Scalar>
Tokens generate(const TinyLM<Scalar>& m, std::span<const TokenId> prompt, double temperature, std::size_t max_len,
                std::uint64_t rng_seed, TokenId eos_id) {
  if (!(temperature > 0)) throw std::invalid_argument("temperature must be > 0");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  Rng rng = make_rng({rng_seed, 0x67656e});
  Tokens seq(prompt.begin(), prompt.end());
  Tokens out;
  while (out.size() < max_len) {
    const auto lp = m.next_token_logprobs(seq);
    Eigen::ArrayXd z = lp.template cast<double>().array() / temperature;
    z = (z - z.maxCoeff()).exp();
    const double u = uniform_open01(rng) * z.sum();
    double acc = 0;
    TokenId pick = static_cast<TokenId>(z.size() - 1);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      acc += z[i];
      if (u < acc) {
        pick = static_cast<TokenId>(i);
        break;
      }
    }
    out.push_back(pick);
    seq.push_back(pick);
    if (pick == eos_id) break;
  }
  return out;
}

}  // namespace orpo
