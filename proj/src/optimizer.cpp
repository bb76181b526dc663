#include "orpo/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace orpo {

std::vector<TensorRef> tensors(Params<double>& p) {
  std::vector<TensorRef> out;
  p.for_each([&](const char* name, Eigen::Map<Eigen::VectorXd> m) { out.push_back({name, m}); });
  return out;
}

void AdamW::step(std::span<TensorRef> params, std::span<TensorRef> grads, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("AdamW: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].data.size() != grads[i].data.size()) {
      throw std::invalid_argument("AdamW: shape mismatch in " + params[i].name);
    }
    if (!grads[i].data.allFinite()) throw std::runtime_error("non-finite gradient in " + grads[i].name);
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Eigen::VectorXd::Zero(p.data.size()));
      v_.push_back(Eigen::VectorXd::Zero(p.data.size()));
    }
  } else if (m_.size() != params.size()) {
    throw std::invalid_argument("AdamW: parameter set changed between steps");
  }
  ++steps_;
  const auto t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    auto& g = grads[i].data;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    if (config_.weight_decay != 0.0) p *= 1.0 - lr * config_.weight_decay;
    p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
    g.setZero();
  }
}

void optimizer_step(TinyLM<double>& model, GradBlock<double>& grads, AdamW& opt, double lr) {
  if (!grads.same_shape(model.params())) throw std::invalid_argument("gradient block shape mismatch");
  auto p = tensors(model.params());
  auto g = tensors(grads);
  opt.step(p, g, lr);
}

}  // namespace orpo
