#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "orpo/lm.hpp"

namespace orpo {

struct TensorRef {
  std::string name;
  Eigen::Map<Eigen::VectorXd> data;
};

std::vector<TensorRef> tensors(Params<double>& p);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with decoupled weight decay and bias-corrected moments. Moment
/// buffers are allocated on the first step from the parameter shapes.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Applies one update and zeroes `grads`. Throws std::runtime_error naming
  /// the tensor if any gradient entry is non-finite (parameters untouched).
  void step(std::span<TensorRef> params, std::span<TensorRef> grads, double lr);

  std::uint64_t steps() const { return steps_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<Eigen::VectorXd>& first_moments() const { return m_; }
  const std::vector<Eigen::VectorXd>& second_moments() const { return v_; }

 private:
  AdamWConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Eigen::VectorXd> m_;
  std::vector<Eigen::VectorXd> v_;
};

void optimizer_step(TinyLM<double>& model, GradBlock<double>& grads, AdamW& opt, double lr);

}  // namespace orpo
