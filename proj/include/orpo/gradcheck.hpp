#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace orpo {

struct GradCheckSuite {
  std::string name;
  std::size_t checks = 0;
  double max_rel_err = 0;
  double tolerance = 0;
  std::string worst_case;  // description of the input with the largest error
  bool pass() const { return max_rel_err < tolerance; }
};

struct GradCheckOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  double scalar_tolerance = 1e-6;   // sequence-level partials, h = 1e-7
  double network_tolerance = 1e-4;  // through the network, h = 1e-5
  std::size_t coords_per_model = 50;
  std::size_t network_trials = 10;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Analytic-vs-central-difference suites: odds-ratio partials, probability
/// ratio partials, DPO partials, full-parameter ORPO gradient through a
/// TinyLM, reward head and reward backbone gradients.
std::vector<GradCheckSuite> run_gradcheck(const GradCheckOptions& opts);

nlohmann::json gradcheck_json(const std::vector<GradCheckSuite>& suites);

}  // namespace orpo
