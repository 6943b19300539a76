#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ham/hierarchical.hpp"
#include "ham/tensor.hpp"

// Randomized verification suites behind `hamctl verify` and
// `hamctl gradcheck`. Every suite is a pure function of its arguments.

namespace ham::checks {

// ---- reductions ------------------------------------------------------

struct ReductionConfig {
  std::size_t instances = 1000;
  std::size_t min_dim = 2, max_dim = 16;
  std::size_t min_length = 1, max_length = 32;
  /// Depths are drawn from [2, max_depth]. The residual weight on the other
  /// levels is about (d - 1) e^-20 times their distance to the chosen level,
  /// which stays below 1e-7 for d <= 6 with entries in [-3, 3].
  std::size_t max_depth = 6;
  double entry_bound = 3.0;
  double one_hot_magnitude = 20.0;
  double one_hot_tolerance = 1e-7;
  double exact_tolerance = 1e-12;
  std::uint64_t seed = 0;
};

struct ReductionReport {
  std::size_t instances = 0;
  double ham_v_one_hot = 0.0;  ///< worst ||ham_v - level t||_inf
  double ham_s_one_hot = 0.0;
  double ham_v_depth1 = 0.0;  ///< worst ||ham_v(d=1) - vanilla||_inf
  double ham_s_depth1 = 0.0;
  double shift_invariance = 0.0;  ///< worst ||ham_v(c) - ham_v(c + s)||_inf
  std::optional<nlohmann::ordered_json> first_failure;

  bool pass(const ReductionConfig& config) const;
};

ReductionReport check_reductions(const ReductionConfig& config);

// ---- softmax / attention distributions -------------------------------

struct DistributionReport {
  std::size_t instances = 0;
  double worst_sum_error = 0.0;   ///< max |sum p - 1|
  double min_probability = 1.0;   ///< smallest entry seen
  double worst_shift_error = 0.0;  ///< max ||softmax(x + s) - softmax(x)||_inf
  double worst_convexity_gap = 0.0;  ///< vanilla output outside the keys' bounding box
  std::optional<nlohmann::ordered_json> first_failure;

  bool pass() const;
};

DistributionReport check_distributions(std::size_t instances, std::uint64_t seed);

// ---- full verify run -------------------------------------------------

struct VerifyReport {
  NormBoundReport norms;
  ReductionReport reductions;
  ReductionConfig reduction_config;
  DistributionReport distributions;
  std::uint64_t seed = 0;

  bool pass() const;
  /// Human-readable report; depends only on the inputs of run_verify.
  std::string text() const;
  nlohmann::ordered_json to_json() const;
};

/// `trials` random instances for the norm bounds; min(trials, 1000) each for
/// the reductions and distribution checks.
VerifyReport run_verify(std::size_t trials, std::uint64_t seed);

nlohmann::ordered_json instance_json(const BoundInstance& instance);

// ---- gradient checks -------------------------------------------------

enum class Scale { Tiny, Small };
Scale parse_scale(const std::string& name);

struct GradRow {
  std::string op;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  double threshold = 1e-5;
  std::size_t worst_instance = 0;
  std::size_t input = 0;
  std::size_t coordinate = 0;

  bool pass() const { return max_rel_error < threshold; }
};

/// Names of the checked operations, in table order.
std::vector<std::string> gradcheck_ops();

/// Runs `instances` random instances of every op (entries in [-2, 2]).
/// `only`, when non-empty, restricts the run to the named ops.
std::vector<GradRow> gradcheck_suite(Scale scale, std::uint64_t seed, std::size_t instances,
                                     const std::vector<std::string>& only = {});

std::string gradcheck_table(const std::vector<GradRow>& rows);

}  // namespace ham::checks
