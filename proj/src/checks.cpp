#include "ham/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "ham/attention.hpp"
#include "ham/autodiff.hpp"
#include "ham/model.hpp"
#include "ham/random.hpp"

namespace ham::checks {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<double> values(const Tensor& t);

ordered_json tensor_json(const Tensor& t) {
  ordered_json j;
  std::vector<std::size_t> shape;
  for (std::size_t i = 0; i < t.shape().rank(); ++i) shape.push_back(t.shape()[i]);
  j["shape"] = shape;
  j["data"] = values(t);
  return j;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_abs(const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); }

}  // namespace

ordered_json instance_json(const BoundInstance& instance) {
  ordered_json j;
  j["query"] = values(instance.query);
  j["keys_as_columns"] = tensor_json(instance.keys);
  j["level"] = instance.level;
  j["output_norm"] = instance.output_norm;
  j["bound"] = instance.bound;
  return j;
}

// ---- reductions ------------------------------------------------------

bool ReductionReport::pass(const ReductionConfig& config) const {
  return ham_v_one_hot < config.one_hot_tolerance && ham_s_one_hot < config.one_hot_tolerance &&
         ham_v_depth1 < config.exact_tolerance && ham_s_depth1 < config.exact_tolerance &&
         shift_invariance < config.exact_tolerance;
}

ReductionReport check_reductions(const ReductionConfig& config) {
  if (config.instances == 0) throw DomainError("check_reductions: instances must be at least 1");
  if (config.max_depth < 2) throw DomainError("check_reductions: max_depth must be at least 2");
  ReductionReport report;
  Rng rng(config.seed);
  const double lo = -config.entry_bound, hi = config.entry_bound;

  for (std::size_t i = 0; i < config.instances; ++i) {
    const std::size_t dk = uniform_index(rng, config.min_dim, config.max_dim);
    const std::size_t n = uniform_index(rng, config.min_length, config.max_length);
    const std::size_t depth = uniform_index(rng, 2, config.max_depth);
    const std::size_t level = uniform_index(rng, 1, depth);
    const Tensor q = uniform_tensor(rng, Shape{dk}, lo, hi);
    const Tensor rows = uniform_tensor(rng, Shape{n, dk}, lo, hi);
    const KeySequence keys = KeySequence::from_rows(rows);
    const HamWeights one_hot = HamWeights::one_hot(depth, level, config.one_hot_magnitude);

    const double v_err = max_abs(ham_v(Query(q), keys, one_hot), ham_v_levels(Query(q), keys, depth)[level - 1]);
    const double s_err = max_abs(ham_s(rows, one_hot), ham_s_levels(rows, depth)[level - 1]);
    const double v1 = max_abs(ham_v(Query(q), keys, HamWeights(1)), vanilla_attention(Query(q), keys));
    const double s1 = max_abs(ham_s(rows, HamWeights(1)), self_attention_layer(rows));

    const Tensor c = uniform_tensor(rng, Shape{depth}, -3.0, 3.0);
    const double shift = uniform_tensor(rng, Shape{1}, -50.0, 50.0)[0];
    const Tensor shifted = c + Tensor(Shape{depth}, shift);
    const double sh = max_abs(ham_v(Query(q), keys, HamWeights(c)), ham_v(Query(q), keys, HamWeights(shifted)));

    report.ham_v_one_hot = std::max(report.ham_v_one_hot, v_err);
    report.ham_s_one_hot = std::max(report.ham_s_one_hot, s_err);
    report.ham_v_depth1 = std::max(report.ham_v_depth1, v1);
    report.ham_s_depth1 = std::max(report.ham_s_depth1, s1);
    report.shift_invariance = std::max(report.shift_invariance, sh);
    ++report.instances;

    const bool bad = !(v_err < config.one_hot_tolerance) || !(s_err < config.one_hot_tolerance) ||
                     !(v1 < config.exact_tolerance) || !(s1 < config.exact_tolerance) ||
                     !(sh < config.exact_tolerance);
    if (bad && !report.first_failure) {
      ordered_json j;
      j["instance"] = i;
      j["depth"] = depth;
      j["level"] = level;
      j["query"] = values(q);
      j["keys_as_rows"] = tensor_json(rows);
      j["c"] = values(c);
      j["shift"] = shift;
      j["errors"] = {{"ham_v_one_hot", v_err}, {"ham_s_one_hot", s_err}, {"ham_v_depth1", v1},
                     {"ham_s_depth1", s1}, {"shift_invariance", sh}};
      report.first_failure = j;
    }
  }
  return report;
}

// ---- distributions ---------------------------------------------------

bool DistributionReport::pass() const {
  return worst_sum_error < 1e-12 && min_probability > 0.0 && worst_shift_error < 1e-12 &&
         worst_convexity_gap <= 1e-12;
}

DistributionReport check_distributions(std::size_t instances, std::uint64_t seed) {
  if (instances == 0) throw DomainError("check_distributions: instances must be at least 1");
  DistributionReport report;
  Rng rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = uniform_index(rng, 1, 32);
    const std::size_t dk = uniform_index(rng, 2, 16);
    const Tensor scores = uniform_tensor(rng, Shape{n}, -50.0, 50.0);
    const double shift = uniform_tensor(rng, Shape{1}, -100.0, 100.0)[0];
    const Tensor p = softmax_vec(scores);
    const Tensor p_shift = softmax_vec(scores + Tensor(Shape{n}, shift));

    const Tensor rows = uniform_tensor(rng, Shape{n, dk}, -3.0, 3.0);
    const KeySequence keys = KeySequence::from_rows(rows);
    const Tensor q = uniform_tensor(rng, Shape{dk}, -3.0, 3.0);
    const Tensor a = attention_distribution(keys, Query(q));
    const Tensor out = vanilla_attention(Query(q), keys);

    double sum_err = 0.0, min_p = 1.0;
    for (const Tensor* dist : {&p, &a}) {
      double s = 0.0;
      for (double v : dist->data()) {
        s += v;
        min_p = std::min(min_p, v);
      }
      sum_err = std::max(sum_err, std::abs(s - 1.0));
    }
    const double shift_err = max_abs(p, p_shift);

    // Convexity: each coordinate lies between the keys' extremes in it.
    double gap = 0.0;
    for (std::size_t c = 0; c < dk; ++c) {
      double lo = rows.at(0, c), hi = rows.at(0, c);
      for (std::size_t r = 1; r < n; ++r) {
        lo = std::min(lo, rows.at(r, c));
        hi = std::max(hi, rows.at(r, c));
      }
      gap = std::max({gap, lo - out[c], out[c] - hi});
    }

    report.worst_sum_error = std::max(report.worst_sum_error, sum_err);
    report.min_probability = std::min(report.min_probability, min_p);
    report.worst_shift_error = std::max(report.worst_shift_error, shift_err);
    report.worst_convexity_gap = std::max(report.worst_convexity_gap, gap);
    ++report.instances;

    if (!(sum_err < 1e-12 && min_p > 0.0 && shift_err < 1e-12 && gap <= 1e-12) &&
        !report.first_failure) {
      ordered_json j;
      j["instance"] = i;
      j["scores"] = values(scores);
      j["shift"] = shift;
      j["query"] = values(q);
      j["keys_as_rows"] = tensor_json(rows);
      report.first_failure = j;
    }
  }
  return report;
}

// ---- verify ----------------------------------------------------------

bool VerifyReport::pass() const {
  return norms.upper_bound_holds() && norms.equal_key_untight == 0 &&
         norms.counterexample_violates_lower && reductions.pass(reduction_config) &&
         distributions.pass();
}

VerifyReport run_verify(std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw DomainError("verify: trials must be at least 1");
  VerifyReport report;
  report.seed = seed;

  NormBoundConfig norm_config;
  norm_config.trials = trials;
  norm_config.seed = split_seed(seed, stream_id("norm-bounds"));
  report.norms = check_norm_bounds(norm_config);

  report.reduction_config.instances = std::min<std::size_t>(trials, 1000);
  report.reduction_config.seed = split_seed(seed, stream_id("reductions"));
  report.reductions = check_reductions(report.reduction_config);

  report.distributions =
      check_distributions(std::min<std::size_t>(trials, 1000), split_seed(seed, stream_id("distributions")));
  return report;
}

std::string VerifyReport::text() const {
  std::ostringstream out;
  auto status = [](bool ok) { return ok ? "PASS" : "FAIL"; };
  const ReductionConfig& rc = reduction_config;

  out << "hamctl verify (seed " << seed << ")\n\n";
  out << "[norm bound] " << norms.trials << " trials, " << norms.outputs_checked
      << " outputs checked (levels 1..10 and the mixture)\n";
  out << "  upper bound ||out|| <= max ||k_i|| + 1e-9: " << norms.upper_violations << " violations  "
      << status(norms.upper_bound_holds()) << "\n";
  out << "  worst slack (norm - bound): " << fmt("%.3e", norms.worst_upper_slack) << "\n";
  out << "  equal-key trials: " << norms.equal_key_trials << ", not tight: " << norms.equal_key_untight
      << "  " << status(norms.equal_key_untight == 0) << "\n";
  out << "  lower bound ||out|| >= min ||k_i|| broken at level 1 in " << norms.lower_violations << " of "
      << norms.trials << " trials (informational)\n";
  const BoundInstance& ce = norms.counterexample;
  out << "  counterexample K = [(1,0), (-1,0)], q = (0,1): output norm "
      << fmt("%.17g", ce.output_norm) << " < min ||k_i|| = " << fmt("%.17g", ce.bound) << "  "
      << (norms.counterexample_violates_lower ? "lower bound violated (expected)" : "NOT violated")
      << "\n\n";

  out << "[reductions] " << reductions.instances << " instances, depth 2.." << rc.max_depth
      << ", one-hot c_t = " << fmt("%g", rc.one_hot_magnitude) << "\n";
  out << "  ham_v one-hot vs level t   max |diff| " << fmt("%.3e", reductions.ham_v_one_hot) << " < "
      << fmt("%g", rc.one_hot_tolerance) << "  " << status(reductions.ham_v_one_hot < rc.one_hot_tolerance) << "\n";
  out << "  ham_s one-hot vs level t   max |diff| " << fmt("%.3e", reductions.ham_s_one_hot) << " < "
      << fmt("%g", rc.one_hot_tolerance) << "  " << status(reductions.ham_s_one_hot < rc.one_hot_tolerance) << "\n";
  out << "  ham_v d=1 vs vanilla       max |diff| " << fmt("%.3e", reductions.ham_v_depth1) << " < "
      << fmt("%g", rc.exact_tolerance) << "  " << status(reductions.ham_v_depth1 < rc.exact_tolerance) << "\n";
  out << "  ham_s d=1 vs self-attn     max |diff| " << fmt("%.3e", reductions.ham_s_depth1) << " < "
      << fmt("%g", rc.exact_tolerance) << "  " << status(reductions.ham_s_depth1 < rc.exact_tolerance) << "\n";
  out << "  ham_v c vs c + s           max |diff| " << fmt("%.3e", reductions.shift_invariance) << " < "
      << fmt("%g", rc.exact_tolerance) << "  " << status(reductions.shift_invariance < rc.exact_tolerance) << "\n\n";

  out << "[distributions] " << distributions.instances << " instances\n";
  out << "  max |sum p - 1|            " << fmt("%.3e", distributions.worst_sum_error) << "\n";
  out << "  min p                      " << fmt("%.3e", distributions.min_probability) << "\n";
  out << "  softmax shift max |diff|   " << fmt("%.3e", distributions.worst_shift_error) << "\n";
  out << "  convexity gap              " << fmt("%.3e", distributions.worst_convexity_gap) << "\n";
  out << "  " << status(distributions.pass()) << "\n\n";

  out << "result: " << (pass() ? "PASS" : "FAIL") << "\n";
  if (norms.first_upper_violation) {
    out << "first upper-bound violation: " << instance_json(*norms.first_upper_violation).dump() << "\n";
  }
  if (reductions.first_failure) out << "first reduction failure: " << reductions.first_failure->dump() << "\n";
  if (distributions.first_failure) {
    out << "first distribution failure: " << distributions.first_failure->dump() << "\n";
  }
  return out.str();
}

ordered_json VerifyReport::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["pass"] = pass();
  ordered_json n;
  n["trials"] = norms.trials;
  n["outputs_checked"] = norms.outputs_checked;
  n["upper_violations"] = norms.upper_violations;
  n["worst_upper_slack"] = norms.worst_upper_slack;
  n["lower_violations"] = norms.lower_violations;
  n["equal_key_trials"] = norms.equal_key_trials;
  n["equal_key_untight"] = norms.equal_key_untight;
  n["counterexample"] = instance_json(norms.counterexample);
  n["counterexample_violates_lower"] = norms.counterexample_violates_lower;
  n["first_upper_violation"] =
      norms.first_upper_violation ? instance_json(*norms.first_upper_violation) : ordered_json(nullptr);
  j["norm_bound"] = n;

  ordered_json r;
  r["instances"] = reductions.instances;
  r["ham_v_one_hot"] = reductions.ham_v_one_hot;
  r["ham_s_one_hot"] = reductions.ham_s_one_hot;
  r["ham_v_depth1"] = reductions.ham_v_depth1;
  r["ham_s_depth1"] = reductions.ham_s_depth1;
  r["shift_invariance"] = reductions.shift_invariance;
  r["pass"] = reductions.pass(reduction_config);
  r["first_failure"] = reductions.first_failure ? *reductions.first_failure : ordered_json(nullptr);
  j["reductions"] = r;

  ordered_json d;
  d["instances"] = distributions.instances;
  d["worst_sum_error"] = distributions.worst_sum_error;
  d["min_probability"] = distributions.min_probability;
  d["worst_shift_error"] = distributions.worst_shift_error;
  d["worst_convexity_gap"] = distributions.worst_convexity_gap;
  d["pass"] = distributions.pass();
  d["first_failure"] = distributions.first_failure ? *distributions.first_failure : ordered_json(nullptr);
  j["distributions"] = d;
  return j;
}

// ---- gradient checks -------------------------------------------------

Scale parse_scale(const std::string& name) {
  if (name == "tiny") return Scale::Tiny;
  if (name == "small") return Scale::Small;
  throw std::invalid_argument("unknown scale '" + name + "' (expected tiny or small)");
}

namespace {

struct Sizes {
  std::size_t max_extent;
  std::size_t max_depth;
  std::size_t hidden;
  std::size_t payload_vocab;
  std::size_t max_seq;
};

Sizes sizes_for(Scale scale) {
  if (scale == Scale::Tiny) return {4, 3, 3, 3, 3};
  return {8, 5, 5, 5, 4};
}

// One random instance: input tensors plus the scalar function of them.
struct Instance {
  std::vector<Tensor> inputs;
  ad::ScalarFn f;
};

using Maker = std::function<Instance(Rng&, const Sizes&)>;

Tensor rand_entries(Rng& rng, Shape shape) { return uniform_tensor(rng, shape, -2.0, 2.0); }

std::size_t extent(Rng& rng, const Sizes& s) { return uniform_index(rng, 1, s.max_extent); }

// Reduces a tensor-valued output to a scalar through a fixed random
// projection, so every output coordinate contributes a distinct weight.
ad::Var project(ad::Var out, const Tensor& weights) {
  return ad::dot(out, out.tape()->constant(weights));
}

Instance unary(Rng& rng, Shape shape, std::function<ad::Var(ad::Var)> op, Shape out_shape) {
  Tensor w = rand_entries(rng, out_shape);
  return {{rand_entries(rng, shape)},
          [op, w](ad::Tape&, std::span<const ad::Var> v) { return project(op(v[0]), w); }};
}

Instance binary(Rng& rng, Shape a, Shape b, std::function<ad::Var(ad::Var, ad::Var)> op, Shape out_shape) {
  Tensor w = rand_entries(rng, out_shape);
  return {{rand_entries(rng, a), rand_entries(rng, b)},
          [op, w](ad::Tape&, std::span<const ad::Var> v) { return project(op(v[0], v[1]), w); }};
}

Shape vec_or_mat(Rng& rng, const Sizes& s) {
  const std::size_t cols = extent(rng, s);
  if (uniform_index(rng, 0, 1) == 0) return Shape{cols};
  return Shape{extent(rng, s), cols};
}

std::vector<int> random_ids(Rng& rng, std::size_t count, std::size_t lo, std::size_t hi) {
  std::vector<int> ids(count);
  for (int& id : ids) id = static_cast<int>(uniform_index(rng, lo, hi));
  return ids;
}

ModelConfig tiny_model(Rng& rng, const Sizes& s) {
  ModelConfig config;
  config.vocab = s.payload_vocab + kFirstPayloadId;
  config.hidden = s.hidden;
  config.depth = uniform_index(rng, 1, s.max_depth);
  config.bidirectional = uniform_index(rng, 0, 1) == 1;
  return config;
}

std::vector<Tensor> random_parameters(Rng& rng, const Seq2SeqModel& model) {
  std::vector<Tensor> params;
  for (const auto& [name, tensor] : model.parameters()) params.push_back(rand_entries(rng, tensor->shape()));
  return params;
}

BoundGru gru_from(std::span<const ad::Var> v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
}

const std::vector<std::pair<std::string, Maker>>& makers() {
  static const std::vector<std::pair<std::string, Maker>> table = {
      {"add", [](Rng& r, const Sizes& s) { Shape sh = vec_or_mat(r, s); return binary(r, sh, sh, ad::add, sh); }},
      {"sub", [](Rng& r, const Sizes& s) { Shape sh = vec_or_mat(r, s); return binary(r, sh, sh, ad::sub, sh); }},
      {"mul", [](Rng& r, const Sizes& s) { Shape sh = vec_or_mat(r, s); return binary(r, sh, sh, ad::mul, sh); }},
      {"scale",
       [](Rng& r, const Sizes& s) {
         Shape sh = vec_or_mat(r, s);
         const double k = uniform_tensor(r, Shape{1}, -2.0, 2.0)[0];
         return unary(r, sh, [k](ad::Var x) { return ad::scale(x, k); }, sh);
       }},
      {"add_bias",
       [](Rng& r, const Sizes& s) {
         const std::size_t rows = extent(r, s), cols = extent(r, s);
         return binary(r, Shape{rows, cols}, Shape{cols}, ad::add_bias, Shape{rows, cols});
       }},
      {"matmul",
       [](Rng& r, const Sizes& s) {
         const std::size_t m = extent(r, s), k = extent(r, s), n = extent(r, s);
         return binary(r, Shape{m, k}, Shape{k, n}, ad::matmul, Shape{m, n});
       }},
      {"matvec",
       [](Rng& r, const Sizes& s) {
         const std::size_t m = extent(r, s), k = extent(r, s);
         return binary(r, Shape{m, k}, Shape{k}, ad::matvec, Shape{m});
       }},
      {"vecmat",
       [](Rng& r, const Sizes& s) {
         const std::size_t m = extent(r, s), k = extent(r, s);
         return binary(r, Shape{m}, Shape{m, k}, ad::vecmat, Shape{k});
       }},
      {"transpose",
       [](Rng& r, const Sizes& s) {
         const std::size_t m = extent(r, s), n = extent(r, s);
         return unary(r, Shape{m, n}, ad::transpose, Shape{n, m});
       }},
      {"concat",
       [](Rng& r, const Sizes& s) {
         const std::size_t a = extent(r, s), b = extent(r, s);
         if (uniform_index(r, 0, 1) == 0) return binary(r, Shape{a}, Shape{b}, ad::concat, Shape{a + b});
         const std::size_t rows = extent(r, s);
         return binary(r, Shape{rows, a}, Shape{rows, b}, ad::concat, Shape{rows, a + b});
       }},
      {"dot",
       [](Rng& r, const Sizes& s) {
         Shape sh = vec_or_mat(r, s);
         return Instance{{rand_entries(r, sh), rand_entries(r, sh)},
                         [](ad::Tape&, std::span<const ad::Var> v) { return ad::dot(v[0], v[1]); }};
       }},
      {"sum",
       [](Rng& r, const Sizes& s) {
         return Instance{{rand_entries(r, vec_or_mat(r, s))},
                         [](ad::Tape&, std::span<const ad::Var> v) { return ad::sum(v[0]); }};
       }},
      {"l2_norm",
       [](Rng& r, const Sizes& s) {
         return Instance{{rand_entries(r, vec_or_mat(r, s))},
                         [](ad::Tape&, std::span<const ad::Var> v) { return ad::l2_norm(v[0]); }};
       }},
      {"tanh", [](Rng& r, const Sizes& s) { Shape sh = vec_or_mat(r, s); return unary(r, sh, ad::tanh, sh); }},
      {"sigmoid", [](Rng& r, const Sizes& s) { Shape sh = vec_or_mat(r, s); return unary(r, sh, ad::sigmoid, sh); }},
      {"softmax", [](Rng& r, const Sizes& s) { Shape sh = vec_or_mat(r, s); return unary(r, sh, ad::softmax, sh); }},
      {"weighted_sum",
       [](Rng& r, const Sizes& s) {
         const std::size_t terms = extent(r, s);
         Shape sh = vec_or_mat(r, s);
         Instance inst;
         for (std::size_t t = 0; t < terms; ++t) inst.inputs.push_back(rand_entries(r, sh));
         inst.inputs.push_back(rand_entries(r, Shape{terms}));
         Tensor w = rand_entries(r, sh);
         inst.f = [terms, w](ad::Tape&, std::span<const ad::Var> v) {
           return project(ad::weighted_sum(v.first(terms), v[terms]), w);
         };
         return inst;
       }},
      {"embedding",
       [](Rng& r, const Sizes& s) {
         const std::size_t rows = extent(r, s), cols = extent(r, s), count = extent(r, s);
         const auto ids = random_ids(r, count, 0, rows - 1);
         return unary(r, Shape{rows, cols}, [ids](ad::Var t) { return ad::embedding(t, ids); },
                      Shape{count, cols});
       }},
      {"stack",
       [](Rng& r, const Sizes& s) {
         const std::size_t n = extent(r, s), b = extent(r, s), h = extent(r, s);
         Instance inst;
         for (std::size_t t = 0; t < n; ++t) inst.inputs.push_back(rand_entries(r, Shape{b, h}));
         Tensor w = rand_entries(r, Shape{b, n, h});
         inst.f = [w](ad::Tape&, std::span<const ad::Var> v) { return project(ad::stack(v), w); };
         return inst;
       }},
      {"batched_matvec",
       [](Rng& r, const Sizes& s) {
         const std::size_t b = extent(r, s), n = extent(r, s), h = extent(r, s);
         return binary(r, Shape{b, n, h}, Shape{b, h}, ad::batched_matvec, Shape{b, n});
       }},
      {"batched_vecmat",
       [](Rng& r, const Sizes& s) {
         const std::size_t b = extent(r, s), n = extent(r, s), h = extent(r, s);
         return binary(r, Shape{b, n}, Shape{b, n, h}, ad::batched_vecmat, Shape{b, h});
       }},
      {"cross_entropy",
       [](Rng& r, const Sizes& s) {
         const std::size_t b = extent(r, s), v = uniform_index(r, 2, s.max_extent + 1);
         const auto targets = random_ids(r, b, 0, v - 1);
         return Instance{{rand_entries(r, Shape{b, v})}, [targets](ad::Tape&, std::span<const ad::Var> x) {
                           return ad::cross_entropy(x[0], targets);
                         }};
       }},
      {"vanilla_attention",
       [](Rng& r, const Sizes& s) {
         const std::size_t dk = extent(r, s), n = extent(r, s);
         return binary(r, Shape{dk}, Shape{n, dk}, ad::vanilla_attention, Shape{dk});
       }},
      {"vanilla_attention_batched",
       [](Rng& r, const Sizes& s) {
         const std::size_t b = extent(r, s), dk = extent(r, s), n = extent(r, s);
         return binary(r, Shape{b, dk}, Shape{b, n, dk}, ad::vanilla_attention, Shape{b, dk});
       }},
      {"sdp_attention",
       [](Rng& r, const Sizes& s) {
         const std::size_t m = extent(r, s), n = extent(r, s), dk = extent(r, s), dv = extent(r, s);
         Instance inst{{rand_entries(r, Shape{m, dk}), rand_entries(r, Shape{n, dk}), rand_entries(r, Shape{n, dv})}, {}};
         Tensor w = rand_entries(r, Shape{m, dv});
         inst.f = [w](ad::Tape&, std::span<const ad::Var> v) { return project(ad::sdp_attention(v[0], v[1], v[2]), w); };
         return inst;
       }},
      {"self_attention_layer",
       [](Rng& r, const Sizes& s) {
         const std::size_t n = extent(r, s), dk = extent(r, s);
         return unary(r, Shape{n, dk}, ad::self_attention_layer, Shape{n, dk});
       }},
      {"multi_level_attention",
       [](Rng& r, const Sizes& s) {
         const std::size_t dk = extent(r, s), n = extent(r, s), d = uniform_index(r, 1, s.max_depth);
         return binary(r, Shape{dk}, Shape{n, dk},
                       [d](ad::Var q, ad::Var k) { return ad::multi_level_attention(q, k, d); }, Shape{dk});
       }},
      {"ham_v",
       [](Rng& r, const Sizes& s) {
         const std::size_t dk = extent(r, s), n = extent(r, s), d = uniform_index(r, 1, s.max_depth);
         Instance inst{{rand_entries(r, Shape{dk}), rand_entries(r, Shape{n, dk}), rand_entries(r, Shape{d})}, {}};
         Tensor w = rand_entries(r, Shape{dk});
         inst.f = [w](ad::Tape&, std::span<const ad::Var> v) { return project(ad::ham_v(v[0], v[1], v[2]), w); };
         return inst;
       }},
      {"ham_v_norm",
       [](Rng& r, const Sizes& s) {
         const std::size_t dk = extent(r, s), n = extent(r, s), d = uniform_index(r, 1, s.max_depth);
         return Instance{{rand_entries(r, Shape{dk}), rand_entries(r, Shape{n, dk}), rand_entries(r, Shape{d})},
                         [](ad::Tape&, std::span<const ad::Var> v) {
                           return ad::l2_norm(ad::ham_v(v[0], v[1], v[2]));
                         }};
       }},
      {"ham_s",
       [](Rng& r, const Sizes& s) {
         const std::size_t n = extent(r, s), dk = extent(r, s), d = uniform_index(r, 1, s.max_depth);
         return binary(r, Shape{n, dk}, Shape{d}, ad::ham_s, Shape{n, dk});
       }},
      {"gru_chain3",
       [](Rng& r, const Sizes& s) {
         const std::size_t b = extent(r, s), din = extent(r, s), h = s.hidden;
         Instance inst;
         const GruParams shapes = GruParams::zeros(din, h);
         for (const Tensor* p : {&shapes.w_z, &shapes.u_z, &shapes.b_z, &shapes.w_r, &shapes.u_r, &shapes.b_r,
                                 &shapes.w_h, &shapes.u_h, &shapes.b_h}) {
           inst.inputs.push_back(rand_entries(r, p->shape()));
         }
         for (int t = 0; t < 3; ++t) inst.inputs.push_back(rand_entries(r, Shape{b, din}));
         inst.inputs.push_back(rand_entries(r, Shape{b, h}));
         Tensor w = rand_entries(r, Shape{b, h});
         inst.f = [w](ad::Tape&, std::span<const ad::Var> v) {
           const BoundGru g = gru_from(v);
           ad::Var hidden = v[12];
           for (std::size_t t = 0; t < 3; ++t) hidden = gru_step(g, v[9 + t], hidden);
           return project(hidden, w);
         };
         return inst;
       }},
      {"decode_step",
       [](Rng& r, const Sizes& s) {
         auto model = std::make_shared<Seq2SeqModel>(tiny_model(r, s));
         const std::size_t b = extent(r, s), n = extent(r, s), h = s.hidden;
         Instance inst;
         inst.inputs = random_parameters(r, *model);
         const std::size_t np = inst.inputs.size();
         inst.inputs.push_back(rand_entries(r, Shape{b, h}));
         inst.inputs.push_back(rand_entries(r, Shape{b, n, h}));
         const auto prev = random_ids(r, b, 0, model->config.vocab - 1);
         Tensor w = rand_entries(r, Shape{b, model->config.vocab});
         Tensor w_h = rand_entries(r, Shape{b, h});
         inst.f = [model, np, prev, w, w_h](ad::Tape&, std::span<const ad::Var> v) {
           const BoundModel m = bind_parameters(*model, v.first(np));
           const DecoderStep step = decode_step(m, v[np], v[np + 1], prev);
           return project(step.logits, w) + project(step.hidden, w_h);
         };
         return inst;
       }},
      {"seq2seq_end_to_end",
       [](Rng& r, const Sizes& s) {
         auto model = std::make_shared<Seq2SeqModel>(tiny_model(r, s));
         const std::size_t src_len = uniform_index(r, 1, s.max_seq);
         const std::size_t tgt_len = uniform_index(r, 1, s.max_seq);
         const std::size_t hi = model->config.vocab - 1;
         auto pairs = std::make_shared<std::vector<SequencePair>>();
         for (int i = 0; i < 2; ++i) {
           pairs->push_back({random_ids(r, src_len, kFirstPayloadId, hi), random_ids(r, tgt_len, kFirstPayloadId, hi)});
         }
         Instance inst;
         inst.inputs = random_parameters(r, *model);
         inst.f = [model, pairs](ad::Tape&, std::span<const ad::Var> v) {
           const BoundModel m = bind_parameters(*model, v);
           const SequencePair* batch[] = {&(*pairs)[0], &(*pairs)[1]};
           return sequence_loss(m, batch);
         };
         return inst;
       }},
  };
  return table;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> names;
  for (const auto& [name, maker] : makers()) names.push_back(name);
  return names;
}

std::vector<GradRow> gradcheck_suite(Scale scale, std::uint64_t seed, std::size_t instances,
                                     const std::vector<std::string>& only) {
  if (instances == 0) throw DomainError("gradcheck: instances must be at least 1");
  for (const auto& name : only) {
    const auto names = gradcheck_ops();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw std::invalid_argument("gradcheck: unknown op '" + name + "'");
    }
  }
  const Sizes sizes = sizes_for(scale);
  std::vector<GradRow> rows;
  for (const auto& [name, maker] : makers()) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    GradRow row;
    row.op = name;
    row.threshold = name == "seq2seq_end_to_end" ? 1e-4 : 1e-5;
    Rng rng(split_seed(seed, stream_id(name)));
    for (std::size_t i = 0; i < instances; ++i) {
      const Instance inst = maker(rng, sizes);
      const ad::GradCheckResult res = ad::grad_check(inst.f, inst.inputs);
      if (i == 0 || res.max_rel_error > row.max_rel_error) {
        row.max_rel_error = res.max_rel_error;
        row.worst_instance = i;
        row.input = res.input;
        row.coordinate = res.coordinate;
      }
      ++row.instances;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string gradcheck_table(const std::vector<GradRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-26s %9s %13s %9s  %s\n", "op", "instances", "max_rel_err", "threshold",
                "status");
  out << line;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof line, "%-26s %9zu %13.3e %9.0e  %s", row.op.c_str(), row.instances,
                  row.max_rel_error, row.threshold, row.pass() ? "ok" : "FAIL");
    out << line;
    if (!row.pass()) {
      out << "  (instance " << row.worst_instance << ", input " << row.input << ", coordinate "
          << row.coordinate << ")";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace ham::checks
