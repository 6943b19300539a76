// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bleu_oracle.hpp"
#include "ham/attention.hpp"
#include "ham/checks.hpp"
#include "ham/cli.hpp"
#include "ham/eval.hpp"
#include "ham/hierarchical.hpp"
#include "ham/random.hpp"
#include "ham/train.hpp"

using namespace ham;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict norm_upper_bound() {
  NormBoundConfig config;
  config.trials = 10000;
  config.seed = split_seed(1, stream_id("norm-bounds"));
  const auto start = std::chrono::steady_clock::now();
  const NormBoundReport r = check_norm_bounds(config);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {r.upper_violations == 0 && r.trials == 10000 && secs < 30.0,
          std::to_string(r.outputs_checked) + " outputs, " + std::to_string(r.upper_violations) +
              " violations, worst slack " + fmt(r.worst_upper_slack) + ", " + fmt(secs) + " s"};
}

Verdict lower_bound_counterexample() {
  const checks::VerifyReport r = checks::run_verify(1, 1);
  const auto& cx = r.norms.counterexample;
  // Oracle: both keys get score 0, so the output is (1,0)/2 + (-1,0)/2.
  const double out0 = 0.5 * 1.0 + 0.5 * -1.0, out1 = 0.0;
  const double norm = std::sqrt(out0 * out0 + out1 * out1);
  const bool recorded = r.to_json().dump().find("counterexample") != std::string::npos;
  return {r.norms.counterexample_violates_lower && cx.output_norm == norm && cx.bound == 1.0 && recorded,
          "output norm " + fmt(cx.output_norm) + " < min key norm " + fmt(cx.bound)};
}

Verdict reductions() {
  checks::ReductionConfig config;
  config.instances = 1000;
  config.seed = split_seed(1, stream_id("reductions"));
  const checks::ReductionReport r = checks::check_reductions(config);
  const bool ok = r.instances == 1000 && r.ham_v_one_hot < 1e-7 && r.ham_s_one_hot < 1e-7 &&
                  r.ham_v_depth1 < 1e-12 && r.ham_s_depth1 < 1e-12;
  return {ok, "one-hot ham_v " + fmt(r.ham_v_one_hot) + ", ham_s " + fmt(r.ham_s_one_hot) + "; d=1 ham_v " +
                  fmt(r.ham_v_depth1) + ", ham_s " + fmt(r.ham_s_depth1)};
}

Verdict gradients() {
  const auto start = std::chrono::steady_clock::now();
  const auto rows = checks::gradcheck_suite(checks::Scale::Tiny, 1, 100);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool ok = rows.size() == checks::gradcheck_ops().size() && secs < 120.0;
  double worst = 0.0;
  std::string failed;
  for (const auto& row : rows) {
    const double limit = row.op == "seq2seq_end_to_end" ? 1e-4 : 1e-5;
    ok = ok && row.instances == 100 && row.max_rel_error < limit;
    if (row.max_rel_error >= limit) failed += " " + row.op;
    worst = std::max(worst, row.max_rel_error);
  }
  return {ok, std::to_string(rows.size()) + " ops x 100 instances, worst " + fmt(worst) + ", " + fmt(secs) + " s" +
                  (failed.empty() ? "" : ", failed:" + failed)};
}

Verdict depth_sweep_trend() {
  const SweepConfig config = SweepConfig::from_json(nlohmann::json::parse(read_file(HAM_SWEEP_CONFIG)));
  const auto start = std::chrono::steady_clock::now();
  const SweepResult r = depth_sweep(config);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool ok = secs < 900.0 && r.summary.size() == config.depths.size();
  std::string detail;
  for (std::size_t i = 0; i < r.summary.size(); ++i) {
    detail += "d=" + std::to_string(r.summary[i].depth) + " " + fmt(r.summary[i].best_loss) + ", ";
    if (i > 0) ok = ok && r.summary[i].best_loss <= r.summary[i - 1].best_loss * (1.0 + config.tolerance);
  }
  return {ok, detail + fmt(secs) + " s"};
}

Verdict bleu() {
  Rng rng(split_seed(1, stream_id("bleu")));
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    TokenSeq cand(uniform_index(rng, 1, 12)), ref(uniform_index(rng, 1, 12));
    const std::size_t vocab = uniform_index(rng, 2, 6);
    for (int& t : cand) t = static_cast<int>(uniform_index(rng, 3, 2 + vocab));
    for (int& t : ref) t = static_cast<int>(uniform_index(rng, 3, 2 + vocab));
    worst = std::max(worst, std::abs(bleu2(cand, ref) - oracle::bleu2(cand, ref)));
  }
  const std::vector<TokenSeq> poem{{3, 4, 5, 6}, {7, 8, 9}, {4, 4, 6, 3, 5}, {9, 3}};
  const double perfect = averaged_bleu(poem, poem);
  return {worst <= 1e-12 && perfect == 1.0, "max diff " + fmt(worst) + ", perfect averaged " + fmt(perfect)};
}

Verdict degeneracy() {
  Rng rng(split_seed(1, stream_id("degeneracy")));
  double heads = 0.0, rows = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dk = uniform_index(rng, 2, 8), m = uniform_index(rng, 1, 6), n = uniform_index(rng, 1, 10);
    const Tensor q = uniform_tensor(rng, Shape{m, dk}, -3, 3);
    const Tensor k = uniform_tensor(rng, Shape{n, dk}, -3, 3);
    const Tensor v = uniform_tensor(rng, Shape{n, dk}, -3, 3);
    MultiHeadParams p;
    p.w_q = {Tensor::identity(dk)};
    p.w_k = {Tensor::identity(dk)};
    p.w_v = {Tensor::identity(dk)};
    p.w_o = Tensor::identity(dk);
    heads = std::max(heads, max_abs_diff(multi_head(q, k, v, p), sdp_attention(q, k, v)));

    const Tensor q1 = q.row(0).reshaped(Shape{1, dk});
    const Tensor single = sdp_attention(q1, k, k).reshaped(Shape{dk});
    rows = std::max(rows, max_abs_diff(single, vanilla_attention(Query(q.row(0)), KeySequence::from_rows(k))));
  }
  return {heads <= 1e-12 && rows <= 1e-12, "h=1 " + fmt(heads) + ", m=1 " + fmt(rows)};
}

Verdict sweep_determinism() {
  const fs::path dir = fs::temp_directory_path() / "ham_acceptance_sweep";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << R"({"task": "reverse", "pairs": 32, "eval_pairs": 8, "seq_len": 4,
    "payload_vocab": 5, "hidden": 6, "depths": [1, 2, 3], "restarts": 2, "epochs": 4, "batch_size": 8,
    "seed": 11, "threads": 2})";
  std::ostringstream sink;
  int codes[2];
  for (int run = 0; run < 2; ++run) {
    const std::string out = (dir / ("run" + std::to_string(run))).string();
    codes[run] = cli::run({"--config", (dir / "config.json").string(), "--out", out, "sweep"}, sink, sink);
  }
  const std::string a = read_file(dir / "run0" / "sweep.csv"), b = read_file(dir / "run1" / "sweep.csv");
  fs::remove_all(dir);
  const bool ran = codes[0] != cli::kUsageError && codes[1] != cli::kUsageError && !a.empty();
  return {ran && a == b, std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"1 norm upper bound", norm_upper_bound},
      {"2 lower-bound counterexample", lower_bound_counterexample},
      {"3 reduction identities", reductions},
      {"4 gradient checks", gradients},
      {"5 depth sweep monotone", depth_sweep_trend},
      {"6 bleu oracle", bleu},
      {"7 attention degeneracy", degeneracy},
      {"8 sweep determinism", sweep_determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
