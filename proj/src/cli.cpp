#include "ham/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ham/checks.hpp"
#include "ham/data.hpp"
#include "ham/eval.hpp"
#include "ham/model.hpp"
#include "ham/random.hpp"
#include "ham/train.hpp"

namespace ham::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Bad flags, config values or input paths; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string config;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

json load_config(const std::string& path, const std::set<std::string>& known) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path + " must hold a JSON object");
  if (!known.empty()) {
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw UsageError("config " + path + ": unknown key '" + key + "'");
    }
  }
  return j;
}

// Config value for `key` unless the flag was given on the command line.
template <typename T>
void merge(T& field, const json& cfg, const char* key, const CLI::Option* flag) {
  if (flag && flag->count() > 0) return;
  if (!cfg.contains(key)) return;
  try {
    field = cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

fs::path out_dir(const Globals& g) {
  fs::path dir(g.out);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw UsageError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

Connector parse_connector(const std::string& name) {
  if (name == "ham") return Connector::Ham;
  if (name == "multilevel") return Connector::MultiLevel;
  throw UsageError("unknown connector '" + name + "' (expected ham or multilevel)");
}

Corpus read_corpus(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
  try {
    return load_corpus(path);
  } catch (const CorpusError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// ---- verify ----------------------------------------------------------

struct VerifyArgs {
  std::size_t trials = 10000;
  CLI::Option* trials_opt = nullptr;
};

int cmd_verify(const Globals& g, VerifyArgs a, std::ostream& out, std::ostream& err) {
  const json cfg = load_config(g.config, {"trials", "seed"});
  std::uint64_t seed = g.seed;
  merge(seed, cfg, "seed", g.seed_opt);
  merge(a.trials, cfg, "trials", a.trials_opt);
  if (a.trials == 0) throw UsageError("--trials must be at least 1");

  const checks::VerifyReport report = checks::run_verify(a.trials, seed);
  out << report.text();
  if (g.out_opt->count() > 0) write_file(out_dir(g) / "verify.json", report.to_json().dump(2) + "\n");
  if (!report.pass()) {
    err << "verify: invariant check failed; failing instances are listed in the report\n";
    return kCheckFailed;
  }
  return kOk;
}

// ---- gradcheck -------------------------------------------------------

struct GradcheckArgs {
  std::string scale = "tiny";
  std::size_t instances = 100;
  std::vector<std::string> ops;
  CLI::Option* scale_opt = nullptr;
  CLI::Option* instances_opt = nullptr;
  CLI::Option* ops_opt = nullptr;
};

int cmd_gradcheck(const Globals& g, GradcheckArgs a, std::ostream& out, std::ostream& err) {
  const json cfg = load_config(g.config, {"scale", "instances", "ops", "seed"});
  std::uint64_t seed = g.seed;
  merge(seed, cfg, "seed", g.seed_opt);
  merge(a.scale, cfg, "scale", a.scale_opt);
  merge(a.instances, cfg, "instances", a.instances_opt);
  merge(a.ops, cfg, "ops", a.ops_opt);
  if (a.instances == 0) throw UsageError("--instances must be at least 1");
  checks::Scale scale;
  try {
    scale = checks::parse_scale(a.scale);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto names = checks::gradcheck_ops();
  for (const auto& op : a.ops) {
    if (std::find(names.begin(), names.end(), op) == names.end()) throw UsageError("unknown op '" + op + "'");
  }

  const auto rows = checks::gradcheck_suite(scale, seed, a.instances, a.ops);
  const std::string table = checks::gradcheck_table(rows);
  out << table;
  if (g.out_opt->count() > 0) write_file(out_dir(g) / "gradcheck.txt", table);
  int code = kOk;
  for (const auto& row : rows) {
    if (!row.pass()) {
      err << "gradcheck: " << row.op << " max relative error " << row.max_rel_error << " at instance "
          << row.worst_instance << ", input " << row.input << ", coordinate " << row.coordinate << "\n";
      code = kCheckFailed;
    }
  }
  return code;
}

// ---- train -----------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::size_t depth = 2;
  std::size_t hidden = 16;
  std::size_t epochs = 50;
  double learning_rate = 1e-2;
  std::string optimizer = "adam";
  std::size_t batch_size = 32;
  double max_grad_norm = 5.0;
  bool unidirectional = false;
  std::string connector = "ham";
  bool freeze_levels = false;
  std::map<std::string, CLI::Option*> opts;
};

int cmd_train(const Globals& g, TrainArgs a, std::ostream& out, std::ostream&) {
  const json cfg = load_config(g.config, {"corpus", "depth", "hidden", "epochs", "learning_rate", "optimizer",
                                          "batch_size", "max_grad_norm", "bidirectional", "connector",
                                          "train_level_weights", "seed"});
  std::uint64_t seed = g.seed;
  merge(seed, cfg, "seed", g.seed_opt);
  merge(a.corpus, cfg, "corpus", a.opts["corpus"]);
  merge(a.depth, cfg, "depth", a.opts["depth"]);
  merge(a.hidden, cfg, "hidden", a.opts["hidden"]);
  merge(a.epochs, cfg, "epochs", a.opts["epochs"]);
  merge(a.learning_rate, cfg, "learning_rate", a.opts["lr"]);
  merge(a.optimizer, cfg, "optimizer", a.opts["optimizer"]);
  merge(a.batch_size, cfg, "batch_size", a.opts["batch-size"]);
  merge(a.max_grad_norm, cfg, "max_grad_norm", a.opts["max-grad-norm"]);
  merge(a.connector, cfg, "connector", a.opts["connector"]);
  bool bidirectional = !a.unidirectional;
  bool train_levels = !a.freeze_levels;
  merge(bidirectional, cfg, "bidirectional", a.opts["unidirectional"]);
  merge(train_levels, cfg, "train_level_weights", a.opts["freeze-levels"]);

  ModelConfig mc;
  mc.hidden = a.hidden;
  mc.depth = a.depth;
  mc.bidirectional = bidirectional;
  mc.connector = parse_connector(a.connector);
  TrainConfig tc;
  tc.learning_rate = a.learning_rate;
  tc.optimizer = parse_optimizer(a.optimizer);
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.max_grad_norm = a.max_grad_norm;
  tc.train_level_weights = train_levels;
  tc.seed = split_seed(seed, stream_id("shuffle"));
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Corpus corpus = read_corpus(a.corpus, "corpus");
  if (corpus.empty()) throw UsageError("corpus " + a.corpus + " has no pairs");
  mc.vocab = corpus.vocab;
  try {
    mc.validate();
  } catch (const std::domain_error& e) {
    throw UsageError(e.what());
  }

  Seq2SeqModel model = Seq2SeqModel::random(mc, split_seed(seed, stream_id("init")));
  const TrainResult result = train(model, corpus, tc);

  const fs::path dir = out_dir(g);
  save_checkpoint(model, dir / "model.json");
  std::ostringstream csv;
  csv << "epoch,loss\n";
  char line[64];
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    std::snprintf(line, sizeof line, "%zu,%.10g\n", e + 1, result.epoch_losses[e]);
    csv << line;
  }
  write_file(dir / "losses.csv", csv.str());
  out << "trained " << corpus.size() << " pairs for " << tc.epochs << " epochs; final loss "
      << result.epoch_losses.back() << "\n";
  out << "wrote " << (dir / "model.json").string() << " and " << (dir / "losses.csv").string() << "\n";
  return kOk;
}

// ---- sweep -----------------------------------------------------------

struct SweepArgs {
  std::string task;
  std::size_t pairs = 0, eval_pairs = 0, seq_len = 0, payload_vocab = 0, hidden = 0;
  std::vector<std::size_t> depths;
  std::size_t restarts = 0, epochs = 0, batch_size = 0, threads = 0;
  double learning_rate = 0.0, tolerance = 0.0;
  std::string optimizer;
  bool unidirectional = false, record_wall_time = false;
  std::map<std::string, CLI::Option*> opts;
};

int cmd_sweep(const Globals& g, const SweepArgs& a, std::ostream& out, std::ostream&) {
  SweepConfig config;
  try {
    config = SweepConfig::from_json(load_config(g.config, {}));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  auto given = [&](const char* name) { return a.opts.at(name)->count() > 0; };
  if (g.seed_opt->count() > 0) config.seed = g.seed;
  try {
    if (given("task")) config.task = parse_task(a.task);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (given("pairs")) config.pairs = a.pairs;
  if (given("eval-pairs")) config.eval_pairs = a.eval_pairs;
  if (given("seq-len")) config.seq_len = a.seq_len;
  if (given("payload-vocab")) config.payload_vocab = a.payload_vocab;
  if (given("hidden")) config.hidden = a.hidden;
  if (given("depths")) config.depths = a.depths;
  if (given("restarts")) config.restarts = a.restarts;
  if (given("epochs")) config.train.epochs = a.epochs;
  if (given("batch-size")) config.train.batch_size = a.batch_size;
  if (given("threads")) config.threads = a.threads;
  if (given("lr")) config.train.learning_rate = a.learning_rate;
  if (given("tolerance")) config.tolerance = a.tolerance;
  if (given("optimizer")) config.train.optimizer = parse_optimizer(a.optimizer);
  if (given("unidirectional")) config.bidirectional = !a.unidirectional;
  if (given("record-wall-time")) config.record_wall_time = a.record_wall_time;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const SweepResult result = depth_sweep(config);
  const fs::path dir = out_dir(g);
  write_file(dir / "sweep.csv", sweep_csv(result.records));
  ordered_json summary = result.summary_json(config.tolerance);
  summary["config"] = config.to_json();
  write_file(dir / "summary.json", summary.dump(2) + "\n");

  for (const auto& s : result.summary) {
    out << "depth " << s.depth << ": best final loss " << s.best_loss << "\n";
  }
  out << "verdict: " << summary["verdict"].get<std::string>() << "\n";
  out << "wrote " << (dir / "sweep.csv").string() << " and " << (dir / "summary.json").string() << "\n";
  return result.monotone ? kOk : kCheckFailed;
}

// ---- eval ------------------------------------------------------------

struct EvalArgs {
  std::string hyp, gold, model, corpus;
};

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out, std::ostream&) {
  std::vector<TokenSeq> generated, targets;
  if (!a.model.empty()) {
    if (!a.hyp.empty()) throw UsageError("give either --model with --corpus or --hyp with --gold");
    if (!fs::is_regular_file(a.model)) throw UsageError("checkpoint not found: " + a.model);
    const Corpus corpus = read_corpus(a.corpus, "corpus");
    const Seq2SeqModel model = load_checkpoint(a.model);
    for (const auto& p : corpus.pairs) {
      generated.push_back(generate(model, p.src, p.tgt.size() + 2));
      targets.push_back(p.tgt);
    }
  } else {
    const Corpus hyp = read_corpus(a.hyp, "hypothesis corpus");
    const Corpus gold = read_corpus(a.gold, "gold corpus");
    if (hyp.size() != gold.size()) {
      throw UsageError("hypothesis and gold corpora differ in size: " + std::to_string(hyp.size()) + " vs " +
                       std::to_string(gold.size()));
    }
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      generated.push_back(hyp.pairs[i].tgt);
      targets.push_back(gold.pairs[i].tgt);
    }
  }
  if (targets.empty()) throw UsageError("nothing to evaluate: empty corpus");

  const EvalReport report = evaluate(generated, targets);
  const std::string text = report.to_json().dump(2) + "\n";
  out << text;
  write_file(out_dir(g) / "eval.json", text);
  return kOk;
}

// ---- gendata ---------------------------------------------------------

struct GendataArgs {
  std::string task = "copy";
  std::size_t pairs = 100, len = 6, payload_vocab = 8;
  std::string name;
  std::map<std::string, CLI::Option*> opts;
};

int cmd_gendata(const Globals& g, GendataArgs a, std::ostream& out, std::ostream&) {
  const json cfg = load_config(g.config, {"task", "pairs", "len", "payload_vocab", "name", "seed"});
  std::uint64_t seed = g.seed;
  merge(seed, cfg, "seed", g.seed_opt);
  merge(a.task, cfg, "task", a.opts["task"]);
  merge(a.pairs, cfg, "pairs", a.opts["pairs"]);
  merge(a.len, cfg, "len", a.opts["len"]);
  merge(a.payload_vocab, cfg, "payload_vocab", a.opts["payload-vocab"]);
  merge(a.name, cfg, "name", a.opts["name"]);

  Corpus corpus;
  try {
    const Task task = parse_task(a.task);
    if (task == Task::File) throw UsageError("gendata needs a synthetic task: copy, reverse or sort");
    corpus = gen_task(task, a.pairs, a.len, a.payload_vocab, split_seed(seed, stream_id("data")));
  } catch (const std::logic_error& e) {
    throw UsageError(e.what());
  }
  const std::string name = a.name.empty() ? a.task + ".jsonl" : a.name;
  if (fs::path(name).has_parent_path()) throw UsageError("--name must be a bare file name");
  const fs::path path = out_dir(g) / name;
  save_corpus(corpus, path);
  out << "wrote " << corpus.size() << " pairs to " << path.string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical attention toolkit: verification suites, gradient checks, training and sweeps",
               "hamctl"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "root seed for every random stream");
  g.out_opt = app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--config", g.config, "JSON config file; flags override its keys");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "norm-bound, reduction and distribution checks");
  va.trials_opt = verify->add_option("--trials", va.trials, "random instances for the norm bound")
                      ->capture_default_str();

  GradcheckArgs ga;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks per op");
  ga.scale_opt = gradcheck->add_option("--scale", ga.scale, "tiny or small")
                     ->check(CLI::IsMember({"tiny", "small"}))
                     ->capture_default_str();
  ga.instances_opt = gradcheck->add_option("--instances", ga.instances, "random instances per op")
                         ->capture_default_str();
  ga.ops_opt = gradcheck->add_option("--op", ga.ops, "restrict to these ops (repeatable)");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a seq2seq model on a corpus file");
  ta.opts["corpus"] = train_cmd->add_option("--corpus", ta.corpus, "JSONL corpus");
  ta.opts["depth"] = train_cmd->add_option("--depth", ta.depth, "attention depth")->capture_default_str();
  ta.opts["hidden"] = train_cmd->add_option("--hidden", ta.hidden, "hidden size")->capture_default_str();
  ta.opts["epochs"] = train_cmd->add_option("--epochs", ta.epochs)->capture_default_str();
  ta.opts["lr"] = train_cmd->add_option("--lr", ta.learning_rate, "learning rate")->capture_default_str();
  ta.opts["optimizer"] = train_cmd->add_option("--optimizer", ta.optimizer, "adam or sgd")->capture_default_str();
  ta.opts["batch-size"] = train_cmd->add_option("--batch-size", ta.batch_size)->capture_default_str();
  ta.opts["max-grad-norm"] = train_cmd->add_option("--max-grad-norm", ta.max_grad_norm)->capture_default_str();
  ta.opts["connector"] = train_cmd->add_option("--connector", ta.connector, "ham or multilevel")
                             ->capture_default_str();
  ta.opts["unidirectional"] = train_cmd->add_flag("--unidirectional", ta.unidirectional, "forward encoder only");
  ta.opts["freeze-levels"] = train_cmd->add_flag("--freeze-levels", ta.freeze_levels, "keep c at zero");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "best-of-restarts loss per attention depth");
  sa.opts["task"] = sweep->add_option("--task", sa.task);
  sa.opts["pairs"] = sweep->add_option("--pairs", sa.pairs);
  sa.opts["eval-pairs"] = sweep->add_option("--eval-pairs", sa.eval_pairs);
  sa.opts["seq-len"] = sweep->add_option("--seq-len", sa.seq_len);
  sa.opts["payload-vocab"] = sweep->add_option("--payload-vocab", sa.payload_vocab);
  sa.opts["hidden"] = sweep->add_option("--hidden", sa.hidden);
  sa.opts["depths"] = sweep->add_option("--depths", sa.depths)->delimiter(',');
  sa.opts["restarts"] = sweep->add_option("--restarts", sa.restarts);
  sa.opts["epochs"] = sweep->add_option("--epochs", sa.epochs);
  sa.opts["batch-size"] = sweep->add_option("--batch-size", sa.batch_size);
  sa.opts["threads"] = sweep->add_option("--threads", sa.threads, "0: one per core");
  sa.opts["lr"] = sweep->add_option("--lr", sa.learning_rate);
  sa.opts["tolerance"] = sweep->add_option("--tolerance", sa.tolerance);
  sa.opts["optimizer"] = sweep->add_option("--optimizer", sa.optimizer);
  sa.opts["unidirectional"] = sweep->add_flag("--unidirectional", sa.unidirectional);
  sa.opts["record-wall-time"] = sweep->add_flag("--record-wall-time", sa.record_wall_time,
                                                "write measured times instead of 0 (breaks byte-identical reruns)");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score generations against gold targets");
  eval_cmd->add_option("--hyp", ea.hyp, "corpus whose targets are the generations");
  eval_cmd->add_option("--gold", ea.gold, "corpus with gold targets");
  eval_cmd->add_option("--model", ea.model, "checkpoint to generate with");
  eval_cmd->add_option("--corpus", ea.corpus, "sources and gold targets for --model");

  GendataArgs da;
  auto* gendata = app.add_subcommand("gendata", "write a synthetic task corpus");
  da.opts["task"] = gendata->add_option("--task", da.task, "copy, reverse or sort")->capture_default_str();
  da.opts["pairs"] = gendata->add_option("--pairs", da.pairs)->capture_default_str();
  da.opts["len"] = gendata->add_option("--len", da.len, "sequence length")->capture_default_str();
  da.opts["payload-vocab"] = gendata->add_option("--payload-vocab", da.payload_vocab)->capture_default_str();
  da.opts["name"] = gendata->add_option("--name", da.name, "file name inside --out (default <task>.jsonl)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "hamctl: " << e.what() << "\n";
    err << "run 'hamctl --help' for usage\n";
    return kUsageError;
  }

  try {
    if (verify->parsed()) return cmd_verify(g, va, out, err);
    if (gradcheck->parsed()) return cmd_gradcheck(g, ga, out, err);
    if (train_cmd->parsed()) return cmd_train(g, ta, out, err);
    if (sweep->parsed()) return cmd_sweep(g, sa, out, err);
    if (eval_cmd->parsed()) return cmd_eval(g, ea, out, err);
    if (gendata->parsed()) return cmd_gendata(g, da, out, err);
  } catch (const UsageError& e) {
    err << "hamctl: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "hamctl: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsageError;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ham::cli
