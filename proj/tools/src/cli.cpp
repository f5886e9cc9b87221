// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string_view>
#include <utility>

#include <CLI11.hpp>

#include "sparselab/attention_check.hpp"
#include "sparselab/bench.hpp"
#include "sparselab/errors.hpp"
#include "sparselab/heatmap.hpp"
#include "sparselab/io.hpp"
#include "sparselab/model.hpp"
#include "sparselab/task.hpp"
#include "sparselab/train.hpp"

namespace sparselab::cli {
namespace {

namespace fs = std::filesystem;

// Thrown for a run that completed but produced a numeric failure.
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string text(const std::string& v) { return v; }
std::string text(bool v) { return v ? "true" : "false"; }
std::string text(double v) { return format_real(v); }
template <std::integral I>
std::string text(I v) {
  return std::to_string(v);
}

// Registers flags and remembers how to echo their effective values.
class Command {
 public:
  Command(CLI::App& parent, std::string name, std::string help)
      : name_(std::move(name)), app_(parent.add_subcommand(name_, std::move(help))) {
    app_->add_option("--config", "Replay a config.txt written by an earlier run");
  }

  template <class V>
  CLI::Option* flag(const std::string& key, V& var, std::string help) {
    echo_.emplace_back(key, [&var] { return text(var); });
    return app_->add_option("--" + key, var, std::move(help))
        ->capture_default_str()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  CLI::Option* flag(const std::string& key, bool& var, std::string help) {
    echo_.emplace_back(key, [&var] { return std::string(var ? "true" : "false"); });
    return app_->add_flag("--" + key, var, std::move(help))
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  KeyValues echo() const {
    KeyValues kv{{"command", name_}};
    for (const auto& [key, value] : echo_) kv[key] = value();
    return kv;
  }

  const std::string& name() const { return name_; }
  CLI::App* app() const { return app_; }

 private:
  std::string name_;
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> echo_;
};

struct TaskFlags {
  std::string task = "copy";
  std::size_t seq_len = 8;
  std::size_t vocab = 16;
  std::size_t n_train = 2000;
  std::size_t n_eval = 200;

  void add(Command& c) {
    c.flag("task", task, "Synthetic task: copy, reverse or sort");
    c.flag("seq-len", seq_len, "Sequence length");
    c.flag("vocab", vocab, "Vocabulary size including the 3 reserved ids");
    c.flag("n-train", n_train, "Training examples");
    c.flag("n-eval", n_eval, "Held-out examples");
  }

  TaskSpec spec(std::uint64_t seed) const {
    TaskSpec s;
    s.kind = parse_task_kind(task);
    s.seq_len = seq_len;
    s.vocab_size = vocab;
    s.n_train = n_train;
    s.n_eval = n_eval;
    s.seed = seed;
    s.validate();
    return s;
  }
};

struct ModelFlags {
  std::string variant = "topk";
  std::string k = "8";
  std::string sparsify_phase = "train_and_predict";
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn = 128;
  std::size_t max_len = 32;

  void add(Command& c, bool with_variant) {
    if (with_variant) c.flag("variant", variant, "dense, topk, sparsemax or entmax15");
    c.flag("k", k, "Keys kept per query row (positive integer or inf)");
    c.flag("sparsify-phase", sparsify_phase, "train_and_predict or train_only");
    c.flag("d-model", d_model, "Model width");
    c.flag("heads", heads, "Attention heads");
    c.flag("layers", layers, "Encoder and decoder layers");
    c.flag("ffn", ffn, "Feed-forward hidden width");
    c.flag("max-len", max_len, "Longest supported sequence");
  }

  ModelConfig config(std::size_t vocab, std::uint64_t seed) const {
    ModelConfig m;
    m.vocab_size = vocab;
    m.d_model = d_model;
    m.num_heads = heads;
    m.num_layers = layers;
    m.ffn_width = ffn;
    m.max_len = max_len;
    m.attention.variant = parse_variant(variant);
    m.attention.k = parse_k(k);
    m.attention.sparsify_phase = parse_sparsify_phase(sparsify_phase);
    m.seed = seed;
    m.validate();
    return m;
  }
};

struct TrainFlags {
  std::size_t steps = 3000;
  std::size_t batch = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double target_acc = 0.999;

  void add(Command& c) {
    c.flag("steps", steps, "Maximum optimizer steps");
    c.flag("batch", batch, "Examples per step");
    c.flag("lr", lr, "Adam learning rate");
    c.flag("beta1", beta1, "Adam first-moment decay");
    c.flag("beta2", beta2, "Adam second-moment decay");
    c.flag("adam-eps", adam_eps, "Adam denominator epsilon");
    c.flag("target-acc", target_acc,
           "Stop at the first epoch whose held-out token accuracy reaches this (0 disables)");
  }

  TrainOptions options() const {
    TrainOptions o;
    o.steps = steps;
    o.batch_size = batch;
    o.optimizer = {lr, beta1, beta2, adam_eps};
    o.target_token_accuracy = target_acc;
    o.validate();
    return o;
  }
};

template <class T>
std::vector<T> parse_list(const std::string& s, const std::function<T(std::string_view)>& parse,
                          const char* what) {
  std::vector<T> out;
  for (const std::string& item : split(s, ',')) {
    if (item.empty()) throw ConfigError(std::string("empty entry in ") + what);
    out.push_back(parse(item));
  }
  if (out.empty()) throw ConfigError(std::string(what) + " must not be empty");
  return out;
}

std::uint64_t parse_unsigned(std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw ConfigError("dtype must be f32 or f64, got '" + s + "'");
}

void prepare_out(const fs::path& dir, const Command& c) {
  fs::create_directories(dir);
  write_file_atomic(dir / "config.txt", format_key_values(c.echo()));
}

// --- train --------------------------------------------------------------

struct TrainCommand {
  TaskFlags task;
  ModelFlags model;
  TrainFlags train;
  std::uint64_t seed = 1;
  std::string dtype = "f32";
  std::string out = "run";

  void add(Command& c) {
    task.add(c);
    model.add(c, true);
    train.add(c);
    c.flag("seed", seed, "Seed for parameters, data and shuffling");
    c.flag("dtype", dtype, "f32 or f64");
    c.flag("out", out, "Output directory");
  }

  template <class T>
  int go(const Command& c, const ModelConfig& m, const TaskSpec& t, const TrainOptions& o,
         std::ostream& os) const {
    const fs::path dir = out;
    prepare_out(dir, c);
    TrainResult<T> r = sparselab::train<T>(m, t, o);
    write_file_atomic(dir / "train_report.csv", r.report.csv());
    if (r.report.diverged) {
      throw NumericFailure("training diverged after " + std::to_string(r.report.steps_run) +
                           " steps; partial report written");
    }
    write_file_atomic(dir / "model.txt", serialize_model(r.model));
    os << "steps=" << r.report.steps_run << " epochs=" << r.report.epochs.size()
       << " token_acc=" << format_real(r.report.final_metrics.token_accuracy)
       << " seq_acc=" << format_real(r.report.final_metrics.sequence_accuracy)
       << " wall_s=" << format_real(r.report.wall_seconds) << "\n";
    return kExitOk;
  }

  int run(const Command& c, std::ostream& os) const {
    const TaskSpec t = task.spec(seed);
    const ModelConfig m = model.config(task.vocab, seed);
    const TrainOptions o = train.options();
    return parse_dtype(dtype) == DType::f64 ? go<double>(c, m, t, o, os)
                                            : go<float>(c, m, t, o, os);
  }
};

// --- eval ---------------------------------------------------------------

std::string read_model(const std::string& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("model file '" + path + "' does not exist");
  return read_file(path);
}

bool model_is_f64(const std::string& model_text) {
  return model_text.find("\nmodel.dtype=f64\n") != std::string::npos;
}

struct EvalCommand {
  TaskFlags task;
  std::string model = "run/model.txt";
  std::uint64_t seed = 1;
  std::string out = "eval";

  void add(Command& c) {
    task.add(c);
    c.flag("model", model, "Model file written by train");
    c.flag("seed", seed, "Data seed (matches the training seed for its held-out split)");
    c.flag("out", out, "Output directory");
  }

  template <class T>
  EvalMetrics metrics(const std::string& model_text, const TaskSpec& t) const {
    const Transformer<T> m = deserialize_model<T>(model_text);
    const TaskData data = generate_task(t);
    return evaluate(m, std::span<const Example>(data.eval), m.config().attention.sparsify_phase);
  }

  int run(const Command& c, std::ostream& os) const {
    const TaskSpec t = task.spec(seed);
    const std::string model_text = read_model(model);
    const fs::path dir = out;
    prepare_out(dir, c);
    const EvalMetrics e =
        model_is_f64(model_text) ? metrics<double>(model_text, t) : metrics<float>(model_text, t);
    CsvTable table({"n_eval", "token_acc", "seq_acc"});
    table.add_row({std::to_string(t.n_eval), format_real(e.token_accuracy),
                   format_real(e.sequence_accuracy)});
    write_file_atomic(dir / "eval_report.csv", table.str());
    os << "token_acc=" << format_real(e.token_accuracy)
       << " seq_acc=" << format_real(e.sequence_accuracy) << "\n";
    return kExitOk;
  }
};

// --- sweep --------------------------------------------------------------

struct SweepCommand {
  TaskFlags task;
  ModelFlags model;
  TrainFlags train;
  std::string ks = "1,2,4,8,16,inf";
  std::string seeds = "1,2,3";
  std::size_t threads = 1;
  std::string out = "sweep";

  void add(Command& c) {
    task.add(c);
    model.add(c, false);
    train.add(c);
    c.flag("ks", ks, "Comma-separated k values; inf is the dense baseline");
    c.flag("seeds", seeds, "Comma-separated seeds, one run per (k, seed)");
    c.flag("threads", threads, "Worker threads (results do not depend on it)");
    c.flag("out", out, "Output directory");
  }

  int run(const Command& c, std::ostream& os) const {
    const auto k_values = parse_list<std::size_t>(ks, parse_k, "--ks");
    const auto seed_values = parse_list<std::uint64_t>(seeds, parse_unsigned, "--seeds");
    const TaskSpec t = task.spec(seed_values.front());
    ModelFlags topk = model;
    topk.variant = "topk";
    const ModelConfig m = topk.config(task.vocab, seed_values.front());
    const TrainOptions o = train.options();
    if (threads == 0) throw ConfigError("threads must be >= 1");
    const fs::path dir = out;
    prepare_out(dir, c);
    const auto rows = sweep_k(m, t, o, k_values, seed_values, threads);
    write_file_atomic(dir / "sweep.csv", sweep_csv(rows));
    for (const SweepRow& r : rows) {
      os << "k=" << k_to_string(r.k) << " mean_acc=" << format_real(r.mean_accuracy)
         << " std_acc=" << format_real(r.std_accuracy) << "\n";
    }
    return kExitOk;
  }
};

// --- bench --------------------------------------------------------------

struct BenchCommand {
  std::string variants = "dense,topk,sparsemax,entmax15";
  std::string lk = "64,256";
  std::string lq;
  std::string modes = "forward,forward_backward";
  std::size_t batch = 8;
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t k = 8;
  std::size_t iters = 30;
  std::size_t warmup = 5;
  std::string dtype = "f32";
  std::uint64_t seed = 1;
  std::string out = "bench";

  void add(Command& c) {
    c.flag("variants", variants, "Comma-separated attention variants");
    c.flag("lk", lk, "Comma-separated key lengths, one shape each");
    c.flag("lq", lq, "Query length (default: equal to each key length)");
    c.flag("modes", modes, "forward and/or forward_backward");
    c.flag("batch", batch, "Sequences per call");
    c.flag("d", d, "Model width");
    c.flag("heads", heads, "Attention heads");
    c.flag("k", k, "Top-k keys per row");
    c.flag("iters", iters, "Timed calls per record (>= 30)");
    c.flag("warmup", warmup, "Untimed calls per record (>= 5)");
    c.flag("dtype", dtype, "f32 or f64");
    c.flag("seed", seed, "Input seed");
    c.flag("out", out, "Output directory");
  }

  int run(const Command& c, std::ostream& os) const {
    if (iters < kMinBenchIters) throw ConfigError("--iters must be >= 30");
    if (warmup < kMinBenchWarmup) throw ConfigError("--warmup must be >= 5");
    const auto vs = parse_list<Variant>(variants, parse_variant, "--variants");
    const auto ms = parse_list<BenchMode>(modes, parse_bench_mode, "--modes");
    const auto lks = parse_list<std::uint64_t>(lk, parse_unsigned, "--lk");
    std::vector<BenchShape> shapes;
    for (std::uint64_t l : lks) {
      BenchShape s{batch, lq.empty() ? l : parse_unsigned(lq), l, d, heads, k};
      s.validate();
      shapes.push_back(s);
    }
    const DType dt = parse_dtype(dtype);
    const fs::path dir = out;
    prepare_out(dir, c);
    const auto records = dt == DType::f64 ? bench_suite<double>(shapes, vs, ms, iters, warmup, seed)
                                          : bench_suite<float>(shapes, vs, ms, iters, warmup, seed);
    const std::string csv = bench_csv(records);
    write_file_atomic(dir / "bench.csv", csv);
    os << csv;
    return kExitOk;
  }
};

// --- viz ----------------------------------------------------------------

struct VizCommand {
  TaskFlags task;
  std::string model = "run/model.txt";
  std::string input;
  std::string format = "pgm";
  std::uint64_t seed = 1;
  std::string out = "viz";

  void add(Command& c) {
    task.add(c);
    c.flag("model", model, "Model file written by train");
    c.flag("input", input,
           "Comma-separated source tokens (default: first held-out example of the task)");
    c.flag("format", format, "pgm or csv");
    c.flag("seed", seed, "Data seed for the default input");
    c.flag("out", out, "Output directory");
  }

  template <class T>
  std::size_t render(const std::string& model_text, const std::vector<int>& source,
                     const TaskSpec& t, HeatmapFormat f, const fs::path& dir) const {
    const Transformer<T> m = deserialize_model<T>(model_text);
    const std::vector<int> target = apply_task(t.kind, source);
    TokenBatch src{1, source.size(), source};
    TokenBatch tgt{1, target.size(), {kBosToken}};
    tgt.tokens.insert(tgt.tokens.end(), target.begin(), target.end() - 1);
    Graph<T> g;
    const auto bound = m.bind(g, false);
    const SparsifyPhase mode = m.config().attention.sparsify_phase;
    AttentionTrace<T> trace;
    const Var<T> memory = m.encode(bound, src, Phase::eval, mode, &trace);
    m.decode(bound, memory, source.size(), tgt, Phase::eval, mode, &trace);
    for (const auto& e : trace.entries) {
      const std::string file = std::string(to_string(e.site)) + "_l" + std::to_string(e.layer) +
                               "_h" + std::to_string(e.head) + "." + std::string(to_string(f));
      export_heatmap(e.weights, dir / file, f);
    }
    return trace.entries.size();
  }

  int run(const Command& c, std::ostream& os) const {
    const TaskSpec t = task.spec(seed);
    const HeatmapFormat f = parse_heatmap_format(format);
    std::vector<int> source;
    if (input.empty()) {
      source = generate_task(t).eval.front().source;
    } else {
      for (std::uint64_t tok : parse_list<std::uint64_t>(input, parse_unsigned, "--input")) {
        if (tok < static_cast<std::uint64_t>(kFirstContentToken) || tok >= t.vocab_size) {
          throw ConfigError("--input token " + std::to_string(tok) + " is not a content token");
        }
        source.push_back(static_cast<int>(tok));
      }
    }
    const std::string model_text = read_model(model);
    const fs::path dir = out;
    prepare_out(dir, c);
    const std::size_t n = model_is_f64(model_text) ? render<double>(model_text, source, t, f, dir)
                                                   : render<float>(model_text, source, t, f, dir);
    os << "wrote " << n << " heatmaps to " << dir.string() << "\n";
    return kExitOk;
  }
};

// --- gradcheck ----------------------------------------------------------

struct GradcheckCommand {
  std::string variant = "all";
  std::uint64_t seed = 1;
  std::size_t instances = 100;
  std::size_t lq = 4;
  std::size_t lk = 6;
  std::size_t d = 4;
  std::size_t k = 2;
  double eps = 1e-5;
  double tol = 1e-6;
  bool force_ties = false;
  std::string out = "gradcheck";

  void add(Command& c) {
    c.flag("variant", variant, "all, dense, topk, sparsemax or entmax15");
    c.flag("seed", seed, "Instance seed");
    c.flag("instances", instances, "Random instances per variant");
    c.flag("lq", lq, "Query length");
    c.flag("lk", lk, "Key length");
    c.flag("d", d, "Head width");
    c.flag("k", k, "Top-k keys per row");
    c.flag("eps", eps, "Central-difference step");
    c.flag("tol", tol, "Largest accepted relative error");
    c.flag("force-ties", force_ties, "Use identical keys so every score row is tied");
    c.flag("out", out, "Output directory");
  }

  int run(const Command& c, std::ostream& os) const {
    std::vector<Variant> variants;
    if (variant == "all") {
      variants = {Variant::dense, Variant::topk, Variant::sparsemax, Variant::entmax15};
    } else {
      variants = {parse_variant(variant)};
    }
    if (instances == 0) throw ConfigError("--instances must be >= 1");
    if (!(eps > 0) || !(tol > 0)) throw ConfigError("--eps and --tol must be positive");
    const fs::path dir = out;
    prepare_out(dir, c);
    CsvTable table({"variant", "instances", "skipped_instances", "checked_coords",
                    "skipped_coords", "max_rel_err", "verdict"});
    bool failed = false;
    for (Variant v : variants) {
      AttentionCheckSpec spec;
      spec.variant = v;
      spec.l_q = lq;
      spec.l_k = lk;
      spec.d = d;
      spec.k = k;
      spec.eps = eps;
      spec.force_ties = force_ties;
      const AttentionCheckSummary s = check_attention_gradients(spec, instances, seed);
      const bool all_skipped = s.skipped_instances == s.instances;
      const std::string verdict = all_skipped ? "skipped" : s.passed(tol) ? "pass" : "fail";
      failed = failed || verdict == "fail";
      table.add_row({std::string(to_string(v)), std::to_string(s.instances),
                     std::to_string(s.skipped_instances), std::to_string(s.checked_coords),
                     std::to_string(s.skipped_coords), format_real(s.max_rel_error), verdict});
      os << to_string(v) << ": " << verdict << " max_rel_err=" << format_real(s.max_rel_error)
         << " checked=" << s.checked_coords << " skipped_instances=" << s.skipped_instances
         << "\n";
      if (!s.skip_reasons.empty()) {
        os << "  skipped: " << s.skip_reasons.front();
        if (s.skip_reasons.size() > 1) os << " (+" << s.skip_reasons.size() - 1 << " more)";
        os << "\n";
      }
    }
    write_file_atomic(dir / "gradcheck.csv", table.str());
    if (failed) throw NumericFailure("gradient check failed");
    return kExitOk;
  }
};

// Splices the entries of `--config FILE` in front of the user's flags so
// that later (explicit) flags win under the take-last policy.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty() || args.front().starts_with("-")) return args;
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file");
      config_path = args[++i];
    } else if (args[i].starts_with("--config=")) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  std::vector<std::string> out{args.front()};
  if (!config_path.empty()) {
    const KeyValues kv = parse_key_values(read_file(config_path));
    const auto cmd = kv.find("command");
    if (cmd == kv.end() || cmd->second != args.front()) {
      throw ConfigError("config file " + config_path + " was not written by '" + args.front() +
                        "'");
    }
    // An empty value echoes an option left unset.
    for (const auto& [key, value] : kv) {
      if (key != "command" && !value.empty()) out.push_back("--" + key + "=" + value);
    }
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sparselab: sparse attention experiments"};
  app.name("sparselab");
  app.require_subcommand(1);

  TrainCommand train_cmd;
  EvalCommand eval_cmd;
  SweepCommand sweep_cmd;
  BenchCommand bench_cmd;
  VizCommand viz_cmd;
  GradcheckCommand gradcheck_cmd;
  std::vector<std::unique_ptr<Command>> commands;
  std::vector<std::function<int(const Command&, std::ostream&)>> runners;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    commands.push_back(std::make_unique<Command>(app, name, help));
    cmd.add(*commands.back());
    runners.push_back([&cmd](const Command& c, std::ostream& os) { return cmd.run(c, os); });
  };
  add("train", "Train a model on a synthetic task", train_cmd);
  add("eval", "Evaluate a trained model on the held-out split", eval_cmd);
  add("sweep", "Train top-k models over a grid of k and seeds", sweep_cmd);
  add("bench", "Time attention variants", bench_cmd);
  add("viz", "Export attention heatmaps of a trained model", viz_cmd);
  add("gradcheck", "Check attention gradients against finite differences", gradcheck_cmd);

  try {
    std::vector<std::string> argv = expand_config(args);
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!commands[i]->app()->parsed()) continue;
    try {
      return runners[i](*commands[i], out);
    } catch (const NumericFailure& e) {
      err << "error: " << e.what() << "\n";
      return kExitNumeric;
    } catch (const DegenerateRowError& e) {
      err << "error: " << e.what() << "\n";
      return kExitNumeric;
    } catch (const std::invalid_argument& e) {
      err << "usage error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitFailure;
    }
  }
  return kExitUsage;
}

}  // namespace sparselab::cli
