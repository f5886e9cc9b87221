// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>

#include "sparselab/errors.hpp"
#include "sparselab/ops.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

void TrainOptions::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(optimizer.lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 &&
        optimizer.beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
}

KeyValues TrainOptions::to_key_values() const {
  return {
      {"train.steps", std::to_string(steps)},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.lr", format_real(optimizer.lr)},
      {"train.beta1", format_real(optimizer.beta1)},
      {"train.beta2", format_real(optimizer.beta2)},
      {"train.adam_eps", format_real(optimizer.eps)},
      {"train.target_token_accuracy", format_real(target_token_accuracy)},
  };
}

std::string TrainReport::csv() const {
  CsvTable t({"kind", "epoch", "step", "mean_loss", "token_acc", "seq_acc"});
  for (const auto& e : epochs) {
    t.add_row({"epoch", std::to_string(e.epoch), std::to_string(e.step), format_real(e.mean_loss),
               format_real(e.eval.token_accuracy), format_real(e.eval.sequence_accuracy)});
  }
  const double last_loss =
      epochs.empty() ? std::numeric_limits<double>::quiet_NaN() : epochs.back().mean_loss;
  t.add_row({diverged ? "diverged" : "final", std::to_string(epochs.size()),
             std::to_string(steps_run), format_real(last_loss),
             format_real(final_metrics.token_accuracy),
             format_real(final_metrics.sequence_accuracy)});
  return t.str();
}

TeacherBatch make_teacher_batch(std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("empty batch");
  const std::size_t n = examples.front().source.size();
  const std::size_t m = examples.front().target.size();
  TeacherBatch b;
  b.source = {examples.size(), n, {}};
  b.target_in = {examples.size(), m, {}};
  b.source.tokens.reserve(examples.size() * n);
  b.target_in.tokens.reserve(examples.size() * m);
  b.target_out.reserve(examples.size() * m);
  for (const Example& ex : examples) {
    if (ex.source.size() != n || ex.target.size() != m) {
      throw DimensionError("teacher batch needs equal-length examples");
    }
    b.source.tokens.insert(b.source.tokens.end(), ex.source.begin(), ex.source.end());
    b.target_in.tokens.push_back(kBosToken);
    b.target_in.tokens.insert(b.target_in.tokens.end(), ex.target.begin(), ex.target.end() - 1);
    b.target_out.insert(b.target_out.end(), ex.target.begin(), ex.target.end());
  }
  return b;
}

namespace {

template <class T>
class Adam {
 public:
  Adam(const ParameterSet<T>& params, const OptimizerParams& opt) : opt_(opt) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }

  void step(ParameterSet<T>& params, const Gradients<T>& grads, std::span<const Var<T>> bound) {
    ++t_;
    const T b1 = static_cast<T>(opt_.beta1), b2 = static_cast<T>(opt_.beta2);
    const T c1 = static_cast<T>(1 - std::pow(opt_.beta1, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1 - std::pow(opt_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(opt_.lr), eps = static_cast<T>(opt_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& w = params[i].value;
      const Tensor<T>& g = grads[bound[i]];
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const T mhat = m[j] / c1;
        const T vhat = v[j] / c2;
        w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  OptimizerParams opt_;
  std::vector<Tensor<T>> m_, v_;
  std::size_t t_ = 0;
};

template <class T>
std::size_t argmax(std::span<const T> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

template <std::floating_point T>
std::vector<std::vector<int>> greedy_decode(const Transformer<T>& model,
                                            std::span<const Example> examples,
                                            SparsifyPhase mode) {
  if (examples.empty()) return {};
  const std::size_t count = examples.size();
  const std::size_t n = examples.front().source.size();
  TokenBatch source{count, n, {}};
  for (const Example& ex : examples) {
    if (ex.source.size() != n) throw DimensionError("greedy_decode needs equal-length sources");
    source.tokens.insert(source.tokens.end(), ex.source.begin(), ex.source.end());
  }
  Graph<T> g;
  const auto bound = model.bind(g, false);
  const Var<T> memory = model.encode(bound, source, Phase::eval, mode);
  std::vector<std::vector<int>> out(count);
  for (std::size_t t = 0; t < n; ++t) {
    TokenBatch prefix{count, t + 1, {}};
    prefix.tokens.reserve(count * (t + 1));
    for (std::size_t s = 0; s < count; ++s) {
      prefix.tokens.push_back(kBosToken);
      prefix.tokens.insert(prefix.tokens.end(), out[s].begin(), out[s].end());
    }
    const Tensor<T>& logits = model.decode(bound, memory, n, prefix, Phase::eval, mode).value();
    for (std::size_t s = 0; s < count; ++s) {
      out[s].push_back(static_cast<int>(argmax(logits.row(s * (t + 1) + t))));
    }
  }
  return out;
}

template <std::floating_point T>
EvalMetrics evaluate(const Transformer<T>& model, std::span<const Example> examples,
                     SparsifyPhase mode) {
  EvalMetrics m;
  if (examples.empty()) return m;
  const auto decoded = greedy_decode(model, examples, mode);
  std::size_t tokens = 0, correct = 0, exact = 0;
  for (std::size_t s = 0; s < examples.size(); ++s) {
    const auto& target = examples[s].target;
    std::size_t hit = 0;
    for (std::size_t t = 0; t < target.size(); ++t) hit += decoded[s][t] == target[t] ? 1 : 0;
    tokens += target.size();
    correct += hit;
    exact += hit == target.size() ? 1 : 0;
  }
  m.token_accuracy = static_cast<double>(correct) / static_cast<double>(tokens);
  m.sequence_accuracy = static_cast<double>(exact) / static_cast<double>(examples.size());
  return m;
}

template <std::floating_point T>
TrainResult<T> train(const ModelConfig& model_config, const TaskSpec& task,
                     const TrainOptions& options) {
  model_config.validate();
  task.validate();
  options.validate();
  if (task.vocab_size > model_config.vocab_size) {
    throw ConfigError("task vocabulary exceeds model vocabulary");
  }
  if (task.seq_len > model_config.max_len) throw ConfigError("seq_len exceeds max_len");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const TaskData data = generate_task(task);
  TrainResult<T> result{Transformer<T>(model_config), {}};
  TrainReport& report = result.report;
  report.model = model_config;
  report.task = task;
  report.options = options;

  const SparsifyPhase mode = model_config.attention.sparsify_phase;
  Adam<T> adam(result.model.parameters(), options.optimizer);
  Rng shuffle = Rng::substream(model_config.seed, "shuffle");
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;
  bool final_is_fresh = false;

  while (report.steps_run < options.steps && !report.diverged) {
    shuffle.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0;
    std::size_t loss_count = 0;
    for (std::size_t pos = 0; pos < order.size() && report.steps_run < options.steps;
         pos += options.batch_size) {
      batch.clear();
      for (std::size_t i = pos; i < std::min(pos + options.batch_size, order.size()); ++i) {
        batch.push_back(data.train[order[i]]);
      }
      const TeacherBatch tb = make_teacher_batch(batch);
      Graph<T> g;
      const auto bound = result.model.bind(g, true);
      std::optional<Var<T>> loss;
      try {
        const Var<T> memory = result.model.encode(bound, tb.source, Phase::train, mode);
        const Var<T> logits = result.model.decode(bound, memory, tb.source.length, tb.target_in,
                                                  Phase::train, mode);
        loss = ops::cross_entropy(logits, std::span<const int>(tb.target_out));
      } catch (const DegenerateRowError&) {
        // Non-finite parameters surface as score rows with nothing finite left.
      }
      const double value =
          loss ? static_cast<double>(loss->value()[0]) : std::numeric_limits<double>::quiet_NaN();
      if (!std::isfinite(value)) {
        report.diverged = true;
        break;
      }
      adam.step(result.model.parameters(), g.backward(*loss), bound);
      report.step_losses.push_back(value);
      loss_sum += value;
      ++loss_count;
      ++report.steps_run;
    }
    if (loss_count == 0 || report.diverged) break;
    EpochRecord rec;
    rec.epoch = report.epochs.size() + 1;
    rec.step = report.steps_run;
    rec.mean_loss = loss_sum / static_cast<double>(loss_count);
    rec.eval = evaluate(result.model, std::span<const Example>(data.eval), mode);
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    report.epochs.push_back(rec);
    report.final_metrics = rec.eval;
    final_is_fresh = true;
    if (options.target_token_accuracy > 0 &&
        rec.eval.token_accuracy >= options.target_token_accuracy) {
      break;
    }
  }
  // A diverged model keeps the metrics of its last completed epoch.
  if (!final_is_fresh && !report.diverged) {
    report.final_metrics = evaluate(result.model, std::span<const Example>(data.eval), mode);
  }
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

std::vector<SweepRow> sweep_k(const ModelConfig& base, const TaskSpec& task,
                              const TrainOptions& options, std::span<const std::size_t> ks,
                              std::span<const std::uint64_t> seeds, std::size_t threads) {
  if (ks.empty() || seeds.empty()) throw ConfigError("sweep needs at least one k and one seed");
  const std::size_t jobs = ks.size() * seeds.size();
  std::vector<double> acc(jobs, 0.0);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      try {
        ModelConfig cfg = base;
        cfg.attention.variant = Variant::topk;
        cfg.attention.k = ks[j / seeds.size()];
        cfg.seed = seeds[j % seeds.size()];
        TaskSpec data = task;
        data.seed = cfg.seed;
        acc[j] = train<float>(cfg, data, options).report.final_metrics.token_accuracy;
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(threads, 1, jobs);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    SweepRow row;
    row.k = ks[i];
    row.accuracies.assign(acc.begin() + static_cast<std::ptrdiff_t>(i * seeds.size()),
                          acc.begin() + static_cast<std::ptrdiff_t>((i + 1) * seeds.size()));
    const double n = static_cast<double>(row.accuracies.size());
    double sum = 0;
    for (double a : row.accuracies) sum += a;
    row.mean_accuracy = sum / n;
    double sq = 0;
    for (double a : row.accuracies) sq += (a - row.mean_accuracy) * (a - row.mean_accuracy);
    row.std_accuracy = row.accuracies.size() > 1 ? std::sqrt(sq / (n - 1)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  CsvTable t({"k", "mean_acc", "std_acc", "n_seeds"});
  for (const auto& r : rows) {
    t.add_row({k_to_string(r.k), format_real(r.mean_accuracy), format_real(r.std_accuracy),
               std::to_string(r.accuracies.size())});
  }
  return t.str();
}

template TrainResult<float> train<float>(const ModelConfig&, const TaskSpec&, const TrainOptions&);
template TrainResult<double> train<double>(const ModelConfig&, const TaskSpec&,
                                           const TrainOptions&);
template std::vector<std::vector<int>> greedy_decode(const Transformer<float>&,
                                                     std::span<const Example>, SparsifyPhase);
template std::vector<std::vector<int>> greedy_decode(const Transformer<double>&,
                                                     std::span<const Example>, SparsifyPhase);
template EvalMetrics evaluate(const Transformer<float>&, std::span<const Example>, SparsifyPhase);
template EvalMetrics evaluate(const Transformer<double>&, std::span<const Example>, SparsifyPhase);

}  // namespace sparselab
