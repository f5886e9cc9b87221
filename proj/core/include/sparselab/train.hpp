// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparselab/io.hpp"
#include "sparselab/model.hpp"
#include "sparselab/task.hpp"

namespace sparselab {

/// Adam hyperparameters.
struct OptimizerParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainOptions {
  std::size_t steps = 3000;
  std::size_t batch_size = 32;
  OptimizerParams optimizer;
  /// Stop once an end-of-epoch evaluation reaches this token accuracy.
  /// Values <= 0 disable early stopping.
  double target_token_accuracy = 0;

  void validate() const;
  KeyValues to_key_values() const;
};

struct EvalMetrics {
  double token_accuracy = 0;
  double sequence_accuracy = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  ///< steps completed at the end of the epoch
  double mean_loss = 0;  ///< over the epoch's steps
  EvalMetrics eval;
  double wall_seconds = 0;  ///< since training started
};

struct TrainReport {
  ModelConfig model;
  TaskSpec task;
  TrainOptions options;
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  EvalMetrics final_metrics;
  std::size_t steps_run = 0;
  bool diverged = false;
  double wall_seconds = 0;

  /// Columns kind,epoch,step,mean_loss,token_acc,seq_acc: one "epoch" row
  /// per epoch, then a "final" (or "diverged") row. No wall-clock columns, so
  /// identical runs give identical bytes.
  std::string csv() const;
};

template <std::floating_point T>
struct TrainResult {
  Transformer<T> model;
  TrainReport report;
};

/// Concatenated [count x len] source and teacher-forcing decoder inputs
/// ([BOS, y_1 .. y_{n-1}]) and targets (y_1 .. y_n) for a set of examples.
struct TeacherBatch {
  TokenBatch source;
  TokenBatch target_in;
  std::vector<int> target_out;
};
TeacherBatch make_teacher_batch(std::span<const Example> examples);

/// Teacher-forced cross-entropy training with Adam. The data comes from
/// generate_task(task); shuffling uses the "shuffle" substream of
/// model.seed. Evaluation at each epoch end honors model.attention's
/// sparsify phase. A non-finite loss stops training with diverged = true.
template <std::floating_point T>
TrainResult<T> train(const ModelConfig& model, const TaskSpec& task, const TrainOptions& options);

/// Greedy autoregressive decoding of each example's source (target length
/// = source length). `mode` picks the attention used at evaluation:
/// train_only forces dense softmax.
template <std::floating_point T>
std::vector<std::vector<int>> greedy_decode(const Transformer<T>& model,
                                            std::span<const Example> examples,
                                            SparsifyPhase mode);

/// Token and sequence accuracy of greedy decoding against the targets.
template <std::floating_point T>
EvalMetrics evaluate(const Transformer<T>& model, std::span<const Example> examples,
                     SparsifyPhase mode);

struct SweepRow {
  std::size_t k = 0;  ///< kAllKeys for "inf"
  double mean_accuracy = 0;
  double std_accuracy = 0;  ///< sample standard deviation; 0 for one seed
  std::vector<double> accuracies;
};

/// Trains the top-k variant once per (k, seed) with model.seed = task.seed =
/// seed and reports final token accuracy statistics per k. Runs are independent and
/// may use up to `threads` worker threads; results do not depend on it.
std::vector<SweepRow> sweep_k(const ModelConfig& base, const TaskSpec& task,
                              const TrainOptions& options, std::span<const std::size_t> ks,
                              std::span<const std::uint64_t> seeds, std::size_t threads = 1);

/// Columns: k, mean_acc, std_acc, n_seeds.
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace sparselab
