// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace sparselab {

// Reserved token ids; content tokens are drawn from [kFirstContentToken, vocab).
inline constexpr int kPadToken = 0;
inline constexpr int kBosToken = 1;
inline constexpr int kEosToken = 2;
inline constexpr int kFirstContentToken = 3;

enum class TaskKind { copy, reverse, sort };

std::string_view to_string(TaskKind kind);
/// Throws ConfigError on unknown names.
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::copy;
  std::size_t seq_len = 8;
  std::size_t vocab_size = 16;
  std::size_t n_train = 2000;
  std::size_t n_eval = 200;
  std::uint64_t seed = 1;

  /// Throws ConfigError unless vocab_size >= 4 (three reserved ids plus at
  /// least one content token), seq_len >= 1 and both set sizes are positive.
  void validate() const;
};

struct Example {
  std::vector<int> source;
  std::vector<int> target;
};

struct TaskData {
  std::vector<Example> train;
  std::vector<Example> eval;
};

/// Target sequence of `kind` for a source sequence.
std::vector<int> apply_task(TaskKind kind, std::span<const int> source);

/// Uniform random content sequences with their targets; deterministic in
/// spec.seed.
TaskData generate_task(const TaskSpec& spec);

}  // namespace sparselab
