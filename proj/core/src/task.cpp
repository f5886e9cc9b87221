// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/task.hpp"

#include <algorithm>
#include <string>

#include "sparselab/errors.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::sort: return "sort";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  for (TaskKind k : {TaskKind::copy, TaskKind::reverse, TaskKind::sort}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  if (vocab_size < 4) throw ConfigError("vocab_size must be >= 4 (3 reserved ids)");
  if (seq_len == 0) throw ConfigError("seq_len must be >= 1");
  if (n_train == 0 || n_eval == 0) throw ConfigError("n_train and n_eval must be positive");
}

std::vector<int> apply_task(TaskKind kind, std::span<const int> source) {
  std::vector<int> target(source.begin(), source.end());
  switch (kind) {
    case TaskKind::copy: break;
    case TaskKind::reverse: std::reverse(target.begin(), target.end()); break;
    case TaskKind::sort: std::sort(target.begin(), target.end()); break;
  }
  return target;
}

TaskData generate_task(const TaskSpec& spec) {
  spec.validate();
  Rng rng = Rng::substream(spec.seed, "data");
  const auto content = static_cast<std::uint64_t>(spec.vocab_size) - kFirstContentToken;
  auto draw = [&] {
    Example ex;
    ex.source.resize(spec.seq_len);
    for (int& tok : ex.source) tok = kFirstContentToken + static_cast<int>(rng.below(content));
    ex.target = apply_task(spec.kind, ex.source);
    return ex;
  };
  TaskData data;
  data.train.reserve(spec.n_train);
  data.eval.reserve(spec.n_eval);
  for (std::size_t i = 0; i < spec.n_train; ++i) data.train.push_back(draw());
  for (std::size_t i = 0; i < spec.n_eval; ++i) data.eval.push_back(draw());
  return data;
}

}  // namespace sparselab
