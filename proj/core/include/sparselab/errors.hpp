// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sparselab {

/// Operand extents do not fit the operation (matmul inner dims, slice bounds, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A row has no finite entry left to normalize over.
class DegenerateRowError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke an API precondition that is not about shapes.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration value (k == 0, d_model % heads != 0, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace sparselab
