// Copyright 2026 The mdsvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mdsvit {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents are invalid, incompatible, or do not match a contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A reduction or softmax axis is out of range.
class AxisError : public Error {
 public:
  using Error::Error;
};

/// backward() was called on a tensor with more than one element.
class RankError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration (model presets, CLI keys, training hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input is valid in shape but statistically degenerate: all-zero maps,
/// zero variance, single-class ground truth, 1x1 batch statistics.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Dataset layout, manifest, or image codec failures.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint version mismatch or integrity failure.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// NaN/inf encountered during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mdsvit
