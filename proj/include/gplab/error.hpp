/*
 * Copyright 2026 The gplab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace gplab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes or extents do not satisfy an operation's contract.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Invalid argument or configuration value.
class UsageError : public Error {
public:
  using Error::Error;
};

/// Dataset, image or file problems (missing, corrupt, unwritable).
class DataError : public Error {
public:
  using Error::Error;
};

/// Non-finite loss or gradient encountered during optimization.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Checkpoint decoding failures. `kind` distinguishes the causes.
class CheckpointError : public Error {
public:
  enum class Kind { bad_magic, version_mismatch, digest_mismatch, truncated, incompatible };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

} // namespace gplab
