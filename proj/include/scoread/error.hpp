// Copyright 2026 The ScoreAD Authors.
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

namespace scoread {

// Root of every error the library throws.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (shapes, ranges, windows).
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

// A file exists but its contents do not follow the container contract.
class FormatError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

// Input is well-formed but cannot be processed (constant cube, all-zero scores).
class DegenerateInput : public Error {
  public:
    using Error::Error;
};

// Two artifacts that must agree do not (cube vs model bands, map vs mask size).
class DataMismatch : public Error {
  public:
    using Error::Error;
};

// Evaluation needs both classes in the ground truth.
class SingleClassMask : public Error {
  public:
    using Error::Error;
};

// Non-finite loss or gradient during optimization.
class TrainingDiverged : public Error {
  public:
    using Error::Error;
};

}  // namespace scoread
