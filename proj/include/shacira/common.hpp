// Copyright 2026 The shacira Authors
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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace shacira {

// Invalid configuration or flag values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failures (missing file, short write).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed bitstreams or images.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced non-finite values.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric faults inside kernels (non-finite gradients, bad probe points).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Execution policy for the batch kernels. Serial runs the same fixed-chunk
// schedule as Parallel, so both produce bit-identical results; Serial exists
// as the reference path for tests and the benchmark.
enum class Exec { kSerial, kParallel };

// Number of independent accumulation chunks in the batch kernels. Fixed (not
// tied to the thread count) so results do not depend on OMP_NUM_THREADS.
inline constexpr int kGradChunks = 32;

}  // namespace shacira
