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

#include <cstdint>
#include <functional>

namespace mdsvit {

/// Number of worker threads used inside a single primitive. Initialized from
/// MDSVIT_NUM_THREADS (default 1).
int num_threads();
void set_num_threads(int n);

/// Runs fn(i) for every task index in [0, n_tasks). Tasks must write disjoint
/// outputs. Task boundaries are chosen by the caller independently of the
/// thread count, so results are bitwise identical for any num_threads().
void parallel_tasks(std::int64_t n_tasks, const std::function<void(std::int64_t)>& fn);

}  // namespace mdsvit
