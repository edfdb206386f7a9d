/*
 * Copyright 2026 The fedadv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FEDADV_PARALLEL_H_
#define FEDADV_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace fedadv {

// Worker bound from FEDADV_THREADS, defaulting to the number of logical
// CPUs. Always at least 1.
std::size_t WorkerCount();

// Runs body(0) .. body(n - 1) on up to WorkerCount() threads. Each index runs
// exactly once; the first exception thrown by any body is rethrown after all
// workers join. Bodies must only write to state owned by their index.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace fedadv

#endif  // FEDADV_PARALLEL_H_
