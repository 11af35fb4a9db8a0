// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace kascade {

// Worker count: KASCADE_THREADS if set and positive, else hardware
// concurrency (at least 1).
std::size_t max_threads();

// Calls fn(i) for i in [0, n) on up to max_threads() threads. The first
// exception thrown by any task is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace kascade
