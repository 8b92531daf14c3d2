#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace msmsharp {

/// Worker count: the explicit request if given, else the MSM_SHARP_THREADS
/// environment variable, else std::thread::hardware_concurrency().
int resolve_threads(std::optional<int> requested = std::nullopt);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Tasks are
/// handed out dynamically, so `body` must write only to slot i of any
/// shared output. The first exception thrown by a task is rethrown after
/// all workers stop.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace msmsharp
