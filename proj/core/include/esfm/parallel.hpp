#pragma once

#include <cstddef>
#include <functional>

namespace esfm {

/// Runs body(0..count-1) on up to `workers` threads (workers <= 1 runs inline).
/// Each index must write only to its own output slot. If any call throws, the
/// exception from the lowest failing index is rethrown after all threads join,
/// so the error surfaced does not depend on scheduling.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body);

/// Worker count actually used for a request: values < 1 mean "all hardware threads".
int resolve_workers(int requested) noexcept;

}  // namespace esfm
