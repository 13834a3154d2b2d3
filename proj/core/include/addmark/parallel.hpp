#pragma once

#include <cstddef>
#include <functional>

namespace addmark {

/// Worker count used by parallel loops. Defaults to ADDMARK_THREADS or 1.
int thread_count();
void set_thread_count(int n);

/// Runs body(chunk) for chunk in [0, chunks). Chunk boundaries are fixed by the
/// caller, so results reduced in chunk order do not depend on the thread count.
void parallel_for(std::size_t chunks, const std::function<void(std::size_t)>& body);

}  // namespace addmark
