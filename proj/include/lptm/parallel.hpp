#pragma once

#include <functional>

namespace lptm {

// Global worker count. 1 = fully sequential. Default is the hardware thread
// count; the CLI maps --threads / LPTM_THREADS here.
void set_thread_count(int n);
int thread_count();

int chunk_count(int n, int grain);

// Splits [0,n) into fixed-size chunks of `grain` items and runs fn over them,
// possibly concurrently. Chunk boundaries depend only on n and grain, never on
// the thread count, so reductions that merge per-chunk partials in chunk order
// give bit-identical results for any --threads value.
void parallel_chunks(int n, int grain,
                     const std::function<void(int chunk, int begin, int end)>& fn);

void parallel_for(int n, int grain, const std::function<void(int begin, int end)>& fn);

} // namespace lptm
