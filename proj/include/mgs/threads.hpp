#pragma once

namespace mgs {

// Thread cap for the OpenMP kernels. MGS_THREADS in the environment wins,
// otherwise the OpenMP default is kept. All kernels produce bit-identical
// results regardless of the thread count.
void init_threads_from_env();
void set_threads(int n);
int max_threads();

} // namespace mgs
