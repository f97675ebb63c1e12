#include "mgs/threads.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mgs {

void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

void init_threads_from_env() {
    const char* env = std::getenv("MGS_THREADS");
    if (!env) return;
    try {
        int n = std::stoi(env);
        if (n > 0) set_threads(n);
    } catch (...) {
        // Unparseable values keep the default.
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace mgs
