#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace dermforge {

// Worker cap for OpenMP regions. DERMFORGE_THREADS overrides the hardware
// default; values < 1 are clamped to 1.
inline int worker_count() {
    static const int n = [] {
        if (const char* env = std::getenv("DERMFORGE_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? static_cast<int>(hw) : 1;
    }();
    return n;
}

}  // namespace dermforge
