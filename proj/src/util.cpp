#include "nslab/util.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace nslab {

int worker_count() {
    if (const char* env = std::getenv("NS_LAB_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return std::min(v, 64);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return std::clamp(static_cast<int>(hw), 1, 16);
}

} // namespace nslab
