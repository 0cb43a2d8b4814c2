#pragma once

#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace qcurrents {

/// Worker cap: --threads if set, else QCURRENTS_THREADS, else hardware.
inline int thread_cap(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("QCURRENTS_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Index-parallel map with deterministic collection: results land in a
/// pre-sized vector by index, so reductions downstream see a fixed order
/// regardless of scheduling.
template <class T>
std::vector<T> parallel_map_ordered(std::size_t count, const std::function<T(std::size_t)>& fn,
                                    int threads = 0) {
    std::vector<T> out(count);
    int workers = std::min<std::size_t>(thread_cap(threads), count == 0 ? 1 : count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            for (std::size_t i = w; i < count; i += workers) out[i] = fn(i);
        });
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace qcurrents
