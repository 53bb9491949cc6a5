#include "parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace arcvq {

namespace {
std::atomic<int> g_threads{1};
}

void set_threads(int n) {
    g_threads.store(std::max(1, n));
}

int threads() {
    return g_threads.load();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    const int nt = threads();
    if (nt <= 1 || n < 2048) {
        fn(0, n);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(nt), n);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace arcvq
