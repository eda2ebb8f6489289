#include "qgalore/runtime.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace qgalore {

int thread_count() {
    static const int count = [] {
        const char* env = std::getenv("QGALORE_THREADS");
        if (env == nullptr) return 1;
        int n = std::atoi(env);
        if (n < 1) return 1;
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        return std::min(n, hw);
    }();
    return count;
}

void parallel_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (count <= 0) return;
    int workers = thread_count();
    if (workers <= 1 || count < 2 * workers) {
        fn(0, count);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    std::int64_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::int64_t begin = w * chunk;
        std::int64_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : threads) t.join();
}

} // namespace qgalore
