#include "cvae/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace cvae {

namespace {
int g_threads = 1;
}

int num_threads() { return g_threads; }

void set_num_threads(int n) { g_threads = std::max(1, n); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t, int)>& fn) {
    int t = std::min<int64_t>(g_threads, n);
    if (t <= 1) {
        if (n > 0) fn(0, n, 0);
        return;
    }
    int64_t chunk = (n + t - 1) / t;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(t - 1));
    for (int i = 1; i < t; ++i) {
        int64_t b = i * chunk, e = std::min<int64_t>(n, b + chunk);
        if (b >= e) break;
        workers.emplace_back(fn, b, e, i);
    }
    fn(0, std::min<int64_t>(n, chunk), 0);
    for (auto& w : workers) w.join();
}

}  // namespace cvae
