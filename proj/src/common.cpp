#include "ddsr/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace ddsr {

std::string shape_str(const Shape& s) {
    std::ostringstream oss;
    oss << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) oss << ",";
        oss << s[i];
    }
    oss << "]";
    return oss.str();
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng Rng::fork(uint64_t stream) const {
    std::mt19937_64 copy = eng_;
    uint64_t base = copy();
    return Rng(splitmix64(base ^ splitmix64(stream + 0x51ed2701)));
}

int thread_count() {
    static int cached = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw <= 0) hw = 1;
        if (const char* env = std::getenv("DDSR_THREADS")) {
            int cap = std::atoi(env);
            if (cap >= 1) hw = std::min(hw, cap);
        }
        return hw;
    }();
    return cached;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    int nt = thread_count();
    if (nt <= 1 || n < 2048) {
        fn(0, n);
        return;
    }
    int64_t chunks = std::min<int64_t>(nt, n);
    int64_t per = (n + chunks - 1) / chunks;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(chunks));
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    for (int64_t c = 0; c < chunks; ++c) {
        int64_t b = c * per, e = std::min(n, b + per);
        if (b >= e) break;
        workers.emplace_back([&, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                if (!failed.exchange(true)) err = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace ddsr
