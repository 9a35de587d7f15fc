#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddsr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// invalid flags / flag combinations (exit code 2)
class UsageError : public Error {
public:
    using Error::Error;
};

// unreadable or inconsistent inputs (exit code 3)
class DataError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered (exit code 4)
class NumericError : public Error {
public:
    using Error::Error;
};

#define DDSR_THROW_T(type, msg)                                                \
    do {                                                                       \
        std::ostringstream oss_;                                               \
        oss_ << msg;                                                           \
        throw type(oss_.str());                                                \
    } while (0)

#define DDSR_CHECK(cond, msg)                                                  \
    do {                                                                       \
        if (!(cond)) DDSR_THROW_T(::ddsr::Error, msg);                         \
    } while (0)

#define DDSR_CHECK_DATA(cond, msg)                                             \
    do {                                                                       \
        if (!(cond)) DDSR_THROW_T(::ddsr::DataError, msg);                     \
    } while (0)

#define DDSR_CHECK_NUM(cond, msg)                                              \
    do {                                                                       \
        if (!(cond)) DDSR_THROW_T(::ddsr::NumericError, msg);                  \
    } while (0)

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

// Deterministic RNG. All sampling goes through explicit helpers so results do
// not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; draws two uniforms per call, no caching.
    double normal() {
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // resample until within +-limit*stddev
    double truncated_normal(double stddev, double limit = 2.0) {
        for (;;) {
            double z = normal();
            if (z >= -limit && z <= limit) return z * stddev;
        }
    }

    // inclusive range
    int64_t uniform_int(int64_t lo, int64_t hi) {
        DDSR_CHECK(hi >= lo, "uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    // independent child stream (splitmix64 over seed and stream id)
    Rng fork(uint64_t stream) const;

private:
    std::mt19937_64 eng_;
};

uint64_t splitmix64(uint64_t x);

// Number of worker threads for kernel-internal parallelism. Capped by the
// DDSR_THREADS environment variable. Partitioning never changes the value of
// any output element, so results do not depend on this number.
int thread_count();

// Runs fn(begin, end) over chunks of [0, n). Serial when n is small or only
// one thread is available. fn must write disjoint outputs per index.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace ddsr
