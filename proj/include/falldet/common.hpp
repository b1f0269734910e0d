#pragma once
// Shared plumbing: error taxonomy, deterministic RNG, thread helpers.

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace falldet {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One type per failure class documented in the module contracts.
#define FALLDET_ERROR(NAME)                   \
    struct NAME : Error {                     \
        using Error::Error;                   \
    }

FALLDET_ERROR(DegenerateInput);
FALLDET_ERROR(ShapeMismatch);
FALLDET_ERROR(NoSignal);
FALLDET_ERROR(InsufficientData);
FALLDET_ERROR(ScriptError);
FALLDET_ERROR(InvalidLabel);
FALLDET_ERROR(DivergenceError);
FALLDET_ERROR(SpecError);
FALLDET_ERROR(ProtocolError);
FALLDET_ERROR(CorruptFrame);
FALLDET_ERROR(NumericFault);
FALLDET_ERROR(IoError);

#undef FALLDET_ERROR

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256** seeded via splitmix64. Self-contained so that every draw is
// bit-identical across platforms and standard libraries; std:: distributions
// are implementation-defined and would break byte-level reproducibility.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        have_normal_ = false;
    }

    uint64_t seed() const { return seed_; }

    // Independent substream; salt keeps sibling streams decorrelated.
    Rng child(uint64_t salt) const {
        uint64_t mix = seed_ ^ (salt * 0x9e3779b97f4a7c15ull + 0x853c49e6748fea9bull);
        uint64_t sm = mix;
        return Rng(splitmix64(sm));
    }

    uint64_t u64() {
        uint64_t result = rotl(s_[1] * 5, 7) * 9;
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return double(u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is irrelevant at our n.
    uint64_t below(uint64_t n) { return n ? u64() % n : 0; }

    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return cached_normal_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_normal_ = r * std::sin(a);
        have_normal_ = true;
        return r * std::cos(a);
    }
    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t seed_;
    uint64_t s_[4];
    bool have_normal_;
    double cached_normal_ = 0.0;
};

namespace threads {
// Number of OpenMP threads kernels will use (1 when built without OpenMP).
int max_threads();
// Clamp the OpenMP thread count; n < 1 resets to the hardware default.
void set_threads(int n);
}  // namespace threads

// Type-7 quantile (linear interpolation), q in [0, 1]. Sorts a copy.
double quantile(std::vector<double> v, double q);
inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace falldet
