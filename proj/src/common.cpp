#include "falldet/common.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace falldet {

namespace threads {

#ifdef _OPENMP
static int g_requested = 0;  // 0 = hardware default

int max_threads() { return g_requested > 0 ? g_requested : omp_get_max_threads(); }

void set_threads(int n) {
    g_requested = n > 0 ? n : 0;
    if (n > 0) omp_set_num_threads(n);
}
#else
int max_threads() { return 1; }
void set_threads(int) {}
#endif

}  // namespace threads

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw DegenerateInput("quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw DegenerateInput("quantile: q outside [0,1]");
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    double pos = q * double(v.size() - 1);
    size_t lo = size_t(pos);
    size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - double(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace falldet
