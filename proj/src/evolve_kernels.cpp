#include "evolve_kernels.hpp"

#include <cmath>

namespace selfsim::detail {

namespace {

// The AVX2 path performs exactly these operations in this order, so the two
// kernels agree bit for bit.
inline void velocity_at(const VelocityArgs& a, std::size_t i) {
  const double ar = a.r[i] - a.r[i - 1], au = a.u[i] - a.u[i - 1];
  const double br = a.r[i + 1] - a.r[i], bu = a.u[i + 1] - a.u[i];
  const double la = std::sqrt(ar * ar + au * au);
  const double lb = std::sqrt(br * br + bu * bu);
  const double tar = ar / la, tau = au / la;
  const double tbr = br / lb, tbu = bu / lb;
  const double sr = tar + tbr, su = tau + tbu;
  const double ls = std::sqrt(sr * sr + su * su);
  const double Tr = sr / ls, Tu = su / ls;
  const double w = 2.0 / (la + lb);
  const double kr = (tbr - tar) * w, ku = (tbu - tau) * w;
  const double k = ku * Tr - kr * Tu;
  const double h = k + a.pm1 * Tu / a.r[i] - a.qm1 * Tr / a.u[i];
  a.H[i] = h;
  a.vr[i] = -(h * Tu);
  a.vu[i] = h * Tr;
}

}  // namespace

void normal_velocity_scalar(const VelocityArgs& a) {
  for (std::size_t i = 1; i + 1 < a.n; ++i) velocity_at(a, i);
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

#if defined(__x86_64__) || defined(__i386__)
}  // namespace selfsim::detail

#include <immintrin.h>

namespace selfsim::detail {

__attribute__((target("avx2"))) void normal_velocity_avx2(const VelocityArgs& a) {
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d pm1 = _mm256_set1_pd(a.pm1);
  const __m256d qm1 = _mm256_set1_pd(a.qm1);
  std::size_t i = 1;
  for (; i + 4 < a.n; i += 4) {
    const __m256d r0 = _mm256_loadu_pd(a.r + i - 1), r1 = _mm256_loadu_pd(a.r + i),
                  r2 = _mm256_loadu_pd(a.r + i + 1);
    const __m256d u0 = _mm256_loadu_pd(a.u + i - 1), u1 = _mm256_loadu_pd(a.u + i),
                  u2 = _mm256_loadu_pd(a.u + i + 1);
    const __m256d ar = _mm256_sub_pd(r1, r0), au = _mm256_sub_pd(u1, u0);
    const __m256d br = _mm256_sub_pd(r2, r1), bu = _mm256_sub_pd(u2, u1);
    const __m256d la = _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(ar, ar), _mm256_mul_pd(au, au)));
    const __m256d lb = _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(br, br), _mm256_mul_pd(bu, bu)));
    const __m256d tar = _mm256_div_pd(ar, la), tau = _mm256_div_pd(au, la);
    const __m256d tbr = _mm256_div_pd(br, lb), tbu = _mm256_div_pd(bu, lb);
    const __m256d sr = _mm256_add_pd(tar, tbr), su = _mm256_add_pd(tau, tbu);
    const __m256d ls = _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(sr, sr), _mm256_mul_pd(su, su)));
    const __m256d Tr = _mm256_div_pd(sr, ls), Tu = _mm256_div_pd(su, ls);
    const __m256d w = _mm256_div_pd(two, _mm256_add_pd(la, lb));
    const __m256d kr = _mm256_mul_pd(_mm256_sub_pd(tbr, tar), w);
    const __m256d ku = _mm256_mul_pd(_mm256_sub_pd(tbu, tau), w);
    const __m256d k = _mm256_sub_pd(_mm256_mul_pd(ku, Tr), _mm256_mul_pd(kr, Tu));
    const __m256d rad = _mm256_div_pd(_mm256_mul_pd(pm1, Tu), r1);
    const __m256d axl = _mm256_div_pd(_mm256_mul_pd(qm1, Tr), u1);
    const __m256d h = _mm256_sub_pd(_mm256_add_pd(k, rad), axl);
    _mm256_storeu_pd(a.H + i, h);
    _mm256_storeu_pd(a.vr + i, _mm256_sub_pd(_mm256_setzero_pd(), _mm256_mul_pd(h, Tu)));
    _mm256_storeu_pd(a.vu + i, _mm256_mul_pd(h, Tr));
  }
  for (; i + 1 < a.n; ++i) velocity_at(a, i);
}

#else

void normal_velocity_avx2(const VelocityArgs& a) { normal_velocity_scalar(a); }

#endif

}  // namespace selfsim::detail
