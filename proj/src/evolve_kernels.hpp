// Normal-velocity kernels for the front-tracking flow. Arrays hold n markers
// including one ghost at each end; entries 1..n-2 of the outputs are written.
#pragma once

#include <cstddef>

namespace selfsim::detail {

struct VelocityArgs {
  const double* r;
  const double* u;
  std::size_t n;
  double pm1;  // p - 1
  double qm1;  // q - 1
  double* vr;
  double* vu;
  double* H;
};

void normal_velocity_scalar(const VelocityArgs& a);
void normal_velocity_avx2(const VelocityArgs& a);
bool cpu_has_avx2();

}  // namespace selfsim::detail
