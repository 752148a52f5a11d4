// AdaGrad-Norm and RMSProp side by side on a noisy ill-conditioned quadratic.
#include <cmath>
#include <cstdio>
#include <vector>

#include "adalab.hpp"

int main() {
  using namespace adalab;
  const std::size_t d = 10;
  std::vector<double> eig(d);
  for (std::size_t i = 0; i < d; ++i) eig[i] = std::pow(10.0, static_cast<double>(i) / (d - 1));
  const Objective obj = Objective::quadratic(eig, Vector(d));
  const Oracle oracle = Oracle::additive_gaussian(0.1, d);
  const Vector theta1(std::vector<double>(d, 5.0));

  RngStream rng_a(2024, 0);
  RngStream rng_r(2024, 1);
  AdaGradNormState a = adagrad_init(theta1, 1.0, 1.0);
  RmsPropState r = rmsprop_init(theta1, 1e-6, 1e-8, 0.9);

  std::printf("%8s  %14s %14s  %14s\n", "n", "adagrad g", "adagrad S", "rmsprop g");
  for (std::uint64_t n = 1; n <= 100'000; ++n) {
    a = adagrad_step(std::move(a), sample(oracle, obj, a.theta, rng_a));
    r = rmsprop_step(std::move(r), sample(oracle, obj, r.theta, rng_r));
    if (n == 1 || n == 10 || n == 100 || n == 1000 || n == 10'000 || n == 100'000) {
      std::printf("%8llu  %14.6e %14.6e  %14.6e\n", static_cast<unsigned long long>(n),
                  obj.eval(a.theta), a.S.value(), obj.eval(r.theta));
    }
  }
  return 0;
}
