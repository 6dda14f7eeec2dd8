#include <doctest.h>

#include <cmath>
#include <vector>

#include "clusterate/stats.hpp"

using namespace clusterate;

TEST_CASE("normal CDF at reference points") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(normal_cdf(-1.0) == doctest::Approx(0.15865525393).epsilon(1e-9));
}

TEST_CASE("normal quantile inverts the CDF") {
  for (double p : {0.001, 0.1, 0.25, 0.5, 0.9, 0.999}) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  }
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-8));
  CHECK_THROWS(normal_quantile(0.0));
  CHECK_THROWS(normal_quantile(1.0));
}

TEST_CASE("regularized incomplete beta matches closed forms") {
  // I_x(1,1) = x and I_x(2,2) = 3x^2 - 2x^3.
  for (double x : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    CHECK(regularized_incomplete_beta(1.0, 1.0, x) ==
          doctest::Approx(x).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(2.0, 2.0, x) ==
          doctest::Approx(3 * x * x - 2 * x * x * x).epsilon(1e-12));
  }
  CHECK(regularized_incomplete_beta(2.5, 1.5, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2.5, 1.5, 1.0) == 1.0);
}

TEST_CASE("t distribution: Cauchy (df=1) closed form") {
  // With df=1 the CDF is 1/2 + atan(t)/pi.
  for (double t : {-3.0, -0.5, 0.0, 0.5, 3.0}) {
    CHECK(student_t_cdf(t, 1.0) ==
          doctest::Approx(0.5 + std::atan(t) / M_PI).epsilon(1e-10));
  }
}

TEST_CASE("t quantiles hit the standard table") {
  CHECK(student_t_quantile(0.975, 1.0) ==
        doctest::Approx(12.7062047364).epsilon(1e-7));
  CHECK(student_t_quantile(0.975, 4.0) ==
        doctest::Approx(2.7764451052).epsilon(1e-7));
  CHECK(student_t_quantile(0.95, 10.0) ==
        doctest::Approx(1.8124611228).epsilon(1e-7));
  // Large df converges to the normal quantile.
  CHECK(student_t_quantile(0.975, 1e9) ==
        doctest::Approx(1.959963985).epsilon(1e-5));
  // Symmetry.
  CHECK(student_t_quantile(0.025, 7.0) ==
        doctest::Approx(-student_t_quantile(0.975, 7.0)).epsilon(1e-10));
  CHECK(student_t_quantile(0.5, 3.0) == 0.0);
  // Non-integral df is supported (interpolates between neighbours).
  const double q = student_t_quantile(0.975, 4.5);
  CHECK(q < student_t_quantile(0.975, 4.0));
  CHECK(q > student_t_quantile(0.975, 5.0));
}

TEST_CASE("t quantile round-trips through the CDF") {
  for (double df : {1.0, 2.5, 8.0, 30.0}) {
    for (double p : {0.6, 0.9, 0.975, 0.999}) {
      CHECK(student_t_cdf(student_t_quantile(p, df), df) ==
            doctest::Approx(p).epsilon(1e-9));
    }
  }
}

TEST_CASE("KS distance: exact small-sample value and discrimination") {
  // Two-point sample {-1, 1}: the maximal gap against Phi is at the jump.
  const double d = ks_distance_to_normal({-1.0, 1.0});
  CHECK(d == doctest::Approx(normal_cdf(1.0) - 0.5).epsilon(1e-12));

  // Normal scores have a small distance; a shifted sample a large one.
  std::vector<double> scores, shifted;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const double z = normal_quantile((i + 0.5) / n);
    scores.push_back(z);
    shifted.push_back(z + 1.0);
  }
  CHECK(ks_distance_to_normal(scores) < 0.001);
  CHECK(ks_distance_to_normal(shifted) > 0.3);
  CHECK_THROWS(ks_distance_to_normal({}));
}

TEST_CASE("compensated summation beats naive accumulation") {
  KahanSum ks;
  double naive = 0.0;
  ks.add(1.0);
  naive += 1.0;
  for (int i = 0; i < 10000000; ++i) {
    ks.add(1e-16);
    naive += 1e-16;
  }
  CHECK(ks.value() == doctest::Approx(1.0 + 1e-9).epsilon(1e-12));
  CHECK(naive == 1.0);  // every tiny term was absorbed
}
