#include <doctest.h>

#include <cmath>
#include <vector>

#include "bapose/checks/gradcheck.h"

using namespace bapose;
using check::GradCheckOptions;

TEST_CASE("smooth function passes, wrong gradient fails") {
  // f(x) = sum x_j^3
  const std::vector<double> x{0.3, -1.2, 2.0, 0.7};
  auto f = [&](std::size_t j, double d) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i] + (i == j ? d : 0);
      s += v * v * v;
    }
    return s;
  };
  std::vector<double> good, bad;
  for (double v : x) good.push_back(3 * v * v);
  bad = good;
  bad[2] *= 1.001;
  const auto ok = check::compare_coords("cube", good, f, GradCheckOptions{});
  CHECK(ok.passed);
  CHECK(ok.coords == 4);
  CHECK(ok.kinks == 0);
  CHECK(ok.error <= 1e-8);
  CHECK_FALSE(check::compare_coords("cube", bad, f, GradCheckOptions{}).passed);
}

TEST_CASE("a step straddling a kink is excluded") {
  // |x| summed: the first coordinate sits within one step of the kink
  std::vector<double> x(200, 1.0);
  x[0] = 3e-7;
  auto f = [&](std::size_t j, double d) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] + (i == j ? d : 0));
    return s;
  };
  const std::vector<double> grad(200, 1.0);
  const auto r = check::compare_coords("abs", grad, f, GradCheckOptions{});
  CHECK(r.kinks == 1);
  CHECK(r.passed);

  // more than 1% of coordinates at kinks fails
  for (int i = 0; i < 5; ++i) x[i] = 3e-7;
  CHECK_FALSE(check::compare_coords("abs", grad, f, GradCheckOptions{}).passed);
}

TEST_CASE("parameter groups") {
  CHECK(check::parameter_group("backbone.stem0.w") == "backbone.stem0");
  CHECK(check::parameter_group("backbone.level2.conv1.b") == "backbone.level2");
  CHECK(check::parameter_group("dwasp.branch3.w") == "dwasp");
  CHECK(check::parameter_group("heads.kp.adapt.w") == "heads.kp");
  CHECK(check::parameter_group("heads.off.group1.out.b") == "heads.off");
}

TEST_CASE("toy gradient-check model") {
  const ModelConfig cfg = check::gradcheck_model_config(3);
  CHECK(cfg.pyramid.widths == std::array<int, 4>{4, 8, 16, 32});
  const auto m = check::random_model(cfg, 1);
  CHECK(m.parameter_count() == Model<double>::zeros(cfg).parameter_count());
  // offset predictors do not sit on the identity
  CHECK(m.dwasp.kp_predictor.b[4] != 0.0);
}
