#include <doctest.h>

#include <cmath>
#include <fstream>
#include <filesystem>

#include "sgldvr/errors.hpp"
#include "sgldvr/objectives.hpp"
#include "sgldvr/rng.hpp"

using namespace sgldvr;

namespace {

double rel_err(double actual, double expected) {
  return std::abs(actual - expected) / std::max(std::abs(expected), 1e-300);
}

double max_rel_err(const Vec& actual, const Vec& expected) {
  const double scale = std::max(norm(expected), 1e-12);
  return dist(actual, expected) / scale;
}

// f = c with zero gradient everywhere; exercises the degenerate branch of the
// finite-difference oracle.
class ConstantObjective final : public FiniteSumObjective {
 public:
  ConstantObjective(std::size_t d, double c) : FiniteSumObjective(1, d), c_(c) {}
  double component_value(std::size_t, std::span<const double>) const override {
    return c_;
  }
  void component_gradient(std::size_t, std::span<const double>,
                          Vec& out) const override {
    out.assign(d_, 0.0);
  }

 private:
  double c_;
};

}  // namespace

TEST_CASE("quadratic bowl values and metadata") {
  const auto bundle = make_quadratic(2, 1.0);
  const auto& obj = *bundle.objective;
  const Vec x{1.0, 1.0};
  CHECK(obj.full_value(x) == doctest::Approx(2.0));
  const Vec g = obj.full_gradient(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(2.0));

  // mu1 = 4 scale, psi1 = 0: here ||grad f||^2 = 4 f exactly
  CHECK(*bundle.meta.reg_mu1 == doctest::Approx(4.0));
  CHECK(*bundle.meta.reg_psi1 == 0.0);
  CHECK(norm_sq(g) == doctest::Approx(4.0 * obj.full_value(x)));
  CHECK(bundle.meta.grad_lipschitz == doctest::Approx(4.0));  // 2 * scale * d

  const auto small = make_quadratic(3, 0.5);
  const Vec zero(3, 0.0);
  CHECK(small.objective->full_value(zero) == *small.meta.known_min_value);

  CHECK_THROWS_AS(make_quadratic(0, 1.0), ConfigError);
  CHECK_THROWS_AS(make_quadratic(2, -1.0), ConfigError);
}

TEST_CASE("saddle quadratic is a strict saddle at the origin") {
  const auto bundle = make_saddle_quadratic(2, 1.0, 1.0);
  const auto& obj = *bundle.objective;
  const Vec x{1.0, 0.0};
  CHECK(obj.full_value(x) == doctest::Approx(-0.5));
  const Vec g = obj.full_gradient(x);
  CHECK(g[0] == doctest::Approx(-1.0));
  CHECK(g[1] == doctest::Approx(0.0));

  // diagonal Hessian: lambda_min = -neg_eig = -q
  CHECK(*bundle.meta.strict_saddle_q == doctest::Approx(1.0));
  Vec hv;
  obj.hessian_vec(x, Vec{1.0, 0.0}, hv);
  CHECK(hv[0] == doctest::Approx(-1.0));
  CHECK(bundle.meta.known_fsp_list.front().second == doctest::Approx(-1.0));

  const auto fsp = make_saddle_quadratic(3, 0.5, 2.0);
  const Vec origin(3, 0.0);
  CHECK(norm(fsp.objective->full_gradient(origin)) == 0.0);
  CHECK(fsp.meta.grad_lipschitz == doctest::Approx(2.0));
  CHECK(*fsp.meta.strict_saddle_q == doctest::Approx(0.5));

  CHECK_THROWS_AS(make_saddle_quadratic(1, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(make_saddle_quadratic(2, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(make_saddle_quadratic(2, 1.0, -2.0), ConfigError);
}

TEST_CASE("sigmoid net layer") {
  Matrix zero_row(1, 2, 0.0);
  const auto flat = make_sigmoid_net(zero_row, 1.0, 0.0);
  CHECK(flat.objective->full_value(Vec{0.0, 0.0}) == doctest::Approx(0.5));
  CHECK(flat.objective->full_value(Vec{1.0, 0.0}) == doctest::Approx(1.5));
  const Vec g = flat.objective->full_gradient(Vec{1.0, 0.0});
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(0.0));

  CHECK_THROWS_AS(make_sigmoid_net(zero_row, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(make_sigmoid_net(zero_row, -0.2, 0.0), ConfigError);

  // random 4x3 instance: analytic gradient matches central differences
  Matrix A(4, 3);
  RandomStream rng(42);
  for (double& v : A.data) v = rng.normal();
  const auto bundle = make_sigmoid_net(A, 0.1, 0.0);
  for (int trial = 0; trial < 5; ++trial) {
    Vec x(3);
    for (double& v : x) v = rng.normal();
    const Vec analytic = bundle.objective->full_gradient(x);
    const Vec fd = finite_difference_gradient(*bundle.objective, x, 1e-5);
    CHECK(max_rel_err(fd, analytic) <= 1e-6);
  }

  // mu2 = 1/gamma with psi2 absorbing the offset
  CHECK(*bundle.meta.reg_mu2 == doctest::Approx(10.0));
  CHECK(bundle.meta.regularization_is_empirical);
}

TEST_CASE("finite difference gradient oracle") {
  const auto quad = make_quadratic(2, 1.0);
  const Vec fd = finite_difference_gradient(*quad.objective, Vec{1.0, 1.0}, 1e-5);
  CHECK(std::abs(fd[0] - 2.0) <= 1e-8);
  CHECK(std::abs(fd[1] - 2.0) <= 1e-8);

  ConstantObjective constant(3, 4.2);
  const Vec zero = finite_difference_gradient(constant, Vec{0.3, -1.0, 2.0}, 1e-4);
  CHECK(norm(zero) == 0.0);

  CHECK_THROWS_AS(finite_difference_gradient(constant, Vec(3, 0.0), 0.0), ConfigError);
}

TEST_CASE("binary classifier dataset and network") {
  CHECK_THROWS_AS(make_binary_classifier(5, 1), ConfigError);

  ClassifierOptions options;
  options.lipschitz_pairs = 50;  // keep the empirical fit cheap in tests
  const auto bundle = make_binary_classifier(200, 7, options);
  const auto& net = *bundle.objective;
  CHECK(net.component_count() == 200);
  CHECK(net.dataset().size() == 250);  // held-out quarter, 80/20 overall
  CHECK(net.dataset().train_count == 200);
  CHECK(bundle.meta.lipschitz_is_empirical);
  CHECK(bundle.meta.grad_lipschitz > 0.0);

  // loss at a random init is finite and positive
  RandomStream rng(3);
  Vec x(net.dimension());
  for (double& v : x) v = 0.1 * rng.normal();
  const double loss = net.full_value(x);
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);

  // gradient of the network loss matches central differences
  for (int trial = 0; trial < 10; ++trial) {
    for (double& v : x) v = 0.2 * rng.normal();
    const Vec analytic = net.full_gradient(x);
    const Vec fd = finite_difference_gradient(net, x, 1e-5);
    CHECK(max_rel_err(fd, analytic) <= 1e-5);
  }

  // zero-weight network predicts a single class: error ~ 1/2 on balanced data
  double err_sum = 0.0;
  const int n_seeds = 24;
  for (int seed = 0; seed < n_seeds; ++seed) {
    ClassifierOptions cheap;
    cheap.lipschitz_pairs = 0;
    const auto trial = make_binary_classifier(400, 1000 + seed, cheap);
    err_sum += trial.objective->misclassification_rate(
        Vec(trial.objective->dimension(), 0.0), Split::all);
  }
  CHECK(std::abs(err_sum / n_seeds - 0.5) <= 0.05);
}

TEST_CASE("dataset csv round trip and parse errors") {
  ClassifierOptions options;
  options.lipschitz_pairs = 0;
  const auto bundle = make_binary_classifier(40, 99, options);
  const auto& data = bundle.objective->dataset();

  const auto path = std::filesystem::temp_directory_path() / "sgldvr_data.csv";
  data.write_csv(path.string());
  const Dataset loaded = Dataset::read_csv(path.string(), data.train_count);
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded.labels[i] == data.labels[i]);
    CHECK(loaded.features(i, 0) == data.features(i, 0));
    CHECK(loaded.features(i, 1) == data.features(i, 1));
  }

  {
    std::ofstream bad(path);
    bad << "0.1,0.2,3\n";  // label must be +-1
  }
  CHECK_THROWS_AS(Dataset::read_csv(path.string(), 0), ParseError);
  {
    std::ofstream bad(path);
    bad << "0.1,zzz,1\n";
  }
  CHECK_THROWS_AS(Dataset::read_csv(path.string(), 0), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("unbiased decomposition of every zoo member") {
  RandomStream rng(1234);
  auto check_decomposition = [&](const FiniteSumObjective& obj, std::size_t samples,
                                 double x_scale) {
    Vec x(obj.dimension()), g(obj.dimension()), sum(obj.dimension());
    for (std::size_t s = 0; s < samples; ++s) {
      for (double& v : x) v = x_scale * rng.normal();
      double value_sum = 0.0;
      sum.assign(obj.dimension(), 0.0);
      for (std::size_t i = 0; i < obj.component_count(); ++i) {
        value_sum += obj.component_value(i, x);
        obj.component_gradient(i, x, g);
        axpy(1.0, g, sum);
      }
      const double inv_n = 1.0 / static_cast<double>(obj.component_count());
      value_sum *= inv_n;
      scale(sum, inv_n);
      CHECK(rel_err(obj.full_value(x), value_sum) <= 1e-12);
      CHECK(max_rel_err(sum, obj.full_gradient(x)) <= 1e-12);
    }
  };

  check_decomposition(*make_quadratic(5, 0.7).objective, 1000, 1.0);
  check_decomposition(*make_saddle_quadratic(4, 0.5, 2.0).objective, 1000, 1.0);
  Matrix A(6, 3);
  for (double& v : A.data) v = rng.normal();
  check_decomposition(*make_sigmoid_net(A, 0.2, 0.1).objective, 1000, 1.0);
  ClassifierOptions cheap;
  cheap.lipschitz_pairs = 0;
  check_decomposition(*make_binary_classifier(50, 5, cheap).objective, 100, 0.3);
}

TEST_CASE("gradient Lipschitz and regularization spot checks") {
  RandomStream rng(777);
  auto spot_check = [&](const ObjectiveBundle& bundle, std::size_t pairs) {
    const auto& obj = *bundle.objective;
    const double hw = bundle.meta.check_box_halfwidth;
    Vec x(obj.dimension()), y(obj.dimension());
    for (std::size_t p = 0; p < pairs; ++p) {
      for (double& v : x) v = hw * (2.0 * rng.uniform01() - 1.0);
      for (double& v : y) v = hw * (2.0 * rng.uniform01() - 1.0);
      const double gap = dist(x, y);
      if (gap < 1e-9) continue;
      CHECK(dist(obj.full_gradient(x), obj.full_gradient(y)) <=
            bundle.meta.grad_lipschitz * gap * (1.0 + 1e-9));
      if (bundle.meta.has_regularization()) {
        const double f = obj.full_value(x);
        const Vec g = obj.full_gradient(x);
        CHECK(norm_sq(g) >= *bundle.meta.reg_mu1 * f - *bundle.meta.reg_psi1 - 1e-9);
        CHECK(norm_sq(x) <= *bundle.meta.reg_mu2 * f + *bundle.meta.reg_psi2 + 1e-9);
      }
    }
  };

  spot_check(make_quadratic(4, 1.3), 1000);
  spot_check(make_saddle_quadratic(3, 0.7, 1.9), 1000);
  Matrix A(5, 3);
  for (double& v : A.data) v = rng.normal();
  spot_check(make_sigmoid_net(A, 0.4, 0.2), 1000);
}
