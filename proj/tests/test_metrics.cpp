#include <doctest.h>

#include <cmath>

#include "umate/metrics.hpp"

using namespace umate;
using geom::Vec3;

namespace {

std::vector<Vec3> cube() {
  std::vector<Vec3> v;
  for (int k = 0; k < 8; ++k)
    v.push_back({double((k >> 2) & 1), double((k >> 1) & 1), double(k & 1)});
  return v;
}

std::vector<Vec3> rotate_all(const std::vector<Vec3>& coords, const geom::Mat3& r) {
  std::vector<Vec3> out;
  for (const auto& x : coords) out.push_back(geom::matvec(r, x));
  return out;
}

}  // namespace

TEST_CASE("f_sym") {
  CHECK(metrics::f_sym(cube()) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(metrics::f_sym({{0, 0, 0}, {3, 1, -2}}) == doctest::Approx(0.0).epsilon(1e-12));
  // collinear {0, 1, 3}: centroid 4/3; best midpoints give (1/6 + 1/3 + 1/6)/3
  CHECK(metrics::f_sym({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}) ==
        doctest::Approx(2.0 / 9.0).epsilon(1e-9));
}

TEST_CASE("f_per") {
  CHECK(metrics::f_per(cube()) == doctest::Approx(0.0).epsilon(1e-12));

  Rng rng(13);
  const auto rotated = rotate_all(cube(), geom::random_rotation(rng));
  CHECK(metrics::f_per(rotated) == doctest::Approx(0.0).epsilon(1e-9));

  // displaced corner: every axis group has one deviation 0.045*sqrt(5) and
  // three of 0.015*sqrt(5)
  auto displaced = cube();
  displaced[7] = {1.12, 1.06, 1.0};
  CHECK(metrics::f_per(displaced) ==
        doctest::Approx(0.0225 * std::sqrt(5.0)).epsilon(1e-9));

  CHECK_THROWS_AS(metrics::f_per({{0, 0, 0}, {1, 1, 1}}), MetricInapplicable);
}

TEST_CASE("f_qua harmonic combination") {
  CHECK(metrics::f_qua(0.0, 0.0) == 0.0);
  CHECK(metrics::f_qua(0.0, 0.4) == 0.0);
  CHECK(metrics::f_qua(0.37, 0.37) == doctest::Approx(0.37));
  CHECK(metrics::f_qua(0.02, 0.06) == doctest::Approx(0.03));
  // bounded by twice either input
  CHECK(metrics::f_qua(0.01, 100.0) <= 0.02 + 1e-15);
}

TEST_CASE("f_cond one-sided chamfer") {
  const auto gt = cube();
  CHECK(metrics::f_cond(gt, gt) == doctest::Approx(0.0));

  std::vector<Vec3> permuted = {gt[5], gt[0], gt[7], gt[2], gt[1], gt[6], gt[3], gt[4]};
  CHECK(metrics::f_cond(permuted, gt) == doctest::Approx(0.0));

  CHECK(metrics::f_cond({{0.3, 0.0, 0.0}}, gt) == doctest::Approx(0.3));

  // subsets score zero
  CHECK(metrics::f_cond({gt[1], gt[4]}, gt) == doctest::Approx(0.0));
}

TEST_CASE("metrics are rotation and permutation invariant") {
  auto displaced = cube();
  displaced[7] = {1.12, 1.06, 1.0};
  Rng rng(17);
  const auto r = geom::random_rotation(rng);
  const auto rotated = rotate_all(displaced, r);

  CHECK(metrics::f_sym(rotated) == doctest::Approx(metrics::f_sym(displaced)).epsilon(1e-9));
  CHECK(metrics::f_per(rotated) == doctest::Approx(metrics::f_per(displaced)).epsilon(1e-9));
  CHECK(metrics::f_cond(rotated, rotated) == doctest::Approx(0.0));

  std::vector<Vec3> shuffled = {displaced[3], displaced[6], displaced[0], displaced[7],
                                displaced[2], displaced[5], displaced[1], displaced[4]};
  CHECK(metrics::f_sym(shuffled) == doctest::Approx(metrics::f_sym(displaced)).epsilon(1e-12));
  CHECK(metrics::f_cond(shuffled, displaced) == doctest::Approx(0.0));
}

TEST_CASE("nrmse scalar") {
  CHECK(metrics::nrmse_scalar({0.2, 0.8}, {0.2, 0.8}) == doctest::Approx(0.0));
  CHECK(metrics::nrmse_scalar({0.5, 0.5}, {0.0, 1.0}) == doctest::Approx(0.5));

  // common affine rescale of pred and gt cancels
  const double a = 3.7, b = -1.2;
  const std::vector<double> gt{0.1, 0.4, 0.9}, pred{0.2, 0.3, 0.7};
  std::vector<double> gt2, pred2;
  for (double x : gt) gt2.push_back(a * x + b);
  for (double x : pred) pred2.push_back(a * x + b);
  CHECK(metrics::nrmse_scalar(pred2, gt2) ==
        doctest::Approx(metrics::nrmse_scalar(pred, gt)).epsilon(1e-12));

  CHECK_THROWS_AS(metrics::nrmse_scalar({1.0, 2.0}, {0.5, 0.5}), ContractError);
  CHECK_THROWS_AS(metrics::nrmse_scalar({1.0}, {0.5, 0.5}), ContractError);
}

TEST_CASE("nrmse property mode uses per-sample vector errors") {
  const std::vector<std::vector<double>> gt{{0.0, 0.0}, {1.0, 1.0}};
  const std::vector<std::vector<double>> pred{{0.5, 0.5}, {1.0, 1.0}};
  // sample errors sqrt(0.5) and 0; RMSE 0.5; range over all components 1
  CHECK(metrics::nrmse(pred, gt, metrics::NrmseMode::PropertyPrediction) ==
        doctest::Approx(0.5));
  CHECK(metrics::nrmse(gt, gt, metrics::NrmseMode::PropertyPrediction) ==
        doctest::Approx(0.0));
}

TEST_CASE("eval report aggregates equal recomputation") {
  metrics::EvalReport r;
  r.per_sample_f_sym = {0.1, 0.3};
  r.per_sample_f_per = {0.2, 0.4};
  r.per_sample_f_qua = {0.15, 0.35};
  r.per_sample_f_cond = {0.05};
  r.finalize();
  CHECK(r.mean_f_sym == doctest::Approx(0.2));
  CHECK(r.mean_f_per == doctest::Approx(0.3));
  CHECK(r.mean_f_qua == doctest::Approx(0.25));
  CHECK(r.mean_f_cond == doctest::Approx(0.05));
  const auto json = r.to_json();
  CHECK(json.find("nrmse_pp") != std::string::npos);
  CHECK(json.find("f_qua") != std::string::npos);
}
