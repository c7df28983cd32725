#include <doctest.h>

#include <cmath>
#include <string>

#include "umate/diffuse.hpp"

using namespace umate;
using nd::Tensor;
using nd::Var;

namespace {

diff::BackboneConfig tiny_backbone() {
  diff::BackboneConfig cfg;
  cfg.d = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.max_rows = 16;
  return cfg;
}

tok::LmtrSegments segs_5_3() {
  tok::LmtrSegments s;
  s.n = 5;
  s.m = 3;
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("diffusion schedule") {
  const auto s = diff::DiffusionSchedule::geometric();
  s.validate();
  REQUIRE(s.sigmas.size() == 10);
  CHECK(s.sigmas.front() == doctest::Approx(1.0));
  CHECK(s.sigmas.back() == doctest::Approx(0.01));
  CHECK(s.total_steps() == 20);

  SUBCASE("levels decay geometrically") {
    const double r0 = s.sigmas[1] / s.sigmas[0];
    for (std::size_t i = 1; i + 1 < s.sigmas.size(); ++i) {
      CHECK(s.sigmas[i + 1] < s.sigmas[i]);
      CHECK(s.sigmas[i + 1] / s.sigmas[i] == doctest::Approx(r0).epsilon(1e-10));
    }
  }
  SUBCASE("per-step lookups follow the level structure") {
    CHECK(s.sigma(0) == doctest::Approx(1.0));
    CHECK(s.sigma(1) == doctest::Approx(1.0));
    CHECK(s.sigma(2) == doctest::Approx(s.sigmas[1]));
    CHECK(s.sigma(19) == doctest::Approx(0.01));
    // alpha_i = eps * sigma_i^2 / sigma_L^2
    CHECK(s.alpha(19) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(s.alpha(0) == doctest::Approx(2e-5 * 1.0 / (0.01 * 0.01)).epsilon(1e-10));
  }
  SUBCASE("invalid ladders are rejected") {
    diff::DiffusionSchedule bad;
    bad.sigmas = {0.5, 0.7};  // not decreasing
    CHECK_THROWS_AS(bad.validate(), ContractError);
    CHECK_THROWS_AS(diff::DiffusionSchedule::geometric(0), ContractError);
    CHECK_THROWS_AS(diff::DiffusionSchedule::geometric(5, 0.01, 1.0), ContractError);
  }
}

TEST_CASE("mask spec") {
  const auto segs = segs_5_3();
  const auto all_un = diff::MaskSpec::all_unknown(9);
  CHECK(all_un.unknown_rows().size() == 9);
  const auto all_kn = diff::MaskSpec::all_known(9);
  CHECK(all_kn.unknown_rows().empty());

  const auto density = diff::MaskSpec::segment(segs, ot::Modality::Density);
  CHECK(density.h == 9);
  CHECK(density.unknown_rows() == std::vector<int>{5});

  const auto topo = diff::MaskSpec::segment(segs, ot::Modality::Topology);
  CHECK(topo.unknown_rows() == std::vector<int>{0, 1, 2, 3, 4});

  const auto prop = diff::MaskSpec::segment(segs, ot::Modality::Property);
  CHECK(prop.unknown_rows() == std::vector<int>{6, 7, 8});

  diff::MaskSpec bad;
  bad.h = 4;
  bad.unknown = {true, false};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("backbone forward") {
  nd::ParamStore store;
  Rng rng(1);
  auto cfg = tiny_backbone();

  SUBCASE("output shape matches input") {
    diff::Backbone bb(store, cfg, rng);
    const auto segs = segs_5_3();
    auto x = Var::constant(Tensor::randn({9, 8}, rng));
    const auto y = bb.forward(x, &segs);
    CHECK(y.value().rows() == 9);
    CHECK(y.value().cols() == 8);
  }
  SUBCASE("without encodings the stack is permutation-equivariant") {
    cfg.positional = false;
    cfg.segment_embeddings = false;
    diff::Backbone bb(store, cfg, rng);
    auto x = Var::constant(Tensor::randn({4, 8}, rng));
    const auto y = bb.forward(x);

    Tensor perm({4, 8});
    const int order[4] = {2, 0, 3, 1};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 8; ++c) perm(r, c) = x.value()(order[r], c);
    const auto yp = bb.forward(Var::constant(perm));
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 8; ++c)
        CHECK(yp.value()(r, c) == doctest::Approx(y.value()(order[r], c)).epsilon(1e-10));
  }
  SUBCASE("gradients check against finite differences") {
    diff::Backbone bb(store, cfg, rng);
    const auto segs = segs_5_3();
    const Tensor x = Tensor::randn({9, 8}, rng, 0.5);
    auto fn = [&] { return nd::l2_norm(bb.forward(Var::constant(x), &segs)); };
    std::vector<Var> params{*store.find("bb.layer0.Wq"), *store.find("bb.layer0.ff.W1"),
                            *store.find("bb.pos"), *store.find("bb.seg")};
    CHECK(nd::grad_check(fn, params, 1e-5) <= 1e-3);
  }
  SUBCASE("row overflow is rejected") {
    cfg.max_rows = 4;
    diff::Backbone bb(store, cfg, rng);
    const auto segs = segs_5_3();
    CHECK_THROWS_AS(bb.forward(Var::constant(Tensor::randn({9, 8}, rng)), &segs),
                    ContractError);
  }
}

TEST_CASE("frozen_forward keeps context rows bit-exact") {
  nd::ParamStore store;
  Rng rng(2);
  diff::Backbone bb(store, tiny_backbone(), rng);
  const auto segs = segs_5_3();
  auto x = Var::constant(Tensor::randn({9, 8}, rng));
  const auto mask = diff::MaskSpec::segment(segs, ot::Modality::Property);

  const auto out = diff::frozen_forward(x, mask, bb, &segs);
  const auto full = bb.forward(x, &segs);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 8; ++c) {
      if (mask.is_unknown(r))
        CHECK(out.value()(r, c) == full.value()(r, c));
      else
        CHECK(out.value()(r, c) == x.value()(r, c));  // bit-exact, not approx
    }
}

TEST_CASE("denoise chain") {
  nd::ParamStore store;
  Rng rng(3);
  diff::Backbone bb(store, tiny_backbone(), rng);
  const auto segs = segs_5_3();
  const Tensor x0 = Tensor::randn({9, 8}, rng, 0.5);

  diff::DiffusionSchedule sched;
  sched.sigmas = {1.0, 0.1};
  sched.steps_per_level = 2;
  sched.eps_step = 1e-3;

  SUBCASE("an empty unknown set returns the input bit-exact") {
    Rng noise_rng(4);
    const auto out = diff::denoise_chain(Var::constant(x0), diff::MaskSpec::all_known(9),
                                         sched, bb, noise_rng, &segs);
    CHECK(max_abs_diff(out.value(), x0) == 0.0);
  }
  SUBCASE("four deterministic steps match a scripted unroll") {
    const auto mask = diff::MaskSpec::segment(segs, ot::Modality::Topology);
    diff::DenoiseOptions opt;
    opt.zero_noise = true;
    Rng noise_rng(5);
    const auto out =
        diff::denoise_chain(Var::constant(x0), mask, sched, bb, noise_rng, &segs, opt);

    Tensor expect = x0;
    for (int t = 0; t < 4; ++t) {
      const double alpha = sched.alpha(t);
      const auto phi = bb.forward(Var::constant(expect), &segs);
      for (int r = 0; r < 9; ++r) {
        if (!mask.is_unknown(r)) continue;
        for (int c = 0; c < 8; ++c) expect(r, c) += 0.5 * alpha * phi.value()(r, c);
      }
    }
    CHECK(max_abs_diff(out.value(), expect) <= 1e-12);
  }
  SUBCASE("the noise stream is reproducible") {
    const auto mask = diff::MaskSpec::segment(segs, ot::Modality::Property);
    Rng a(6), b(6);
    const auto o1 = diff::denoise_chain(Var::constant(x0), mask, sched, bb, a, &segs);
    const auto o2 = diff::denoise_chain(Var::constant(x0), mask, sched, bb, b, &segs);
    CHECK(max_abs_diff(o1.value(), o2.value()) == 0.0);
    Rng c(7);
    const auto o3 = diff::denoise_chain(Var::constant(x0), mask, sched, bb, c, &segs);
    CHECK(max_abs_diff(o1.value(), o3.value()) > 0.0);
  }
  SUBCASE("vanishing step size is the identity limit") {
    diff::DiffusionSchedule tiny = sched;
    tiny.eps_step = 1e-12;
    diff::DenoiseOptions opt;
    opt.zero_noise = true;
    const auto mask = diff::MaskSpec::all_unknown(9);
    Rng noise_rng(8);
    const auto out =
        diff::denoise_chain(Var::constant(x0), mask, tiny, bb, noise_rng, &segs, opt);
    CHECK(max_abs_diff(out.value(), x0) <= 1e-8);
  }
  SUBCASE("literal updates move the context rows too") {
    const auto mask = diff::MaskSpec::segment(segs, ot::Modality::Density);
    diff::DenoiseOptions opt;
    opt.literal_update = true;
    Rng noise_rng(9);
    const auto out =
        diff::denoise_chain(Var::constant(x0), mask, sched, bb, noise_rng, &segs, opt);
    bool context_moved = false;
    for (int r = 0; r < 9; ++r) {
      if (mask.is_unknown(r)) continue;
      for (int c = 0; c < 8; ++c)
        if (out.value()(r, c) != x0(r, c)) context_moved = true;
    }
    CHECK(context_moved);
  }
  SUBCASE("numeric blow-ups report the failing step") {
    diff::DiffusionSchedule huge = sched;
    huge.eps_step = 1e200;
    diff::DenoiseOptions opt;
    opt.zero_noise = true;
    Rng noise_rng(10);
    try {
      (void)diff::denoise_chain(Var::constant(x0), diff::MaskSpec::all_unknown(9), huge,
                                bb, noise_rng, &segs, opt);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
  }
  SUBCASE("gradients flow through the unroll") {
    const auto mask = diff::MaskSpec::segment(segs, ot::Modality::Density);
    diff::DiffusionSchedule short_sched;
    short_sched.sigmas = {1.0};
    short_sched.steps_per_level = 2;
    short_sched.eps_step = 1e-2;
    auto fn = [&] {
      Rng noise_rng(11);  // fixed noise so the map is deterministic
      const auto out = diff::denoise_chain(Var::constant(x0), mask, short_sched, bb,
                                           noise_rng, &segs);
      return nd::l2_norm(out);
    };
    std::vector<Var> params{*store.find("bb.layer0.Wv"), *store.find("bb.layer0.ff.W2")};
    CHECK(nd::grad_check(fn, params, 1e-5) <= 1e-3);
  }
}

TEST_CASE("noise_random_modality") {
  nd::ParamStore store;
  Rng rng(12);
  const auto segs = segs_5_3();
  const Tensor base = Tensor::randn({9, 8}, rng);

  SUBCASE("each modality is picked about a third of the time") {
    int counts[3] = {0, 0, 0};
    Rng pick(13);
    for (int i = 0; i < 10000; ++i) {
      const auto r = diff::noise_random_modality(Var::constant(base), segs, 0.5, pick);
      counts[static_cast<int>(r.chosen)]++;
    }
    for (int m = 0; m < 3; ++m) {
      CHECK(counts[m] / 10000.0 >= 1.0 / 3 - 0.02);
      CHECK(counts[m] / 10000.0 <= 1.0 / 3 + 0.02);
    }
  }
  SUBCASE("only the chosen segment is perturbed and with the right moments") {
    Rng pick(14);
    double sum = 0.0, sum2 = 0.0;
    int count = 0;
    for (int i = 0; i < 300; ++i) {
      const auto r = diff::noise_random_modality(Var::constant(base), segs, 0.5, pick);
      for (int row = 0; row < 9; ++row)
        for (int c = 0; c < 8; ++c) {
          const double delta = r.noised.value()(row, c) - base(row, c);
          if (!r.mask.is_unknown(row)) {
            CHECK(delta == 0.0);  // bit-exact outside the chosen segment
          } else {
            sum += delta;
            sum2 += delta * delta;
            ++count;
          }
        }
    }
    const double mean = sum / count;
    const double stddev = std::sqrt(sum2 / count - mean * mean);
    CHECK(mean == doctest::Approx(0.0).epsilon(0.02));
    CHECK(std::abs(mean) < 0.02);
    CHECK(stddev == doctest::Approx(0.5).epsilon(0.05));
  }
  SUBCASE("the noising op is an identity for gradients") {
    auto leaf = Var::leaf(base);
    Rng pick(15);
    const auto r = diff::noise_random_modality(leaf, segs, 0.5, pick);
    leaf.zero_grad();
    nd::backward(nd::sum(r.noised));
    for (int i = 0; i < leaf.grad().size(); ++i) CHECK(leaf.grad()[i] == 1.0);
  }
  SUBCASE("resample corruption draws whole rows from the pool") {
    const Tensor pool = Tensor::randn({6, 8}, rng);
    Rng pick(16);
    auto leaf = Var::leaf(base);
    const auto r = diff::noise_random_modality(leaf, segs, 0.5, pick, &pool, 1.0);
    for (int row = 0; row < 9; ++row) {
      if (!r.mask.is_unknown(row)) {
        for (int c = 0; c < 8; ++c) CHECK(r.noised.value()(row, c) == base(row, c));
        continue;
      }
      // the corrupted row must equal some pool row exactly
      bool found = false;
      for (int k = 0; k < 6 && !found; ++k) {
        bool eq = true;
        for (int c = 0; c < 8; ++c) eq = eq && r.noised.value()(row, c) == pool(k, c);
        found = eq;
      }
      CHECK(found);
    }
    // replaced rows carry no gradient; untouched rows stay identity
    leaf.zero_grad();
    nd::backward(nd::sum(r.noised));
    for (int row = 0; row < 9; ++row)
      for (int c = 0; c < 8; ++c)
        CHECK(leaf.grad()(row, c) == (r.mask.is_unknown(row) ? 0.0 : 1.0));
  }
  SUBCASE("contract violations") {
    CHECK_THROWS_AS(diff::noise_random_modality(Var::constant(base), segs, 0.0, rng),
                    ContractError);
    CHECK_THROWS_AS(
        diff::noise_random_modality(Var::constant(Tensor::randn({4, 8}, rng)), segs, 0.5,
                                    rng),
        ContractError);
    const Tensor pool = Tensor::randn({6, 8}, rng);
    CHECK_THROWS_AS(
        diff::noise_random_modality(Var::constant(base), segs, 0.5, rng, &pool, 1.5),
        ContractError);
    CHECK_THROWS_AS(
        diff::noise_random_modality(Var::constant(base), segs, 0.5, rng, nullptr, 0.5),
        ContractError);
  }
}

TEST_CASE("losses") {
  SUBCASE("generation loss is the Frobenius distance") {
    const auto a = Var::constant(Tensor::full({2, 2}, 1.0));
    const auto b = Var::constant(Tensor({2, 2}));
    CHECK(diff::generation_loss(a, b).value().item() == doctest::Approx(2.0));
    CHECK(diff::generation_loss(a, a).value().item() == doctest::Approx(0.0));
    CHECK_THROWS_AS(
        diff::generation_loss(a, Var::constant(Tensor::full({2, 3}, 1.0))),
        ContractError);
  }
  SUBCASE("total loss is the weighted sum") {
    const auto a = Var::constant(Tensor::scalar(1.0));
    const auto g = Var::constant(Tensor::scalar(2.0));
    CHECK(diff::total_loss(a, g, 1.0, 1.0).value().item() == doctest::Approx(3.0));
    CHECK(diff::total_loss(a, g, 0.0, 0.5).value().item() == doctest::Approx(1.0));
    CHECK_THROWS_AS(diff::total_loss(a, g, -1.0, 1.0), ContractError);
  }
}
