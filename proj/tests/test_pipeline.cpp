#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "umate/pipeline.hpp"

using namespace umate;

namespace {

pipe::Config tiny_config() {
  pipe::Config cfg;
  cfg.d = 8;
  cfg.kappa = 6;
  cfg.n_max = 20;
  cfg.gcn_layers = 2;
  cfg.dec_layers = 1;
  cfg.dec_heads = 2;
  cfg.mlp_hidden = 8;
  cfg.bb_layers = 1;
  cfg.bb_heads = 2;
  cfg.diff_levels = 2;
  cfg.steps_per_level = 1;
  cfg.epsilon = 0.2;
  cfg.tol = 1e-5;
  cfg.max_iter = 60;
  cfg.unroll_tail = 3;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.seed = 7;
  return cfg;
}

data::Dataset tiny_dataset() {
  auto ds = data::generate_dataset(4, 2, 42);
  return ds;
}

std::vector<double> snapshot(const nd::ParamStore& store, const std::string& name) {
  nd::ParamStore& s = const_cast<nd::ParamStore&>(store);
  return s.find(name)->value().data;
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  const auto cfg = tiny_config();
  const auto text = cfg.to_json();
  const auto back = pipe::Config::from_json(text);
  CHECK(back.d == cfg.d);
  CHECK(back.kappa == cfg.kappa);
  CHECK(back.epsilon == cfg.epsilon);
  CHECK(back.cost_mode == cfg.cost_mode);
  CHECK(back.seed == cfg.seed);
  CHECK(back.lambda_gen == cfg.lambda_gen);

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(pipe::Config::from_json(R"({"model": {"dd": 8}})"), FormatError);
    CHECK_THROWS_AS(pipe::Config::from_json(R"({"optimizer": {}})"), FormatError);
    CHECK_THROWS_AS(pipe::Config::from_json("not json at all"), FormatError);
  }
  SUBCASE("semantic validation") {
    auto bad = cfg;
    bad.d = 7;  // not divisible by heads
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = cfg;
    bad.cost_mode = "bogus";
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = cfg;
    bad.lambda_align = -1.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }
  SUBCASE("partial files keep defaults for the rest") {
    const auto partial =
        pipe::Config::from_json(R"({"model": {"d": 16, "dec_heads": 4}})");
    CHECK(partial.d == 16);
    CHECK(partial.dec_heads == 4);
    CHECK(partial.kappa == 64);
    CHECK(partial.epochs == 10);
  }
}

TEST_CASE("one training epoch runs end to end and records losses") {
  const auto cfg = tiny_config();
  Rng rng(cfg.seed);
  pipe::Model model(cfg, rng);
  const auto ds = tiny_dataset();
  model.norm = ds.norm;

  pipe::warm_up_codebook(model, ds, rng);
  const auto result = pipe::train(model, ds, rng);
  REQUIRE(result.epoch_losses.size() == 1);
  REQUIRE(result.transport_distances.size() == 1);
  CHECK(std::isfinite(result.epoch_losses[0]));
  CHECK(std::isfinite(result.transport_distances[0]));
  CHECK(model.has_plan);
  CHECK(model.plan.kappa == cfg.kappa);
  CHECK(model.training_steps > 0);
  CHECK(model.typical_n >= 8);
}

TEST_CASE("zero loss weights leave every parameter untouched") {
  auto cfg = tiny_config();
  cfg.lambda_align = 0.0;
  cfg.lambda_gen = 0.0;
  Rng rng(3);
  pipe::Model model(cfg, rng);
  const auto ds = tiny_dataset();
  model.norm = ds.norm;

  const auto before_cb = snapshot(model.store, "codebook");
  const auto before_w = snapshot(model.store, "enc_topo.W1");
  const auto before_bb = snapshot(model.store, "bb.layer0.Wq");
  (void)pipe::train(model, ds, rng);
  CHECK(snapshot(model.store, "codebook") == before_cb);
  CHECK(snapshot(model.store, "enc_topo.W1") == before_w);
  CHECK(snapshot(model.store, "bb.layer0.Wq") == before_bb);
}

TEST_CASE("training updates parameters when the weights are active") {
  const auto cfg = tiny_config();
  Rng rng(4);
  pipe::Model model(cfg, rng);
  const auto ds = tiny_dataset();
  model.norm = ds.norm;
  pipe::warm_up_codebook(model, ds, rng);

  const auto before = snapshot(model.store, "enc_topo.W1");
  (void)pipe::train(model, ds, rng);
  CHECK(snapshot(model.store, "enc_topo.W1") != before);
}

TEST_CASE("checkpoint round trip reproduces inference bit-exactly") {
  const auto cfg = tiny_config();
  Rng rng(5);
  pipe::Model model(cfg, rng);
  const auto ds = tiny_dataset();
  model.norm = ds.norm;
  pipe::warm_up_codebook(model, ds, rng);
  (void)pipe::train(model, ds, rng);

  const std::string path = "ckpt_roundtrip.bin";
  pipe::save_checkpoint(model, path);
  const auto back = pipe::load_checkpoint(path);

  CHECK(back->cfg.d == cfg.d);
  CHECK(back->cfg.kappa == cfg.kappa);
  CHECK(back->typical_n == model.typical_n);
  CHECK(back->training_steps == model.training_steps);
  CHECK(back->has_plan == model.has_plan);
  CHECK(back->plan.plan == model.plan.plan);
  CHECK(back->norm.density_min == model.norm.density_min);
  CHECK(snapshot(back->store, "codebook") == snapshot(model.store, "codebook"));
  CHECK(snapshot(back->store, "bb.layer0.Wq") == snapshot(model.store, "bb.layer0.Wq"));

  SUBCASE("tasks agree between the original and the restored model") {
    const auto& probe = ds.samples[0].mtr;
    Rng r1(11), r2(11);
    const auto p1 = pipe::task_predict(model, probe.topology, probe.density, r1);
    const auto p2 = pipe::task_predict(*back, probe.topology, probe.density, r2);
    CHECK(p1 == p2);  // bit-exact

    Rng r3(12), r4(12);
    const double c1 = pipe::task_confirm(model, probe.topology, probe.properties, r3);
    const double c2 = pipe::task_confirm(*back, probe.topology, probe.properties, r4);
    CHECK(c1 == c2);

    Rng r5(13), r6(13);
    const auto g1 = pipe::task_generate(model, probe.density, probe.properties, r5);
    const auto g2 = pipe::task_generate(*back, probe.density, probe.properties, r6);
    CHECK(g1.topology.coords == g2.topology.coords);
    CHECK(g1.topology.edges == g2.topology.edges);
    CHECK(g1.init_indices == g2.init_indices);
  }
  SUBCASE("corrupted checkpoints fail loudly") {
    std::ofstream bad(path, std::ios::binary);
    bad << "UMCKPT1\ngarbage";
    bad.close();
    CHECK_THROWS_AS(pipe::load_checkpoint(path), FormatError);
    CHECK_THROWS_AS(pipe::load_checkpoint("no_such_ckpt.bin"), FormatError);
  }
  std::remove(path.c_str());
}

TEST_CASE("tasks are deterministic given the seed and produce valid output") {
  const auto cfg = tiny_config();
  Rng rng(6);
  pipe::Model model(cfg, rng);
  const auto ds = tiny_dataset();
  model.norm = ds.norm;
  pipe::warm_up_codebook(model, ds, rng);
  (void)pipe::train(model, ds, rng);
  const auto& probe = ds.samples[1].mtr;

  SUBCASE("generate") {
    Rng a(21), b(21);
    const auto g1 = pipe::task_generate(model, 0.3, probe.properties, a);
    const auto g2 = pipe::task_generate(model, 0.3, probe.properties, b);
    CHECK(g1.topology.coords == g2.topology.coords);
    CHECK(g1.topology.node_count() == model.typical_n);
    CHECK_NOTHROW(g1.topology.validate());
  }
  SUBCASE("predict returns m physical-scale properties") {
    Rng a(22);
    const auto p = pipe::task_predict(model, probe.topology, probe.density, a);
    REQUIRE(p.size() == 3);
    for (double x : p) CHECK(std::isfinite(x));
  }
  SUBCASE("confirm returns a physical density") {
    Rng a(23);
    const double rho = pipe::task_confirm(model, probe.topology, probe.properties, a);
    CHECK(std::isfinite(rho));
    // decode_density is sigmoid-bounded, then denormalized into data range
    CHECK(rho >= model.norm.density_min - 1e-9);
    CHECK(rho <= model.norm.density_max + 1e-9);
  }
  SUBCASE("oversized topologies are rejected") {
    auto big = probe.topology;
    for (int i = 0; i < 25; ++i) big.coords.push_back({0.1 * i, 0.2, 0.3});
    Rng a(24);
    CHECK_THROWS_AS(pipe::task_predict(model, big, probe.density, a), ContractError);
  }
}

TEST_CASE("evaluate aggregates the metric suite over a test split") {
  const auto cfg = tiny_config();
  Rng rng(8);
  pipe::Model model(cfg, rng);
  const auto ds = tiny_dataset();
  model.norm = ds.norm;
  pipe::warm_up_codebook(model, ds, rng);
  (void)pipe::train(model, ds, rng);

  Rng eval_rng(9);
  const auto report = pipe::evaluate(model, ds, eval_rng);
  CHECK(report.per_sample_f_cond.size() == ds.samples.size());
  CHECK(report.per_sample_f_qua.size() +
            static_cast<std::size_t>(report.inapplicable_count) ==
        ds.samples.size());
  CHECK(std::isfinite(report.nrmse_pp));
  CHECK(std::isfinite(report.nrmse_cc));
  CHECK(report.nrmse_pp >= 0.0);
  CHECK(report.nrmse_cc >= 0.0);
  const auto json = report.to_json();
  CHECK(json.find("f_cond") != std::string::npos);
}
