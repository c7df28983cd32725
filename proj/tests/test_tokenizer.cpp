#include <doctest.h>

#include <cmath>
#include <limits>

#include "umate/tokenizer.hpp"

using namespace umate;
using nd::Tensor;
using nd::Var;

namespace {

tok::TokenizerConfig small_config() {
  tok::TokenizerConfig cfg;
  cfg.d = 8;
  cfg.kappa = 5;
  cfg.m = 3;
  cfg.gcn_layers = 2;
  cfg.dec_layers = 1;
  cfg.dec_heads = 2;
  cfg.mlp_hidden = 8;
  return cfg;
}

Tensor cube_coords() {
  Tensor c({8, 3});
  for (int k = 0; k < 8; ++k) {
    c(k, 0) = double((k >> 2) & 1);
    c(k, 1) = double((k >> 1) & 1);
    c(k, 2) = double(k & 1);
  }
  return c;
}

Tensor path_adjacency(int n) {
  Tensor a({n, n});
  for (int i = 0; i + 1 < n; ++i) {
    a(i, i + 1) = 1.0;
    a(i + 1, i) = 1.0;
  }
  return a;
}

double row_norm(const Tensor& t, int i) {
  double s = 0.0;
  for (int j = 0; j < t.cols(); ++j) s += t(i, j) * t(i, j);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("invalid tokenizer configuration is rejected") {
  nd::ParamStore store;
  Rng rng(1);
  auto cfg = small_config();
  cfg.dec_heads = 3;  // d=8 not divisible
  CHECK_THROWS_AS(tok::Tokenizer(store, cfg, rng), ContractError);
}

TEST_CASE("encoder output shapes") {
  nd::ParamStore store;
  Rng rng(2);
  tok::Tokenizer t(store, small_config(), rng);

  const auto topo = t.encode_topology(cube_coords(), path_adjacency(8));
  CHECK(topo.value().rows() == 8);
  CHECK(topo.value().cols() == 8);

  const auto rho = t.encode_density(0.3);
  CHECK(rho.value().rows() == 1);
  CHECK(rho.value().cols() == 8);

  const auto prop = t.encode_property({0.1, 0.2, 0.3});
  CHECK(prop.value().rows() == 3);
  CHECK(prop.value().cols() == 8);

  CHECK_THROWS_AS(t.encode_property({0.1}), ContractError);
  CHECK_THROWS_AS(t.encode_topology(cube_coords(), path_adjacency(7)), ContractError);
}

TEST_CASE("isolated identical nodes get identical tokens") {
  nd::ParamStore store;
  Rng rng(3);
  tok::Tokenizer t(store, small_config(), rng);
  // Zero adjacency normalizes to the identity, so each node passes through
  // the same per-node map; equal coordinates must yield equal tokens.
  Tensor coords({3, 3}, {0.2, 0.5, 0.7, 0.2, 0.5, 0.7, 0.9, 0.1, 0.3});
  const auto tokens = t.encode_topology(coords, Tensor({3, 3}));
  for (int j = 0; j < 8; ++j) {
    CHECK(tokens.value()(0, j) == tokens.value()(1, j));
  }
}

TEST_CASE("nearest prototypes against a brute-force oracle") {
  Rng rng(4);
  const Tensor tokens = Tensor::randn({6, 5}, rng);
  const Tensor codebook = Tensor::randn({9, 5}, rng);
  const auto got = tok::Tokenizer::nearest_prototypes(tokens, codebook);
  REQUIRE(got.size() == 6);
  for (int i = 0; i < 6; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int k = 0; k < 9; ++k) {
      double d = 0.0;
      for (int j = 0; j < 5; ++j) {
        const double diff = tokens(i, j) - codebook(k, j);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = k;
      }
    }
    CHECK(got[static_cast<std::size_t>(i)] == arg);
  }
}

TEST_CASE("rounding ties resolve to the lowest codebook index") {
  Tensor codebook({3, 2}, {1.0, 0.0, 1.0, 0.0, 0.0, 1.0});  // rows 0 and 1 equal
  Tensor tokens({1, 2}, {1.0, 0.0});
  const auto idx = tok::Tokenizer::nearest_prototypes(tokens, codebook);
  CHECK(idx[0] == 0);

  // equidistant between distinct rows 0 and 2
  Tensor mid({1, 2}, {0.5, 0.5});
  CHECK(tok::Tokenizer::nearest_prototypes(mid, codebook)[0] == 0);
}

TEST_CASE("round_tokens values and gradient routing") {
  nd::ParamStore store;
  Rng rng(5);
  tok::Tokenizer t(store, small_config(), rng);
  auto tokens = Var::leaf(Tensor::randn({4, 8}, rng, 0.5));
  const auto r = t.round_tokens(tokens);

  SUBCASE("both branches carry the prototype values") {
    for (int i = 0; i < 4; ++i) {
      const int k = r.indices[static_cast<std::size_t>(i)];
      for (int j = 0; j < 8; ++j) {
        CHECK(r.straight.value()(i, j) == t.codebook().value()(k, j));
        CHECK(r.quantized.value()(i, j) == t.codebook().value()(k, j));
      }
    }
  }
  SUBCASE("rounding prototype values again is a fixed point") {
    const auto again =
        tok::Tokenizer::nearest_prototypes(r.straight.value(), t.codebook().value());
    CHECK(again == r.indices);
  }
  SUBCASE("straight branch sends gradient to the encoder tokens") {
    store.zero_grad();
    tokens.zero_grad();
    nd::backward(nd::sum(r.straight));
    double g = 0.0;
    for (int i = 0; i < tokens.grad().size(); ++i) g += std::abs(tokens.grad()[i]);
    CHECK(g == doctest::Approx(32.0));  // d(sum)/d(token) == 1 everywhere
    double cg = 0.0;
    for (int i = 0; i < t.codebook().grad().size(); ++i)
      cg += std::abs(t.codebook().grad()[i]);
    CHECK(cg == 0.0);
  }
  SUBCASE("quantized branch sends gradient to the codebook") {
    store.zero_grad();
    tokens.zero_grad();
    nd::backward(nd::sum(r.quantized));
    double cg = 0.0;
    for (int i = 0; i < t.codebook().grad().size(); ++i)
      cg += std::abs(t.codebook().grad()[i]);
    CHECK(cg == doctest::Approx(32.0));
    double tg = 0.0;
    for (int i = 0; i < tokens.grad().size(); ++i) tg += std::abs(tokens.grad()[i]);
    CHECK(tg == 0.0);
  }
}

TEST_CASE("assemble_lmtr layout and segment bookkeeping") {
  Rng rng(6);
  auto topo = Var::constant(Tensor::randn({5, 8}, rng));
  auto rho = Var::constant(Tensor::randn({1, 8}, rng));
  auto prop = Var::constant(Tensor::randn({3, 8}, rng));
  tok::LmtrSegments seg;
  const auto lmtr = tok::Tokenizer::assemble_lmtr(topo, rho, prop, seg);

  CHECK(seg.n == 5);
  CHECK(seg.m == 3);
  CHECK(seg.h() == 9);
  CHECK(seg.density_row() == 5);
  CHECK(seg.prop_begin() == 6);
  CHECK(lmtr.value().rows() == 9);

  for (int j = 0; j < 8; ++j) {
    CHECK(lmtr.value()(2, j) == topo.value()(2, j));
    CHECK(lmtr.value()(5, j) == rho.value()(0, j));
    CHECK(lmtr.value()(7, j) == prop.value()(1, j));
  }
}

TEST_CASE("decoder shapes and ranges") {
  nd::ParamStore store;
  Rng rng(7);
  tok::Tokenizer t(store, small_config(), rng);

  auto tokens = Var::constant(Tensor::randn({8, 8}, rng, 0.5));
  const auto dec = t.decode_topology(tokens);
  CHECK(dec.coords.value().rows() == 8);
  CHECK(dec.coords.value().cols() == 3);
  CHECK(dec.adj_raw.value().rows() == 8);
  CHECK(dec.adj_raw.value().cols() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(dec.adj_raw.value()(i, i) == doctest::Approx(1.0));
    CHECK(dec.adj_binary(i, i) == 0.0);
    for (int j = 0; j < 8; ++j) {
      CHECK(dec.adj_binary(i, j) == dec.adj_binary(j, i));
      const double raw = std::max(dec.adj_raw.value()(i, j), dec.adj_raw.value()(j, i));
      if (i != j) CHECK(dec.adj_binary(i, j) == (raw >= 0.5 ? 1.0 : 0.0));
    }
  }

  const auto rho = t.decode_density(Var::constant(Tensor::randn({1, 8}, rng)));
  CHECK(rho.value().item() > 0.0);
  CHECK(rho.value().item() < 1.0);
  CHECK_THROWS_AS(t.decode_density(Var::constant(Tensor::randn({2, 8}, rng))),
                  ContractError);

  const auto p = t.decode_property(Var::constant(Tensor::randn({3, 8}, rng)));
  CHECK(p.value().rows() == 1);
  CHECK(p.value().cols() == 3);
  CHECK_THROWS_AS(t.decode_property(Var::constant(Tensor::randn({2, 8}, rng))),
                  ContractError);
}

TEST_CASE("codebook warm-up draws jittered prototypes from the token pool") {
  nd::ParamStore store;
  Rng rng(8);
  tok::Tokenizer t(store, small_config(), rng);

  Tensor warm({3, 8});
  warm(0, 0) = 1.0;   // norm 1
  warm(1, 1) = 2.0;   // norm 2
  warm(2, 2) = 7.0;   // norm 7 -> median 2, jitter scale 0.04 per coordinate
  Rng init_rng(9);
  t.init_codebook({warm}, init_rng);
  const auto& cb = t.codebook().value();
  for (int k = 0; k < 5; ++k) {
    // every prototype sits near one of the pool rows
    double best = 1e9;
    for (int i = 0; i < 3; ++i) {
      double s = 0.0;
      for (int j = 0; j < 8; ++j) {
        const double diff = cb(k, j) - warm(i, j);
        s += diff * diff;
      }
      best = std::min(best, std::sqrt(s));
    }
    CHECK(best < 0.5);
  }

  SUBCASE("an empty pool falls back to unit-norm random rows") {
    Rng fb_rng(10);
    t.init_codebook({}, fb_rng);
    for (int k = 0; k < 5; ++k)
      CHECK(row_norm(t.codebook().value(), k) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("alignment loss hand cases") {
  const int n = 2;
  tok::ForwardArtifacts fa;
  fa.x_target = Tensor({n, 3});
  fa.adj_target = Tensor({n, n});
  fa.rho_target = 0.3;
  fa.p_target = {0.0, 0.0, 0.0};
  fa.x_recon = Var::constant(Tensor({n, 3}));
  fa.x_tokens = Var::constant(Tensor({n, 4}));
  fa.x_quantized = Var::constant(Tensor({n, 4}));
  // off-diagonal entries match the target; the all-ones diagonal is masked out
  Tensor raw({n, n});
  raw(0, 0) = raw(1, 1) = 1.0;
  fa.adj_raw = Var::constant(raw);
  fa.rho_recon = Var::constant(Tensor({1, 1}, {0.5}));  // residual 0.2
  fa.rho_token = Var::constant(Tensor({1, 4}));
  fa.rho_quantized = Var::constant(Tensor({1, 4}));
  fa.p_recon = Var::constant(Tensor({1, 3}));
  fa.p_tokens = Var::constant(Tensor({3, 4}));
  fa.p_quantized = Var::constant(Tensor({3, 4}));

  const auto zero_transport = Var::constant(Tensor::scalar(0.0));

  SUBCASE("only the density residual contributes, scaled by its weight") {
    tok::AlignmentWeights w{1.0, 2.0, 1.0, 0.1};
    CHECK(tok::alignment_loss(fa, zero_transport, w).value().item() ==
          doctest::Approx(0.4).epsilon(1e-12));
  }
  SUBCASE("the transport term enters linearly") {
    tok::AlignmentWeights w{1.0, 0.0, 1.0, 0.1};
    const auto five = Var::constant(Tensor::scalar(5.0));
    CHECK(tok::alignment_loss(fa, five, w).value().item() ==
          doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("each term is homogeneous in its weight") {
    tok::AlignmentWeights w1{1.0, 1.0, 1.0, 0.0};
    tok::AlignmentWeights w2{1.0, 3.0, 1.0, 0.0};
    const double l1 = tok::alignment_loss(fa, zero_transport, w1).value().item();
    const double l2 = tok::alignment_loss(fa, zero_transport, w2).value().item();
    CHECK(l2 == doctest::Approx(3.0 * l1).epsilon(1e-12));
  }
  SUBCASE("negative weights are rejected") {
    tok::AlignmentWeights w{1.0, -1.0, 1.0, 0.1};
    CHECK_THROWS_AS(tok::alignment_loss(fa, zero_transport, w), ContractError);
  }
  SUBCASE("the diagonal of the similarity matrix is ignored") {
    tok::AlignmentWeights w{1.0, 0.0, 0.0, 0.0};
    CHECK(tok::alignment_loss(fa, zero_transport, w).value().item() ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("encoder-decoder gradients check against finite differences") {
  nd::ParamStore store;
  Rng rng(10);
  tok::Tokenizer t(store, small_config(), rng);
  const Tensor coords = cube_coords();
  const Tensor adj = path_adjacency(8);
  Tensor target({8, 3});
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 3; ++j) target(i, j) = coords(i, j);

  // Rounding replaced by identity: differentiate the continuous path.
  auto fn = [&] {
    const auto tokens = t.encode_topology(coords, adj);
    const auto dec = t.decode_topology(tokens);
    return nd::l2_norm(nd::sub(dec.coords, Var::constant(target)));
  };
  std::vector<Var> params{*store.find("enc_topo.W1"), *store.find("enc_topo.W2"),
                          *store.find("dec_topo.Wout"),
                          *store.find("dec_topo.layer0.Wq")};
  // Finite differences through two attention blocks accumulate more rounding
  // error than the shallow nets above; 1e-3 still catches a wrong backward.
  CHECK(nd::grad_check(fn, params, 1e-5) <= 1e-3);

  auto fn_rho = [&] {
    const auto token = t.encode_density(0.4);
    return nd::l2_norm(nd::sub(t.decode_density(token),
                               Var::constant(Tensor({1, 1}, {0.3}))));
  };
  std::vector<Var> rho_params{*store.find("enc_rho.W1"), *store.find("dec_rho.W3"),
                              *store.find("dec_rho.b1")};
  CHECK(nd::grad_check(fn_rho, rho_params, 1e-5) <= 1e-4);
}

TEST_CASE("straight-through path trains the encoder through rounding") {
  nd::ParamStore store;
  Rng rng(11);
  tok::Tokenizer t(store, small_config(), rng);

  const auto tokens = t.encode_topology(cube_coords(), path_adjacency(8));
  const auto r = t.round_tokens(tokens);

  // The commitment residual is identically zero in value, but its gradient
  // must still reach the encoder weights through the straight-through branch
  // (the l2 subgradient at the kink is zero, so probe with a plain sum).
  store.zero_grad();
  nd::backward(nd::sum(nd::sub(r.straight, r.quantized)));
  const auto w1 = *store.find("enc_topo.W1");
  bool any = false;
  for (int i = 0; i < w1.grad().size(); ++i)
    if (w1.grad()[i] != 0.0) any = true;
  CHECK(any);
}
