#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ent/emotion_lattice.hpp"
#include "test_util.hpp"

using namespace ent;

namespace {

EmotionLattice random_lattice(Rng& rng, Index frames, Index states, Index classes) {
  return EmotionLattice::from_logits(frames, states, test_util::random_matrix(rng, frames * states, classes, 1.5));
}

EmotionLattice uniform_lattice(Index frames, Index states, Index classes) {
  return EmotionLattice::from_probs(frames, states,
                                    Matrix::Constant(frames * states, classes, 1.0 / static_cast<double>(classes)));
}

// Independent two-pass reference: locate the extreme nodes from the
// probabilities, then sum the selected row or column.
struct Extremes {
  Index t_star, u_star, t_neg, u_neg;
};

Extremes find_extremes(const Matrix& p, Index frames, Index states, int k_star, int k_neg) {
  Extremes e{0, 0, 0, 0};
  for (Index t = 0; t < frames; ++t) {
    for (Index u = 0; u < states; ++u) {
      if (p(t * states + u, k_star) > p(e.t_star * states + e.u_star, k_star)) e = {t, u, e.t_neg, e.u_neg};
      if (p(t * states + u, k_neg) < p(e.t_neg * states + e.u_neg, k_neg)) e = {e.t_star, e.u_star, t, u};
    }
  }
  return e;
}

}  // namespace

TEST_CASE("emotion joint with zero parameters is uniform") {
  AdditiveJoint joint("emotion", 4, 5);
  Rng rng(1);
  const EmotionLattice lat = emotion_joint(test_util::random_matrix(rng, 3, 4), test_util::random_matrix(rng, 2, 4), joint);
  CHECK(lat.frames() == 3);
  CHECK(lat.states() == 2);
  CHECK(lat.classes() == 5);
  CHECK((lat.probs().array() - 0.2).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("emotion joint distributions are normalized") {
  Rng rng(2);
  AdditiveJoint joint("emotion", 4, 3);
  joint.init(rng);
  const EmotionLattice lat = emotion_joint(test_util::random_matrix(rng, 5, 4), test_util::random_matrix(rng, 3, 4), joint);
  const Matrix p = lat.probs();
  for (Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) <= 1e-12);
  CHECK((p.array() > 0.0).all());
  CHECK_THROWS_AS(emotion_joint(Matrix::Zero(5, 3), Matrix::Zero(3, 4), joint), ArgumentError);
}

TEST_CASE("from_probs rejects invalid distributions") {
  Matrix p(1, 2);
  p << 0.5, 0.6;
  CHECK_THROWS_AS(EmotionLattice::from_probs(1, 1, p), ArgumentError);
  p << 1.0, 0.0;
  CHECK_THROWS_AS(EmotionLattice::from_probs(1, 1, p), ArgumentError);
  CHECK_THROWS_AS(EmotionLattice(2, 2, Matrix::Zero(3, 2)), ArgumentError);
}

TEST_CASE("max pooling loss on the two-node example") {
  Matrix p(2, 3);
  p << 0.7, 0.2, 0.1,
       0.2, 0.3, 0.5;
  const EmotionLattice lat = EmotionLattice::from_probs(2, 1, p);
  const EmotionLossResult r = lattice_max_pool_loss(lat, 0, 2);
  CHECK(std::abs(r.loss - (-std::log(0.7) - std::log(0.1))) <= 1e-12);
  CHECK(r.loss == doctest::Approx(2.659260).epsilon(1e-6));
  REQUIRE(r.selected.has_value());
  CHECK(r.selected->t_star == 0);
  CHECK(r.selected->t_neg == 0);
  // Both terms land on node A: one nonzero row.
  CHECK(r.grad_log_probs(0, 0) == -1.0);
  CHECK(r.grad_log_probs(0, 2) == -1.0);
  CHECK(r.grad_log_probs.row(1).isZero(0.0));
}

TEST_CASE("max pooling loss is bounded below by 2 ln 2") {
  // The neutral probability at the least-neutral node cannot exceed
  // 1 - max p(k*), so -log a - log(1 - a) >= 2 ln 2.
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const EmotionLattice lat = random_lattice(rng, 3, 3, 4);
    CHECK(lattice_max_pool_loss(lat, 2, 0).loss >= 2.0 * std::log(2.0) - 1e-12);
  }
  const EmotionLattice half = uniform_lattice(2, 2, 2);
  CHECK(std::abs(lattice_max_pool_loss(half, 1, 0).loss - 2.0 * std::log(2.0)) <= 1e-12);
}

TEST_CASE("max pooling gradient touches only the selected nodes") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const EmotionLattice lat = random_lattice(rng, 4, 3, 3);
    const EmotionLossResult r = lattice_max_pool_loss(lat, 1, 0);
    const SelectedNodes s = *r.selected;
    const Index nonzero_rows = (r.grad_log_probs.array() != 0.0).rowwise().any().count();
    const bool same = s.t_star == s.t_neg && s.u_star == s.u_neg;
    CHECK(nonzero_rows == (same ? 1 : 2));
    CHECK((r.grad_log_probs.array() != 0.0).count() == 2);
    CHECK(r.grad_log_probs(lat.node(s.t_star, s.u_star), 1) == -1.0);
    CHECK(r.grad_log_probs(lat.node(s.t_neg, s.u_neg), 0) == -1.0);
  }
}

TEST_CASE("node selection breaks ties toward the smallest t then u") {
  const EmotionLattice lat = uniform_lattice(3, 2, 3);
  const SelectedNodes s = select_nodes(lat, 1, 0);
  CHECK(s.t_star == 0);
  CHECK(s.u_star == 0);
  CHECK(s.t_neg == 0);
  CHECK(s.u_neg == 0);

  Matrix p = Matrix::Constant(4, 2, 0.5);
  p.row(1) << 0.2, 0.8;
  p.row(3) << 0.2, 0.8;
  const SelectedNodes s2 = select_nodes(EmotionLattice::from_probs(2, 2, p), 1, 0);
  CHECK(s2.t_star == 0);
  CHECK(s2.u_star == 1);
  CHECK(s2.t_neg == 0);
  CHECK(s2.u_neg == 1);
}

TEST_CASE("lattice losses need two classes") {
  const EmotionLattice single = EmotionLattice::from_probs(2, 1, Matrix::Constant(2, 1, 1.0));
  CHECK_THROWS_AS(lattice_max_pool_loss(single, 0, 0), ArgumentError);
  CHECK_THROWS_AS(temporal_lattice_loss(single, 0, 0), ArgumentError);
  const EmotionLattice two = uniform_lattice(2, 1, 2);
  CHECK_THROWS_AS(lattice_max_pool_loss(two, 2, 0), ArgumentError);
}

TEST_CASE("temporal and token variants on uniform lattices") {
  const Index T = 4, S = 3, K = 5;
  const EmotionLattice lat = uniform_lattice(T, S, K);
  CHECK(std::abs(temporal_lattice_loss(lat, 2, 0).loss - 2.0 * S * std::log(K)) <= 1e-12);
  CHECK(std::abs(token_lattice_loss(lat, 2, 0).loss - 2.0 * T * std::log(K)) <= 1e-12);
}

TEST_CASE("temporal and token variants with forced selection") {
  Rng rng(6);
  const EmotionLattice row = random_lattice(rng, 1, 4, 3);
  double expected = 0.0;
  for (Index u = 0; u < 4; ++u) expected -= row.log_prob(0, u, 2) + row.log_prob(0, u, 0);
  CHECK(std::abs(temporal_lattice_loss(row, 2, 0).loss - expected) <= 1e-12);

  const EmotionLattice column = random_lattice(rng, 5, 1, 3);
  expected = 0.0;
  for (Index t = 0; t < 5; ++t) expected -= column.log_prob(t, 0, 1) + column.log_prob(t, 0, 0);
  CHECK(std::abs(token_lattice_loss(column, 1, 0).loss - expected) <= 1e-12);
}

TEST_CASE("temporal and token variants match a two-pass reference") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const EmotionLattice lat = random_lattice(rng, 3, 3, 3);
    const Matrix p = lat.probs();
    const Extremes e = find_extremes(p, 3, 3, 2, 0);
    double temporal = 0.0, token = 0.0;
    for (Index u = 0; u < 3; ++u) temporal -= std::log(p(e.t_star * 3 + u, 2)) + std::log(p(e.t_neg * 3 + u, 0));
    for (Index t = 0; t < 3; ++t) token -= std::log(p(t * 3 + e.u_star, 2)) + std::log(p(t * 3 + e.u_neg, 0));
    CHECK(std::abs(temporal_lattice_loss(lat, 2, 0).loss - temporal) <= 1e-12);
    CHECK(std::abs(token_lattice_loss(lat, 2, 0).loss - token) <= 1e-12);
    CHECK(std::abs(lattice_max_pool_loss(lat, 2, 0).loss -
                   (-std::log(p(e.t_star * 3 + e.u_star, 2)) - std::log(p(e.t_neg * 3 + e.u_neg, 0)))) <= 1e-12);
  }
}

TEST_CASE("full lattice loss is the mean node cross-entropy") {
  const EmotionLattice uniform = uniform_lattice(3, 2, 4);
  CHECK(std::abs(full_lattice_loss(uniform, 1).loss - std::log(4.0)) <= 1e-12);

  const double eps = 1e-9;
  Matrix p = Matrix::Constant(6, 3, eps / 2.0);
  p.col(1).setConstant(1.0 - eps);
  CHECK(full_lattice_loss(EmotionLattice::from_probs(3, 2, p), 1).loss <= 2e-9);

  Rng rng(8);
  const EmotionLattice lat = random_lattice(rng, 3, 3, 3);
  const Matrix probs = lat.probs();
  double ce = 0.0;
  for (Index n = 0; n < 9; ++n) ce -= std::log(probs(n, 2));
  CHECK(std::abs(full_lattice_loss(lat, 2).loss - ce / 9.0) <= 1e-12);
}

TEST_CASE("region supervision") {
  Rng rng(9);
  const EmotionLattice lat = random_lattice(rng, 4, 3, 3);
  const std::vector<FrameRegion> whole{{0, 4, 2}};
  CHECK(std::abs(region_supervised_loss(lat, whole).loss - full_lattice_loss(lat, 2).loss) <= 1e-15);

  const std::vector<FrameRegion> split{{0, 2, 0}, {2, 4, 1}};
  const Matrix p = lat.probs();
  double ce = 0.0;
  for (Index t = 0; t < 4; ++t) {
    for (Index u = 0; u < 3; ++u) ce -= std::log(p(t * 3 + u, t < 2 ? 0 : 1));
  }
  CHECK(std::abs(region_supervised_loss(lat, split).loss - ce / 12.0) <= 1e-12);

  const double eps = 1e-10;
  Matrix perfect = Matrix::Constant(12, 3, eps / 2.0);
  for (Index t = 0; t < 4; ++t) {
    for (Index u = 0; u < 3; ++u) perfect(t * 3 + u, t < 2 ? 0 : 1) = 1.0 - eps;
  }
  CHECK(region_supervised_loss(EmotionLattice::from_probs(4, 3, perfect), split).loss <= 1e-9);
}

TEST_CASE("regions must tile the frames") {
  const EmotionLattice lat = uniform_lattice(4, 1, 3);
  const std::vector<FrameRegion> overlap{{0, 3, 0}, {2, 4, 1}};
  const std::vector<FrameRegion> gap{{0, 1, 0}, {2, 4, 1}};
  const std::vector<FrameRegion> short_cover{{0, 3, 0}};
  const std::vector<FrameRegion> bad_label{{0, 4, 3}};
  CHECK_THROWS_AS(region_supervised_loss(lat, overlap), ArgumentError);
  CHECK_THROWS_AS(region_supervised_loss(lat, gap), ArgumentError);
  CHECK_THROWS_AS(region_supervised_loss(lat, short_cover), ArgumentError);
  CHECK_THROWS_AS(region_supervised_loss(lat, bad_label), ArgumentError);
  CHECK_THROWS_AS(emotion_lattice_loss(LatticeLossKind::Region, lat, 1, 0, {}), ArgumentError);
}

TEST_CASE("losses are nonnegative") {
  Rng rng(10);
  const std::vector<FrameRegion> regions{{0, 1, 0}, {1, 3, 2}};
  for (int trial = 0; trial < 50; ++trial) {
    const EmotionLattice lat = random_lattice(rng, 3, 2, 3);
    for (LatticeLossKind kind : {LatticeLossKind::MaxPool, LatticeLossKind::Temporal, LatticeLossKind::Token,
                                 LatticeLossKind::Full, LatticeLossKind::Region, LatticeLossKind::None}) {
      CHECK(emotion_lattice_loss(kind, lat, 2, 0, regions).loss >= 0.0);
    }
  }
}

TEST_CASE("losses are invariant to a consistent class permutation") {
  Rng rng(11);
  const std::vector<int> perm{2, 0, 3, 1};  // new index of each old class
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix logits = test_util::random_matrix(rng, 6, 4);
    Matrix permuted(6, 4);
    for (int k = 0; k < 4; ++k) permuted.col(perm[static_cast<std::size_t>(k)]) = logits.col(k);
    const EmotionLattice a = EmotionLattice::from_logits(3, 2, logits);
    const EmotionLattice b = EmotionLattice::from_logits(3, 2, permuted);
    const std::vector<FrameRegion> ra{{0, 2, 1}, {2, 3, 3}};
    const std::vector<FrameRegion> rb{{0, 2, perm[1]}, {2, 3, perm[3]}};
    for (LatticeLossKind kind : {LatticeLossKind::MaxPool, LatticeLossKind::Temporal, LatticeLossKind::Token,
                                 LatticeLossKind::Full, LatticeLossKind::Region}) {
      const double la = emotion_lattice_loss(kind, a, 3, 1, ra).loss;
      const double lb = emotion_lattice_loss(kind, b, perm[3], perm[1], rb).loss;
      CHECK(std::abs(la - lb) <= 1e-12);
    }
  }
}

TEST_CASE("lattice loss gradients match finite differences through the joint") {
  Rng rng(12);
  const Index T = 3, S = 3, K = 4, H = 4;
  AdditiveJoint joint("emotion", H, K);
  joint.init(rng);
  Parameter h("h", T, H), g("g", S, H);
  h.value = test_util::random_matrix(rng, T, H);
  g.value = test_util::random_matrix(rng, S, H);
  const std::vector<FrameRegion> regions{{0, 1, 0}, {1, 3, 3}};
  for (LatticeLossKind kind : {LatticeLossKind::MaxPool, LatticeLossKind::Temporal, LatticeLossKind::Token,
                               LatticeLossKind::Full, LatticeLossKind::Region}) {
    ParameterList params{&h, &g};
    joint.append_parameters(params);
    zero_grads(params);
    const LossFunction loss = [&](bool with_grad) {
      const EmotionLattice lat = emotion_joint(h.value, g.value, joint);
      const EmotionLossResult r = emotion_lattice_loss(kind, lat, 3, 0, regions);
      if (with_grad) joint.backward(h.value, g.value, emotion_logits_grad(lat, r.grad_log_probs), h.grad, g.grad);
      return r.loss;
    };
    CHECK_MESSAGE(grad_check(loss, params).max_rel_error <= 1e-4, to_string(kind));
  }
}

TEST_CASE("lattice loss names round-trip") {
  for (LatticeLossKind kind : {LatticeLossKind::None, LatticeLossKind::MaxPool, LatticeLossKind::Temporal,
                               LatticeLossKind::Token, LatticeLossKind::Full, LatticeLossKind::Region}) {
    CHECK(parse_lattice_loss(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_lattice_loss("softmax"), ArgumentError);
}
