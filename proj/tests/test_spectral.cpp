#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "optdisc/pipeline.hpp"
#include "optdisc/spectral.hpp"
#include "oracles.hpp"

using namespace optdisc;

namespace {

Eigen::MatrixXd two_cliques() {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 4);
  w(0, 1) = w(1, 0) = 1.0;
  w(2, 3) = w(3, 2) = 1.0;
  return w;
}

/// Two 5-state dense blocks joined by `coupling` on every cross pair.
Eigen::MatrixXd coupled_blocks(double coupling) { return oracle::block_adjacency({5, 5}, 17, coupling); }

}  // namespace

TEST_CASE("two-state swap") {
  Eigen::MatrixXd w(2, 2);
  w << 0, 1, 1, 0;
  const auto lap = build_laplacian(w);
  CHECK(lap.L == w);
  const auto dec = decompose(lap);
  CHECK(dec.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(dec.eigenvalues(1) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("identity adjacency") {
  const auto lap = build_laplacian(Eigen::MatrixXd::Identity(4, 4));
  CHECK(lap.L == Eigen::MatrixXd::Identity(4, 4));
  const auto dec = decompose(lap);
  CHECK((dec.eigenvalues.array() - 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("laplacian rows are stochastic") {
  const GridWorld w = load_gridworld_file(oracle::data_path("three_room.map"));
  const auto lap = build_laplacian(adjacency(exhaustive_model(w)));
  CHECK((lap.L.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(lap.L.minCoeff() >= 0.0);
  const auto dec = decompose(lap);
  CHECK(std::abs(dec.eigenvalues(0) - 1.0) <= 1e-9);
  for (Eigen::Index i = 1; i < dec.eigenvalues.size(); ++i) CHECK(dec.eigenvalues(i) <= dec.eigenvalues(i - 1));
}

TEST_CASE("laplacian input checks") {
  CHECK_THROWS_AS(build_laplacian(Eigen::MatrixXd::Zero(3, 3)), NumericError);
  Eigen::MatrixXd neg = Eigen::MatrixXd::Ones(3, 3);
  neg(0, 1) = neg(1, 0) = -1.0;
  CHECK_THROWS_AS(build_laplacian(neg), InvalidArgument);
  Eigen::MatrixXd asym = Eigen::MatrixXd::Ones(3, 3);
  asym(0, 1) = 2.0;
  CHECK_THROWS_AS(build_laplacian(asym), InvalidArgument);
}

TEST_CASE("zero-degree states are dropped and reported") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 4);
  w(0, 1) = w(1, 0) = 1.0;
  w(1, 3) = w(3, 1) = 2.0;
  const auto lap = build_laplacian(w);
  CHECK(lap.size() == 3);
  CHECK(lap.kept == std::vector<Eigen::Index>{0, 1, 3});
  CHECK(lap.original_size == 4);
}

TEST_CASE("disconnected cliques give a double unit eigenvalue") {
  const auto dec = decompose(build_laplacian(two_cliques()));
  CHECK(dec.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dec.eigenvalues(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dec.eigenvalues(2) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("eigenpairs agree with the Jacobi oracle") {
  const GridWorld w = load_gridworld_file(oracle::data_path("three_room.map"));
  const Eigen::MatrixXd adj = oracle::block_adjacency({4, 6, 5, 7, 3, 8, 6, 5, 4}, 5, 0.01);
  for (const Eigen::MatrixXd& m : {adj, Eigen::MatrixXd(adjacency(exhaustive_model(w)))}) {
    const auto lap = build_laplacian(m);
    const auto dec = decompose(lap);
    const auto ref = oracle::random_walk_spectrum(m);
    REQUIRE(ref.size() == static_cast<std::size_t>(dec.eigenvalues.size()));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(dec.eigenvalues(static_cast<Eigen::Index>(i)) - ref[i]) < 1e-10);
    CHECK(max_eigen_residual(lap, dec, dec.eigenvalues.size()) <= 1e-8);
  }
}

TEST_CASE("gap selection") {
  Eigen::VectorXd a(4);
  a << 1.0, 0.99, 0.20, 0.10;
  GapSelection g = select_k(a, 0.5);
  CHECK(g.k == 2);
  CHECK(g.ratio == doctest::Approx((0.99 - 0.20) / (1 - 0.20)).epsilon(1e-14));
  CHECK(g.ratio == doctest::Approx(0.9875));
  CHECK_FALSE(g.fallback);

  Eigen::VectorXd b(4);
  b << 1.0, 1.0, 1.0, 0.0;
  g = select_k(b, 0.5);
  CHECK(g.k == 3);
  CHECK(g.ratio == 1.0);

  Eigen::VectorXd c(4);
  c << 1.0, 0.9, 0.8, 0.7;
  g = select_k(c, 0.99);
  CHECK(g.fallback);
  const auto best = std::max_element(g.ratios.begin() + 1, g.ratios.end());
  CHECK(g.k == static_cast<int>(best - g.ratios.begin()) + 1);
  CHECK(g.ratio == *best);

  CHECK_THROWS_AS(select_k(Eigen::VectorXd::Ones(2), 0.5), InvalidArgument);
  CHECK_THROWS_AS(select_k(a, 0.0), InvalidArgument);
  CHECK_THROWS_AS(select_k(a.reverse().eval(), 0.5), InvalidArgument);
}

TEST_CASE("simplex vertices") {
  Eigen::MatrixXd one(3, 1);
  one << 1.0, 3.0, 2.0;
  CHECK(find_simplex_vertices(one).indices == std::vector<Eigen::Index>{1});

  Eigen::MatrixXd two(3, 2);
  two << 1, 0, 0, 1, 0.5, 0.5;
  auto v = find_simplex_vertices(two).indices;
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<Eigen::Index>{0, 1});

  // Exhaustive check of the second vertex: farthest from the line through the first.
  Eigen::MatrixXd pts(5, 2);
  pts << 2.0, 0.1, 0.3, 1.2, 1.0, 1.0, -0.2, 0.9, 0.5, -0.4;
  const auto found = find_simplex_vertices(pts).indices;
  CHECK(found[0] == 0);
  const Eigen::Vector2d dir = pts.row(0).normalized();
  Eigen::Index far = -1;
  double far_d = -1.0;
  for (Eigen::Index i = 1; i < pts.rows(); ++i) {
    const Eigen::Vector2d p = pts.row(i);
    const double d = (p - p.dot(dir) * dir).norm();
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  CHECK(found[1] == far);
  CHECK_THROWS_AS(find_simplex_vertices(Eigen::MatrixXd::Zero(1, 2)), InvalidArgument);
}

TEST_CASE("exact blocks put vertices in different blocks") {
  const auto res = pcca(oracle::block_adjacency({3, 4}, 2), 0.5);
  CHECK(res.k() == 2);
  const auto& vtx = res.membership.vertices;
  CHECK((vtx[0] < 3) != (vtx[1] < 3));
}

TEST_CASE("memberships") {
  const Eigen::MatrixXd y = Eigen::MatrixXd::Identity(3, 3);
  const auto m = compute_memberships(y, {0, 1, 2});
  CHECK((m.chi - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

  const auto res = pcca(two_cliques(), 0.5);
  const Eigen::MatrixXd& chi = res.membership.chi;
  for (Eigen::Index r = 0; r < 4; ++r) {
    const Eigen::Index own = r < 2 ? 0 : 1;
    const Eigen::Index block_of_vertex = res.membership.vertices[0] < 2 ? 0 : 1;
    const Eigen::Index col = own == block_of_vertex ? 0 : 1;
    CHECK(std::abs(chi(r, col) - 1.0) < 1e-12);
    CHECK(std::abs(chi(r, 1 - col)) < 1e-12);
  }
  CHECK_THROWS_AS(compute_memberships(y, {0, 1}), InvalidArgument);
  CHECK_THROWS_AS(compute_memberships(Eigen::MatrixXd::Zero(3, 2), {0, 1}), NumericError);
}

TEST_CASE("weak coupling keeps interior memberships high") {
  const Eigen::MatrixXd w = coupled_blocks(0.01);
  const auto res = pcca(w, 0.5);
  REQUIRE(res.k() == 2);
  const Eigen::MatrixXd& chi = res.membership.chi;
  for (Eigen::Index r = 0; r < chi.rows(); ++r) CHECK(chi.row(r).maxCoeff() > 0.9);

  // Same transform applied to oracle eigenvectors.
  const Eigen::VectorXd d = w.rowwise().sum();
  Eigen::MatrixXd sym = d.cwiseSqrt().cwiseInverse().asDiagonal() * w * d.cwiseSqrt().cwiseInverse().asDiagonal();
  const auto ref = oracle::jacobi_eigen(sym);
  Eigen::MatrixXd y = d.cwiseSqrt().cwiseInverse().asDiagonal() * ref.vectors.leftCols(2);
  const auto ref_m = compute_memberships(y, res.membership.vertices);
  CHECK((ref_m.chi - chi).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("membership rows lie on the simplex") {
  const GridWorld w = load_gridworld_file(oracle::data_path("three_room.map"));
  for (double v : {0.0, 3.0}) {
    const auto res = pcca(adjacency(exhaustive_model(w, {v})), 0.8);
    const Eigen::MatrixXd& chi = res.membership.chi;
    CHECK(chi.minCoeff() >= 0.0);
    CHECK(chi.maxCoeff() <= 1.0);
    CHECK((chi.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-10);
    // Vertex rows are unit vectors before clamping.
    for (int i = 0; i < res.k(); ++i) {
      const Eigen::RowVectorXd row = res.membership.raw.row(res.membership.vertices[static_cast<std::size_t>(i)]);
      Eigen::RowVectorXd unit = Eigen::RowVectorXd::Zero(res.k());
      unit(i) = 1.0;
      CHECK((row - unit).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("connectivity") {
  Eigen::MatrixXd l(3, 3);
  l << 0.5, 0.25, 0.25, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4;
  CHECK(connectivity(Eigen::MatrixXd::Identity(3, 3), l) == l);

  const auto res = pcca(oracle::block_adjacency({3, 4, 5}, 9), 0.5);
  REQUIRE(res.k() == 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j) CHECK(std::abs(res.connectivity(i, j)) < 1e-12);
    }
  }
  CHECK(connected_pairs(res.connectivity, 0.02).empty());
  CHECK_THROWS_AS(connectivity(Eigen::MatrixXd::Identity(2, 2), l), InvalidArgument);
}

TEST_CASE("doorway topology shows in connectivity") {
  const GridWorld w = load_gridworld_file(oracle::data_path("three_room.map"));
  const auto res = pcca(adjacency(exhaustive_model(w)), 0.8);
  REQUIRE(res.k() == 3);
  // Label clusters by the room of their vertex.
  std::vector<int> room(3);
  for (int i = 0; i < 3; ++i) room[static_cast<std::size_t>(i)] = oracle::room_of(w, static_cast<StateId>(res.laplacian.kept[static_cast<std::size_t>(res.membership.vertices[static_cast<std::size_t>(i)])]));
  const auto pairs = connected_pairs(res.connectivity, SpectralParams{}.tau_conn);
  CHECK(pairs.size() == 4);
  for (auto [i, j] : pairs) CHECK(std::abs(room[static_cast<std::size_t>(i)] - room[static_cast<std::size_t>(j)]) == 1);
}

TEST_CASE("relabelling states permutes memberships") {
  const GridWorld w = load_gridworld_file(oracle::data_path("three_room.map"));
  const Eigen::MatrixXd adj = adjacency(exhaustive_model(w));
  std::vector<int> perm(static_cast<std::size_t>(adj.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
  Eigen::MatrixXd permuted(adj.rows(), adj.cols());
  for (Eigen::Index i = 0; i < adj.rows(); ++i) {
    for (Eigen::Index j = 0; j < adj.cols(); ++j) permuted(i, j) = adj(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  const auto a = pcca(adj, 0.8);
  const auto b = pcca(permuted, 0.8);
  REQUIRE(a.k() == b.k());
  // Match clusters through the argmax of a shared state, then compare rows.
  const Eigen::Index k = a.k();
  std::vector<Eigen::Index> col_map(static_cast<std::size_t>(k), -1);
  for (Eigen::Index i = 0; i < adj.rows(); ++i) {
    Eigen::Index ca = 0;
    Eigen::Index cb = 0;
    a.membership.chi.row(perm[static_cast<std::size_t>(i)]).maxCoeff(&ca);
    b.membership.chi.row(i).maxCoeff(&cb);
    col_map[static_cast<std::size_t>(ca)] = cb;
  }
  for (Eigen::Index i = 0; i < adj.rows(); ++i) {
    for (Eigen::Index c = 0; c < k; ++c) {
      CHECK(std::abs(a.membership.chi(perm[static_cast<std::size_t>(i)], c) - b.membership.chi(i, col_map[static_cast<std::size_t>(c)])) <
            1e-8);
    }
  }
  const Eigen::MatrixXd ca = normalized_connectivity(a.connectivity);
  const Eigen::MatrixXd cb = normalized_connectivity(b.connectivity);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) CHECK(std::abs(ca(i, j) - cb(col_map[static_cast<std::size_t>(i)], col_map[static_cast<std::size_t>(j)])) < 1e-8);
  }
}

TEST_CASE("memberships vary continuously with block coupling") {
  const auto exact = pcca(coupled_blocks(0.0), 0.5);
  double previous = 1.0;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const auto res = pcca(coupled_blocks(eps), 0.5);
    REQUIRE(res.k() == 2);
    // Align columns by the cluster of state 0.
    const bool swap = (res.membership.chi(0, 0) > 0.5) != (exact.membership.chi(0, 0) > 0.5);
    Eigen::MatrixXd chi = res.membership.chi;
    if (swap) chi.col(0).swap(chi.col(1));
    const double drift = (chi - exact.membership.chi).cwiseAbs().maxCoeff();
    CHECK(drift < previous);
    previous = drift;
  }
  CHECK(previous < 1e-3);
}

TEST_CASE("single precision instantiation") {
  const Eigen::MatrixXf w = coupled_blocks(0.01).cast<float>();
  const auto res = pcca(w, 0.5);
  CHECK(res.k() == 2);
  const auto lap = build_laplacian(w);
  const auto dec = decompose(lap);
  CHECK(std::abs(dec.eigenvalues(0) - 1.0f) < 1e-5f);
  CHECK(max_eigen_residual(lap, dec, 2) < 1e-4f);
  CHECK((res.membership.chi.rowwise().sum().array() - 1.0f).abs().maxCoeff() < 1e-5f);
}
