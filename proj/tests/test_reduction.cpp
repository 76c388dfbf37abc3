#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pivotsched/reduction.hpp"

using namespace pivotsched;

namespace {

// Naive reference UPGMA: recomputes every cluster distance as the plain mean
// of all member-pair distances from the original matrix, with the same
// smallest-representative tie-break as the production code.
std::vector<LinkageMerge> naive_linkage(const Matrix& x) {
  const int n = x.rows;
  std::vector<std::vector<double>> d0(n, std::vector<double>(n, 0.0));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double s = 0.0;
      for (int c = 0; c < x.cols; ++c) {
        const double t = x.at(a, c) - x.at(b, c);
        s += t * t;
      }
      d0[a][b] = std::sqrt(s);
    }
  std::vector<std::vector<int>> clusters(n);
  for (int i = 0; i < n; ++i) clusters[i] = {i};  // kept sorted by smallest member
  std::vector<LinkageMerge> merges;
  while (clusters.size() > 1) {
    size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    int best_a = -1, best_b = -1;
    for (size_t i = 0; i < clusters.size(); ++i)
      for (size_t j = i + 1; j < clusters.size(); ++j) {
        double mean = 0.0;
        for (int u : clusters[i])
          for (int v : clusters[j]) mean += d0[u][v];
        mean /= static_cast<double>(clusters[i].size() * clusters[j].size());
        const int a = clusters[i].front(), b = clusters[j].front();
        if (mean < best || (mean == best && (a < best_a || (a == best_a && b < best_b)))) {
          best = mean;
          best_a = a;
          best_b = b;
          bi = i;
          bj = j;
        }
      }
    merges.push_back({best_a, best_b, best});
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(clusters[bi].begin(), clusters[bi].end());
    clusters.erase(clusters.begin() + static_cast<long>(bj));
  }
  return merges;
}

Matrix random_matrix(int rows, int cols, uint64_t seed) {
  Matrix m(rows, cols);
  uint64_t s = seed;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      s = s * 6364136223846793005ull + 1442695040888963407ull;
      m.at(r, c) = static_cast<double>(s >> 11) / static_cast<double>(1ull << 53) * 2.0 - 1.0;
    }
  return m;
}

Matrix points_1d(std::vector<double> values) {
  Matrix m(static_cast<int>(values.size()), 1);
  for (int r = 0; r < m.rows; ++r) m.at(r, 0) = values[r];
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Snapshots, MatrixLayoutIsNodeByTime) {
  Trajectory traj;
  traj.times = {0.0, 10.0, 20.0};
  traj.states = {{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}};
  Matrix m = snapshot_matrix(traj);
  EXPECT_EQ(m.rows, 2);
  EXPECT_EQ(m.cols, 3);
  EXPECT_EQ(m.at(0, 0), 1.0);
  EXPECT_EQ(m.at(0, 2), 5.0);
  EXPECT_EQ(m.at(1, 1), 4.0);

  Trajectory empty;
  EXPECT_THROW(snapshot_matrix(empty), ShapeError);
  Trajectory ragged;
  ragged.states = {{1.0, 2.0}, {3.0}};
  EXPECT_THROW(snapshot_matrix(ragged), ShapeError);
}

TEST(Snapshots, CollectRunsTheFieldModel) {
  CylGrid g(10.0, 1.0, 1, 2, 3);
  auto model = FieldModel(g, SoilMap::uniform(loam_soil(), g.size()),
                          CropCalendar::constant({1.0, 1.0, 3.0, 1.0}, 10));
  std::vector<double> x0(g.size(), -1.5);
  auto weather = [](int) { return Forcing{1e-8, 3e-8}; };
  Matrix m = collect_snapshots(model, x0, SprinklerSchedule::off(), weather, 12.0 * 3600.0, 3.0 * 3600.0);
  EXPECT_EQ(m.rows, g.size());
  EXPECT_EQ(m.cols, 5);  // initial state plus four samples
  for (int i = 0; i < m.rows; ++i) EXPECT_EQ(m.at(i, 0), -1.5);
  EXPECT_NE(m.at(g.size() - 1, 4), -1.5);  // the field actually moved
}

TEST(Standardize, ZScoresRows) {
  Matrix m(2, 4);
  double vals[4] = {1.0, 3.0, 5.0, 7.0};  // mean 4, sd sqrt(5)
  for (int c = 0; c < 4; ++c) {
    m.at(0, c) = vals[c];
    m.at(1, c) = 2.5;  // constant row
  }
  Matrix z = standardize_rows(m);
  const double sd = std::sqrt(5.0);
  for (int c = 0; c < 4; ++c) {
    EXPECT_NEAR(z.at(0, c), (vals[c] - 4.0) / sd, 1e-14);
    EXPECT_EQ(z.at(1, c), 0.0);
  }
}

TEST(Linkage, MatchesNaiveReferenceOnRandomInstances) {
  for (uint64_t seed : {7ull, 19ull, 101ull, 4242ull}) {
    for (int n : {4, 6, 8}) {
      Matrix m = random_matrix(n, 5, seed * 1000 + static_cast<uint64_t>(n));
      auto fast = average_linkage(m);
      auto ref = naive_linkage(m);
      ASSERT_EQ(fast.merges.size(), ref.size());
      for (size_t k = 0; k < ref.size(); ++k) {
        EXPECT_EQ(fast.merges[k].a, ref[k].a) << "seed " << seed << " n " << n << " merge " << k;
        EXPECT_EQ(fast.merges[k].b, ref[k].b) << "seed " << seed << " n " << n << " merge " << k;
        EXPECT_NEAR(fast.merges[k].dist, ref[k].dist, 1e-10 * (1.0 + ref[k].dist));
      }
    }
  }
}

TEST(Linkage, TiesBreakTowardSmallestRepresentatives) {
  // Unit square: four inter-point distances are exactly 1, two are sqrt(2).
  Matrix sq(4, 2);
  sq.at(0, 0) = 0.0; sq.at(0, 1) = 0.0;
  sq.at(1, 0) = 0.0; sq.at(1, 1) = 1.0;
  sq.at(2, 0) = 1.0; sq.at(2, 1) = 0.0;
  sq.at(3, 0) = 1.0; sq.at(3, 1) = 1.0;
  auto l = average_linkage(sq);
  ASSERT_EQ(l.merges.size(), 3u);
  EXPECT_EQ(l.merges[0].a, 0);
  EXPECT_EQ(l.merges[0].b, 1);
  EXPECT_DOUBLE_EQ(l.merges[0].dist, 1.0);
  EXPECT_EQ(l.merges[1].a, 2);
  EXPECT_EQ(l.merges[1].b, 3);
  EXPECT_DOUBLE_EQ(l.merges[1].dist, 1.0);
  EXPECT_EQ(l.merges[2].a, 0);
  EXPECT_EQ(l.merges[2].b, 2);
  EXPECT_NEAR(l.merges[2].dist, (1.0 + std::sqrt(2.0)) / 2.0, 1e-15);
  // Same story from the naive side.
  auto ref = naive_linkage(sq);
  for (size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(l.merges[k].a, ref[k].a);
    EXPECT_EQ(l.merges[k].b, ref[k].b);
  }
}

TEST(Linkage, HeightsAreMonotone) {
  for (uint64_t seed : {3ull, 77ull, 555ull}) {
    Matrix m = random_matrix(10, 4, seed);
    auto l = average_linkage(m);
    for (size_t k = 1; k < l.merges.size(); ++k)
      EXPECT_GE(l.merges[k].dist, l.merges[k - 1].dist - 1e-12) << "seed " << seed << " merge " << k;
  }
}

TEST(Linkage, DegenerateSizes) {
  Matrix one(1, 3);
  one.at(0, 0) = one.at(0, 1) = one.at(0, 2) = 5.0;
  auto l = average_linkage(one);
  EXPECT_EQ(l.n, 1);
  EXPECT_TRUE(l.merges.empty());
  EXPECT_THROW(average_linkage(Matrix(0, 3)), ShapeError);
}

TEST(Cut, ThresholdSelectsDendrogramPrefix) {
  auto l = average_linkage(points_1d({0.0, 1.0, 10.0, 11.0}));
  auto c3 = cut_linkage(l, 3.0);
  ASSERT_EQ(c3.clusters.size(), 2u);
  EXPECT_EQ(c3.clusters[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(c3.clusters[1], (std::vector<int>{2, 3}));
  EXPECT_EQ(c3.threshold, 3.0);
  c3.validate(4);

  auto tiny = cut_linkage(l, 0.5);
  EXPECT_EQ(tiny.clusters.size(), 4u);
  auto huge = cut_linkage(l, 100.0);
  EXPECT_EQ(huge.clusters.size(), 1u);
  EXPECT_EQ(huge.clusters[0].size(), 4u);
  // Cutting exactly at a merge height includes that merge.
  auto exact = cut_linkage(l, 1.0);
  EXPECT_EQ(exact.clusters.size(), 2u);
  EXPECT_THROW(cut_linkage(l, -1.0), ParameterError);
}

TEST(Cut, ClusterStatesValidatesInputs) {
  Matrix m = points_1d({0.0, 1.0, 10.0, 11.0});
  auto c = cluster_states(m, 3.0);
  EXPECT_EQ(c.clusters.size(), 2u);
  EXPECT_THROW(cluster_states(m, 0.0), ParameterError);
  EXPECT_THROW(cluster_states(m, -2.0), ParameterError);
  EXPECT_THROW(cluster_states(Matrix(4, 0), 1.0), ShapeError);
  EXPECT_THROW(cluster_states(Matrix(0, 4), 1.0), ShapeError);
}

TEST(Cut, StandardizationChangesTheGrouping) {
  // Rows 0/1 are small-amplitude, rows 2/3 large, with shapes p,q,p,q. Raw
  // distances group by amplitude; z-scored distances group by shape.
  const double p[4] = {1.0, 1.0, -1.0, -1.0};
  const double q[4] = {1.0, -1.0, 1.0, -1.0};
  Matrix m(4, 4);
  for (int c = 0; c < 4; ++c) {
    m.at(0, c) = 0.01 * p[c];
    m.at(1, c) = 0.01 * q[c];
    m.at(2, c) = 100.0 * p[c];
    m.at(3, c) = 100.0 * q[c];
  }
  auto raw = cluster_states(m, 1.0, false);
  ASSERT_GE(raw.clusters.size(), 2u);
  EXPECT_EQ(raw.clusters[0], (std::vector<int>{0, 1}));
  auto z = cluster_states(m, 1.0, true);
  ASSERT_EQ(z.clusters.size(), 2u);
  EXPECT_EQ(z.clusters[0], (std::vector<int>{0, 2}));
  EXPECT_EQ(z.clusters[1], (std::vector<int>{1, 3}));
}

TEST(Projection, LiftingMapIsOrthonormal) {
  Clustering c;
  c.clusters = {{0, 2, 5}, {1}, {3, 4}};
  Projection p(c, 6);
  EXPECT_EQ(p.full_dim(), 6);
  EXPECT_EQ(p.reduced_dim(), 3);
  // Columns of the lifting map: entry (i, j) is weight(j) if i in cluster j.
  for (int j1 = 0; j1 < 3; ++j1)
    for (int j2 = 0; j2 < 3; ++j2) {
      double dot = 0.0;
      for (int i = 0; i < 6; ++i) {
        const double u1 = p.cluster_of(i) == j1 ? p.weight(j1) : 0.0;
        const double u2 = p.cluster_of(i) == j2 ? p.weight(j2) : 0.0;
        dot += u1 * u2;
      }
      EXPECT_NEAR(dot, j1 == j2 ? 1.0 : 0.0, 1e-12);
    }
}

TEST(Projection, FrozenSingleClusterExample) {
  Clustering c;
  c.clusters = {{0, 1, 2}};
  Projection p(c, 3);
  auto xi = p.reduce(std::vector<double>{1.0, 2.0, 3.0});
  ASSERT_EQ(xi.size(), 1u);
  // (1+2+3)/sqrt(3), reference value from 50-digit arithmetic.
  EXPECT_NEAR(xi[0], 3.4641016151377545871, 1e-15);
  auto back = p.lift(xi);
  for (double v : back) EXPECT_NEAR(v, 2.0, 1e-15);  // cluster average
}

TEST(Projection, ReduceAfterLiftIsIdentity) {
  Clustering c;
  c.clusters = {{0, 3}, {1, 2, 4}};
  Projection p(c, 5);
  std::vector<double> xi{1.7, -2.3};
  auto round = p.reduce(p.lift(xi));
  EXPECT_NEAR(round[0], xi[0], 1e-14);
  EXPECT_NEAR(round[1], xi[1], 1e-14);
  // States constant on clusters are reproduced exactly by lift(reduce(.)).
  std::vector<double> x{5.0, -1.0, -1.0, 5.0, -1.0};
  auto rec = p.lift(p.reduce(x));
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(rec[i], x[i], 1e-14);
}

TEST(Projection, SingletonClustersAreTheIdentity) {
  Clustering c;
  c.clusters = {{0}, {1}, {2}, {3}};
  Projection p(c, 4);
  std::vector<double> x{0.3, -0.4, 2.0, -7.5};
  auto xi = p.reduce(x);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(xi[i], x[i]);
  auto back = p.lift(xi);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(back[i], x[i]);
}

TEST(Projection, ValidationAndShapes) {
  Clustering missing;
  missing.clusters = {{0, 1}};
  EXPECT_THROW(Projection(missing, 3), ShapeError);
  Clustering dup;
  dup.clusters = {{0, 1}, {1, 2}};
  EXPECT_THROW(Projection(dup, 3), ShapeError);
  Clustering range;
  range.clusters = {{0, 5}};
  EXPECT_THROW(Projection(range, 2), ShapeError);

  Clustering ok;
  ok.clusters = {{0, 1}, {2}};
  Projection p(ok, 3);
  std::vector<double> xi(2), x(3), wrong(4);
  EXPECT_THROW(p.reduce(std::span<const double>(wrong), std::span<double>(xi)), ShapeError);
  EXPECT_THROW(p.lift(std::span<const double>(xi), std::span<double>(wrong)), ShapeError);
}

TEST(Projection, CsvRoundTripPreservesThePartition) {
  Clustering c;
  c.clusters = {{0, 2}, {1, 4}, {3}};
  Projection p(c, 5);
  const std::string path = std::string(::testing::TempDir()) + "clusters_rt.csv";
  p.save_csv(path, 1.25);
  const std::string text = slurp(path);
  EXPECT_NE(text.find("# threshold=1.25"), std::string::npos);
  EXPECT_NE(text.find("# reduced_dim=3"), std::string::npos);
  EXPECT_NE(text.find("node_id,cluster_id"), std::string::npos);

  auto q = Projection::load_csv(path, 5);
  EXPECT_EQ(q.reduced_dim(), 3);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(q.cluster_of(i), p.cluster_of(i));

  // Arbitrary (non-contiguous) cluster numbering on disk renumbers by
  // smallest member.
  const std::string scrambled = std::string(::testing::TempDir()) + "clusters_scrambled.csv";
  {
    std::ofstream f(scrambled);
    f << "node_id,cluster_id\n2,90\n0,90\n1,17\n";
  }
  auto s = Projection::load_csv(scrambled, 3);
  EXPECT_EQ(s.reduced_dim(), 2);
  EXPECT_EQ(s.cluster_of(0), 0);
  EXPECT_EQ(s.cluster_of(2), 0);
  EXPECT_EQ(s.cluster_of(1), 1);

  const std::string missing = std::string(::testing::TempDir()) + "clusters_missing.csv";
  {
    std::ofstream f(missing);
    f << "node_id,cluster_id\n0,0\n1,0\n";
  }
  EXPECT_THROW(Projection::load_csv(missing, 3), ParseError);
  const std::string dup = std::string(::testing::TempDir()) + "clusters_dup.csv";
  {
    std::ofstream f(dup);
    f << "node_id,cluster_id\n0,0\n0,1\n";
  }
  EXPECT_THROW(Projection::load_csv(dup, 1), ParseError);
}

TEST(ReducedModel, RingLayerClustersReproduceAxisymmetricRuns) {
  // Clusters that merge each ring/layer across all sectors span every
  // axisymmetric state. Under axisymmetric forcing the reduced run must then
  // match the full one sample for sample.
  CylGrid g(60.0, 1.0, 3, 8, 4);
  FieldModel full(g, SoilMap::uniform(loam_soil(), g.size()), CropCalendar::constant({1.0, 1.0, 3.0, 1.0}, 10));
  Clustering c;
  for (int i = 0; i < g.nr(); ++i)
    for (int k = 0; k < g.nz(); ++k) {
      std::vector<int> members;
      for (int j = 0; j < g.ntheta(); ++j) members.push_back(g.id(i, j, k));
      std::sort(members.begin(), members.end());
      c.clusters.push_back(std::move(members));
    }
  Projection p(c, g.size());
  ReducedModel reduced(full, p);
  EXPECT_EQ(reduced.dim(), 12);

  std::vector<double> x0(g.size());
  for (int id = 0; id < g.size(); ++id) {
    const auto nd = g.node(id);
    x0[id] = -1.1 - 0.15 * nd.i + 0.08 * nd.k;
  }
  auto weather = [](int) { return Forcing{2e-8, 4e-8}; };
  const double horizon = 2.0 * kSecondsPerDay, dt_sample = 6.0 * 3600.0;
  auto traj_full = full.simulate(x0, SprinklerSchedule::off(), weather, 0.0, horizon, dt_sample);
  auto traj_red = reduced.simulate(p.reduce(x0), SprinklerSchedule::off(), weather, 0.0, horizon, dt_sample);
  auto lifted = reduced.lift_trajectory(traj_red);
  ASSERT_EQ(lifted.states.size(), traj_full.states.size());
  for (size_t s = 0; s < lifted.states.size(); ++s)
    for (int id = 0; id < g.size(); ++id)
      EXPECT_NEAR(lifted.states[s][id], traj_full.states[s][id], 1e-9) << "sample " << s << " node " << id;
  EXPECT_LT(model_mse(lifted, traj_full), 1e-20);
}

TEST(ReducedModel, ShapeChecks) {
  CylGrid g(10.0, 1.0, 1, 2, 3);
  FieldModel full(g, SoilMap::uniform(loam_soil(), g.size()), CropCalendar::constant({1.0, 1.0, 3.0, 1.0}, 5));
  Clustering wrong;
  wrong.clusters = {{0, 1}};
  EXPECT_THROW(ReducedModel(full, Projection(wrong, 2)), ShapeError);

  Clustering ok;
  ok.clusters = {{0, 1, 2, 3, 4, 5}};
  ReducedModel r(full, Projection(ok, 6));
  std::vector<double> bad_xi{1.0, 2.0};
  EXPECT_THROW(r.simulate(bad_xi, SprinklerSchedule::off(), no_weather(), 0.0, 100.0, 50.0), ShapeError);
}

TEST(Mse, MeasuresMeanSquaredGap) {
  Trajectory a, b;
  a.times = b.times = {0.0, 1.0};
  a.states = {{1.0, 2.0}, {3.0, 4.0}};
  b.states = {{1.0, 2.0}, {3.0, 4.0}};
  EXPECT_DOUBLE_EQ(model_mse(a, b), 0.0);
  for (auto& s : b.states)
    for (auto& v : s) v += 0.5;
  EXPECT_DOUBLE_EQ(model_mse(a, b), 0.25);

  Trajectory shifted = b;
  shifted.times = {0.0, 2.0};
  EXPECT_THROW(model_mse(a, shifted), ShapeError);
  Trajectory ragged = b;
  ragged.states[1].pop_back();
  EXPECT_THROW(model_mse(a, ragged), ShapeError);
}
