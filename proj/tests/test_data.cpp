#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fedmpa/data.hpp"
#include "fedmpa/error.hpp"
#include "oracles.hpp"

using namespace fedmpa;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LoaderError::Reason load_failure(const fs::path& dir) {
  try {
    load_dataset(dir);
  } catch (const LoaderError& e) {
    return e.reason();
  }
  ADD_FAILURE() << "load succeeded";
  return LoaderError::Reason::Malformed;
}

fs::path copy_fixture(const std::string& name) {
  auto dir = oracle::scratch_dir(name);
  fs::copy(oracle::fixture("tiny10"), dir, fs::copy_options::overwrite_existing | fs::copy_options::recursive);
  return dir;
}

}  // namespace

TEST(Loader, Tiny10Fixture) {
  auto ds = load_dataset(oracle::fixture("tiny10"));
  EXPECT_EQ(ds.n_nodes(), 10u);
  EXPECT_EQ(ds.n_classes, 2u);
  EXPECT_EQ(ds.features.cols(), 4u);
  EXPECT_EQ(ds.graph.n_edges(), 13u);
  EXPECT_TRUE(ds.graph.is_symmetric());
  EXPECT_EQ(ds.name, "tiny10");
}

TEST(Loader, RoundTripIsByteIdentical) {
  auto ds = load_dataset(oracle::fixture("tiny10"));
  auto dir = oracle::scratch_dir("roundtrip");
  save_dataset(dir, ds);
  auto back = load_dataset(dir);
  EXPECT_EQ(back.graph, ds.graph);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  auto dir2 = oracle::scratch_dir("roundtrip2");
  save_dataset(dir2, back);
  for (const char* f : {"edges.tsv", "features.bin", "labels.tsv", "manifest.txt"})
    EXPECT_EQ(slurp(dir / f), slurp(dir2 / f)) << f;
  // The fixture lists every edge once with u < v in sorted order.
  EXPECT_EQ(slurp(dir / "edges.tsv"), slurp(oracle::fixture("tiny10") / "edges.tsv"));
}

TEST(Loader, DistinctErrors) {
  EXPECT_EQ(load_failure(oracle::scratch_dir("empty")), LoaderError::Reason::MissingFile);

  auto d1 = copy_fixture("badedge");
  std::ofstream(d1 / "edges.tsv", std::ios::app) << "3\t10\n";
  EXPECT_EQ(load_failure(d1), LoaderError::Reason::DimensionMismatch);

  auto d2 = copy_fixture("badlabel");
  {
    std::ofstream out(d2 / "labels.tsv");
    for (int i = 0; i < 10; ++i) out << i << '\t' << (i == 4 ? 2 : 0) << '\n';
  }
  EXPECT_EQ(load_failure(d2), LoaderError::Reason::LabelOutOfRange);

  auto d3 = copy_fixture("shortfeat");
  fs::resize_file(d3 / "features.bin", 8 * 39);
  EXPECT_EQ(load_failure(d3), LoaderError::Reason::DimensionMismatch);

  auto d4 = copy_fixture("selfloop");
  std::ofstream(d4 / "edges.tsv", std::ios::app) << "2\t2\n";
  EXPECT_EQ(load_failure(d4), LoaderError::Reason::Malformed);

  auto d5 = copy_fixture("nolabels");
  fs::remove(d5 / "labels.tsv");
  EXPECT_EQ(load_failure(d5), LoaderError::Reason::MissingFile);
}

TEST(Splits, SizesDisjointDeterministic) {
  SbmSpec s;
  s.n = 100;
  auto ds = generate_sbm(s);
  SplitSpec spec;
  spec.stratified = false;
  spec.seed = 3;
  auto m = make_splits(ds, spec);
  EXPECT_EQ(m.train.size(), 1u);
  EXPECT_EQ(m.val.size(), 20u);
  EXPECT_EQ(m.test.size(), 20u);
  std::set<std::size_t> all;
  for (const auto* v : {&m.train, &m.val, &m.test}) all.insert(v->begin(), v->end());
  EXPECT_EQ(all.size(), 41u);
  auto again = make_splits(ds, spec);
  EXPECT_EQ(again.train, m.train);
  EXPECT_EQ(again.val, m.val);
  EXPECT_EQ(again.test, m.test);
}

TEST(Splits, DifferentSeedsDiffer) {
  SbmSpec s;
  s.n = 1000;
  s.p_in = 0.01;
  s.p_out = 0.001;
  auto ds = generate_sbm(s);
  SplitSpec a, b;
  a.seed = 1;
  b.seed = 2;
  auto ma = make_splits(ds, a), mb = make_splits(ds, b);
  EXPECT_NE(ma.val, mb.val);
  EXPECT_NE(ma.train, mb.train);
}

TEST(Splits, StratifiedFairShare) {
  SbmSpec s;
  s.n = 500;
  s.classes = 4;
  s.p_in = 0.02;
  s.p_out = 0.002;
  auto ds = generate_sbm(s);
  for (double frac : {0.01, 0.03, 0.05, 0.2}) {
    SplitSpec spec;
    spec.train_frac = frac;
    auto m = make_splits(ds, spec);
    EXPECT_EQ(m.train.size(), split_count(frac, 500));
    std::vector<double> per(4, 0.0);
    for (auto v : m.train) per[ds.labels[v]] += 1.0;
    for (std::size_t c = 0; c < 4; ++c) {
      const double share = static_cast<double>(m.train.size()) * 125.0 / 500.0;
      EXPECT_LE(std::abs(per[c] - share), 1.0) << frac;
    }
  }
}

TEST(Splits, InfeasibleStratification) {
  SbmSpec s;
  s.n = 100;
  s.classes = 3;
  auto ds = generate_sbm(s);
  SplitSpec spec;
  spec.train_frac = 0.01;  // one node, three classes
  EXPECT_THROW(make_splits(ds, spec), DomainError);
  spec.train_frac = 0.5;
  spec.val_frac = 0.4;
  spec.test_frac = 0.2;
  EXPECT_THROW(make_splits(ds, spec), DomainError);
  spec = {};
  spec.val_frac = 0.0;
  EXPECT_THROW(make_splits(ds, spec), DomainError);
}

TEST(StratifiedQuota, Examples) {
  EXPECT_EQ(stratified_quota({50, 30, 20}, 10), (std::vector<std::size_t>{5, 3, 2}));
  EXPECT_EQ(stratified_quota({90, 5, 5}, 3), (std::vector<std::size_t>{1, 1, 1}));
  auto q = stratified_quota({33, 33, 34}, 10);
  EXPECT_EQ(q[0] + q[1] + q[2], 10u);
  EXPECT_THROW(stratified_quota({5, 5, 5}, 2), DomainError);
}

TEST(Sbm, DisconnectedBlocksWhenNoCrossEdges) {
  SbmSpec s;
  s.p_out = 0.0;
  s.seed = 4;
  auto ds = generate_sbm(s);
  for (const auto& [u, v] : ds.graph.edge_list()) EXPECT_EQ(ds.labels[u], ds.labels[v]);
  std::set<std::size_t> classes(ds.labels.begin(), ds.labels.end());
  EXPECT_EQ(classes.size(), 3u);
}

TEST(Sbm, IntraFractionNearExpectation) {
  SbmSpec s;
  s.n = 300;
  s.classes = 3;
  s.p_in = 0.1;
  s.p_out = 0.01;
  // Closed form: 3 * C(100,2) * p_in over that plus 3 * 100^2 * p_out.
  const double intra = 3.0 * 4950.0 * 0.1, inter = 3.0 * 10000.0 * 0.01;
  EXPECT_NEAR(sbm_expected_intra_fraction(s), intra / (intra + inter), 1e-12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    s.seed = seed;
    auto ds = generate_sbm(s);
    std::size_t in = 0, total = 0;
    for (const auto& [u, v] : ds.graph.edge_list()) {
      in += ds.labels[u] == ds.labels[v];
      ++total;
    }
    EXPECT_NEAR(static_cast<double>(in) / total, sbm_expected_intra_fraction(s), 0.05);
  }
}

TEST(Sbm, NoiselessFeaturesAreCentroidSeparable) {
  SbmSpec s;
  s.feature_noise = 0.0;
  auto ds = generate_sbm(s);
  std::vector<std::vector<double>> centroid(s.classes, std::vector<double>(s.d0, 0.0));
  std::vector<double> count(s.classes, 0.0);
  for (std::size_t i = 0; i < ds.n_nodes(); ++i) {
    count[ds.labels[i]] += 1.0;
    for (std::size_t k = 0; k < s.d0; ++k) centroid[ds.labels[i]][k] += ds.features(i, k);
  }
  for (std::size_t c = 0; c < s.classes; ++c)
    for (double& v : centroid[c]) v /= count[c];
  for (std::size_t i = 0; i < ds.n_nodes(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < s.classes; ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < s.d0; ++k)
        d += (ds.features(i, k) - centroid[c][k]) * (ds.features(i, k) - centroid[c][k]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    EXPECT_EQ(best, ds.labels[i]);
  }
}

TEST(Sbm, InvalidProbabilities) {
  SbmSpec s;
  s.p_in = 1.5;
  EXPECT_THROW(generate_sbm(s), DomainError);
  s.p_in = 0.01;
  s.p_out = 0.1;
  EXPECT_THROW(generate_sbm(s), DomainError);
}

TEST(Features, RowL1Normalize) {
  DenseMatrix f(2, 3, {1.0, -3.0, 0.0, 0.0, 0.0, 0.0});
  row_l1_normalize(f);
  EXPECT_DOUBLE_EQ(f(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(f(0, 1), -0.75);
  EXPECT_EQ(f(1, 2), 0.0);
}
