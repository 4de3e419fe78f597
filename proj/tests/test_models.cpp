#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fedmpa/error.hpp"
#include "fedmpa/kernels.hpp"
#include "fedmpa/models.hpp"
#include "oracles.hpp"

using namespace fedmpa;

namespace {

DiffusionConfig dcfg(double alpha, std::size_t k) {
  DiffusionConfig c;
  c.alpha = alpha;
  c.k_steps = k;
  return c;
}

ClientState client_from(const Dataset& ds, std::vector<std::size_t> train,
                        std::vector<std::size_t> val, std::vector<std::size_t> test,
                        const TrainConfig& cfg) {
  auto params = initial_params(mlp_dims(ds.features.cols(), cfg.hidden_dim, cfg.n_hidden,
                                        ds.n_classes),
                               cfg.seed);
  return make_client(0, ds.graph, ds.features, ds.labels, std::move(train), std::move(val),
                     std::move(test), std::move(params), cfg.optimizer,
                     client_stream_seed(cfg.seed, 0));
}

TrainConfig small_cfg(std::uint64_t seed) {
  TrainConfig c;
  c.hidden_dim = 8;
  c.n_hidden = 2;
  c.epochs = 30;
  c.patience = 0;
  c.rounds = 4;
  c.seed = seed;
  return c;
}

Dataset small_sbm(std::uint64_t seed, std::size_t n = 40, double noise = 1.0) {
  SbmSpec s;
  s.n = n;
  s.classes = 2;
  s.p_in = 0.4;
  s.p_out = 0.03;
  s.d0 = 5;
  s.feature_noise = noise;
  s.seed = seed;
  return generate_sbm(s);
}

void split_every(std::size_t n, std::size_t stride, std::vector<std::size_t>& train,
                 std::vector<std::size_t>& val, std::vector<std::size_t>& test) {
  for (std::size_t i = 0; i < n; ++i) {
    if (i % stride == 0) {
      train.push_back(i);
    } else if (i % 2 == 0) {
      val.push_back(i);
    } else {
      test.push_back(i);
    }
  }
}

}  // namespace

TEST(Diffuse, TeleportOneIsIdentity) {
  auto g = normalize_sym_selfloop(oracle::random_graph(12, 0.3, 1));
  auto r0 = oracle::random_matrix(12, 3, 2);
  EXPECT_EQ(diffuse(g, r0, dcfg(1.0, 7)), r0);
  EXPECT_EQ(diffuse(g, r0, dcfg(0.1, 0)), r0);
}

TEST(Diffuse, IsolatedNodeIsFixed) {
  auto g = normalize_sym_selfloop(SparseGraph::from_edges(1, {}));
  auto r0 = oracle::random_matrix(1, 4, 3);
  for (double alpha : {0.1, 0.5, 0.9})
    EXPECT_LT(oracle::max_abs_diff(oracle::from(r0), diffuse(g, r0, dcfg(alpha, 13))), 1e-15);
}

TEST(Diffuse, PathMatchesPowerSeries) {
  std::vector<Edge> e{{0, 1}, {1, 2}};
  auto g = normalize_sym_selfloop(SparseGraph::from_edges(3, e));
  auto r0 = DenseMatrix::identity(3);
  auto want = oracle::ppr_partial_sum(oracle::dense(g), oracle::from(r0), 0.1, 10);
  EXPECT_LT(oracle::max_abs_diff(want, diffuse(g, r0, dcfg(0.1, 10))), 1e-14);
}

TEST(Diffuse, FixedPointAtFiftySteps) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto g = normalize_sym_selfloop(oracle::random_graph(20 + 6 * seed, 0.2, seed));
    auto r0 = oracle::random_matrix(g.n_nodes(), 3, seed + 10);
    auto want = oracle::ppr_fixed_point(oracle::dense(g), oracle::from(r0), 0.1);
    EXPECT_LT(oracle::max_abs_diff(want, diffuse(g, r0, dcfg(0.1, 50))), 1e-6);
  }
}

TEST(Diffuse, Linear) {
  auto g = normalize_sym_selfloop(oracle::random_graph(15, 0.3, 4));
  auto r1 = oracle::random_matrix(15, 2, 5), r2 = oracle::random_matrix(15, 2, 6);
  auto lhs = diffuse(g, kernels::axpby(0.7, r1, -1.3, r2), dcfg(0.1, 10));
  auto rhs = kernels::axpby(0.7, diffuse(g, r1, dcfg(0.1, 10)), -1.3, diffuse(g, r2, dcfg(0.1, 10)));
  EXPECT_LT(oracle::max_abs_diff(oracle::from(lhs), rhs), 1e-12);
}

TEST(Diffuse, BoundedOverManySteps) {
  auto g = normalize_sym_selfloop(oracle::random_graph(30, 0.2, 7));
  auto r0 = oracle::random_matrix(30, 2, 8);
  auto r = diffuse(g, r0, dcfg(0.1, 1000));
  double n0 = 0.0, n1 = 0.0;
  for (double v : r0.values()) n0 += v * v;
  for (double v : r.values()) n1 += v * v;
  EXPECT_LE(std::sqrt(n1), std::sqrt(n0) * (1.0 + 1e-9));
  EXPECT_TRUE(r.all_finite());
}

TEST(Diffuse, TraceAndErrors) {
  auto g = normalize_sym_selfloop(oracle::random_graph(9, 0.3, 9));
  auto r0 = oracle::random_matrix(9, 2, 10);
  auto trace = diffuse_trace(g, r0, dcfg(0.2, 4));
  ASSERT_EQ(trace.size(), 5u);
  EXPECT_EQ(trace.front(), r0);
  EXPECT_EQ(trace.back(), diffuse(g, r0, dcfg(0.2, 4)));
  EXPECT_THROW(diffuse(g, DenseMatrix(8, 2), dcfg(0.1, 3)), ShapeError);
  EXPECT_THROW(diffuse(g, r0, dcfg(0.0, 3)), DomainError);
  EXPECT_THROW(diffuse(g, r0, dcfg(1.5, 3)), DomainError);
}

TEST(Decoder, Examples) {
  auto half = decode_adjacency(DenseMatrix(4, 3));
  for (double v : half.values()) EXPECT_EQ(v, 0.5);

  DenseMatrix orth(2, 2, {50.0, 0.0, 0.0, 50.0});
  auto a = decode_adjacency(orth);
  EXPECT_EQ(a(0, 1), 0.5);
  EXPECT_GT(a(0, 0), 0.999);

  auto z = oracle::random_matrix(4, 2, 11);
  auto got = decode_adjacency(z);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double s = z(i, 0) * z(j, 0) + z(i, 1) * z(j, 1);
      EXPECT_NEAR(got(i, j), 1.0 / (1.0 + std::exp(-s)), 1e-15);
    }
}

TEST(Decoder, SymmetricAndOpenUnitInterval) {
  auto z = oracle::random_matrix(25, 4, 12);
  auto a = decode_adjacency(z);
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t j = 0; j < 25; ++j) {
      EXPECT_EQ(a(i, j), a(j, i));
      EXPECT_GT(a(i, j), 0.0);
      EXPECT_LT(a(i, j), 1.0);
    }
}

TEST(FedMpa, ZeroStepsEqualsMlpFineTuning) {
  auto ds = small_sbm(1);
  auto cfg = small_cfg(1);
  std::vector<std::size_t> train, val, test;
  split_every(ds.n_nodes(), 5, train, val, test);
  auto client = client_from(ds, train, val, test, cfg);
  auto manual = client;
  const MlpParams w0 = client.params;

  auto head = fedmpa_train(client, w0, dcfg(0.1, 0), cfg);

  MlpParams p = w0;
  Optimizer opt(cfg.optimizer);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    auto f = mlp_forward(p, manual.features, cfg.dropout, Mode::Train, manual.rng);
    auto l = softmax_ce_loss(f.logits, manual.labels, manual.train);
    opt.step(p, backward(p, f.tape, l.grad));
  }
  EXPECT_EQ(head.final_params, p);
  EXPECT_EQ(head.epochs_run, cfg.epochs);
}

TEST(FedMpa, EdgelessGraphMatchesMlpFineTuning) {
  auto ds = small_sbm(2);
  ds.graph = SparseGraph::from_edges(ds.n_nodes(), {});
  auto cfg = small_cfg(2);
  std::vector<std::size_t> train, val, test;
  split_every(ds.n_nodes(), 5, train, val, test);
  auto client = client_from(ds, train, val, test, cfg);
  auto plain = client;
  auto a = fedmpa_train(client, client.params, dcfg(0.1, 10), cfg);
  auto b = fedmpa_train(plain, plain.params, dcfg(0.1, 0), cfg);
  // 0.9 x + 0.1 x may differ from x in the last bit; nothing more.
  auto fa = a.final_params.flatten(), fb = b.final_params.flatten();
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fa[i], fb[i], 1e-9);
}

TEST(FedMpa, DiffusionHelpsOnTwoClusters) {
  // 20 nodes, two homophilous clusters, noisy features, one label per class.
  auto ds = small_sbm(3, 20, 2.5);
  auto cfg = small_cfg(3);
  cfg.epochs = 100;
  std::vector<std::size_t> train{0, 10}, val{1, 2, 11, 12}, test;
  for (std::size_t i = 0; i < 20; ++i)
    if (i % 10 > 2) test.push_back(i);
  auto with = client_from(ds, train, val, test, cfg);
  auto without = with;
  auto a = fedmpa_train(with, with.params, dcfg(0.1, 10), cfg);
  auto b = fedmpa_train(without, without.params, dcfg(0.1, 0), cfg);
  EXPECT_GT(a.counts.test_accuracy(), b.counts.test_accuracy());
}

TEST(FedMpa, LabelFreeClientEvaluatedAtStart) {
  auto ds = small_sbm(4);
  auto cfg = small_cfg(4);
  auto client = client_from(ds, {}, {1, 2, 3}, {4, 5, 6}, cfg);
  auto head = fedmpa_train(client, client.params, dcfg(0.1, 10), cfg);
  EXPECT_EQ(head.epochs_run, 0u);
  EXPECT_EQ(head.params, client.params);
}

TEST(FedMpae, GammaZeroEqualsFedMpa) {
  auto ds = small_sbm(5);
  auto cfg = small_cfg(5);
  cfg.patience = 10;
  std::vector<std::size_t> train, val, test;
  split_every(ds.n_nodes(), 4, train, val, test);
  auto c1 = client_from(ds, train, val, test, cfg);
  auto c2 = c1;
  MpaeConfig m;
  m.gamma = 0.0;
  auto a = fedmpa_train(c1, c1.params, dcfg(0.1, 10), cfg);
  auto b = fedmpae_train(c2, c2.params, dcfg(0.1, 10), m, cfg);
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_EQ(a.counts.test_correct, b.counts.test_correct);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].loss, b.history[i].loss);
}

TEST(FedMpae, ReconstructionDescendsOnSixNodes) {
  auto ds = load_dataset(oracle::fixture("tiny6"));
  auto cfg = small_cfg(6);
  cfg.epochs = 200;
  cfg.dropout = 0.0;
  auto client = client_from(ds, {0, 5}, {}, {1, 2, 3, 4}, cfg);
  MpaeConfig m;
  m.beta = 0.0;
  auto head = fedmpae_train(client, client.params, dcfg(0.1, 10), m, cfg);
  ASSERT_EQ(head.history.size(), 201u);
  EXPECT_LT(head.history.back().recon, head.history.front().recon);
}

TEST(FedMpae, LearnableTriangleBoundAndSymmetry) {
  auto ds = small_sbm(7, 30);
  auto cfg = small_cfg(7);
  cfg.epochs = 25;
  std::vector<std::size_t> train, val, test;
  split_every(ds.n_nodes(), 4, train, val, test);
  auto client = client_from(ds, train, val, test, cfg);
  MpaeConfig m;
  m.recon_mode = MpaeConfig::Recon::LearnableStructure;
  auto head = fedmpae_train(client, client.params, dcfg(0.1, 10), m, cfg);
  for (const auto& rec : head.history) EXPECT_GE(rec.recon, rec.recon_bound - 1e-12);
  ASSERT_TRUE(head.structure.has_value());
  EXPECT_TRUE(head.structure->weights().is_symmetric());
  EXPECT_TRUE(head.structure->normalized().is_symmetric());
  EXPECT_EQ(head.structure->n_total(), ds.n_nodes() + 1);
  const auto weights = head.structure->weights();
  for (double w : weights.values()) EXPECT_GT(w, 0.0);
}

TEST(FedMpae, LearnableCapacityError) {
  auto ds = small_sbm(8);
  auto cfg = small_cfg(8);
  auto client = client_from(ds, {0, 1, 2, 20, 21}, {}, {}, cfg);
  MpaeConfig m;
  m.recon_mode = MpaeConfig::Recon::LearnableStructure;
  m.structure_max_nodes = 10;
  EXPECT_THROW(fedmpae_train(client, client.params, dcfg(0.1, 10), m, cfg), CapacityError);
}

TEST(LearnedStructure, InitialWeightsAndDump) {
  std::vector<Edge> e{{0, 1}, {1, 2}};
  auto norm = normalize_sym_selfloop(SparseGraph::from_edges(3, e));
  LearnedStructure st(norm, true);
  EXPECT_EQ(st.n_local(), 3u);
  EXPECT_EQ(st.n_total(), 4u);
  // 2 edges + 3 self-loops + 3 super incidences + super self-loop
  EXPECT_EQ(st.n_params(), 9u);
  auto w = st.weights();
  EXPECT_NEAR(w.at(0, 1), norm.at(0, 1), 1e-12);
  EXPECT_NEAR(w.at(1, 3), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(w.at(3, 3), 1.0, 1e-12);

  auto dir = oracle::scratch_dir("structure");
  st.write(dir / "s.tsv");
  std::ifstream in(dir / "s.tsv");
  std::size_t u, v, rows = 0;
  double wt;
  while (in >> u >> v >> wt) {
    EXPECT_LE(u, v);
    EXPECT_NEAR(wt, w.at(u, v), 1e-12);
    ++rows;
  }
  EXPECT_EQ(rows, 9u);

  LearnedStructure plain(norm, false);
  EXPECT_EQ(plain.n_total(), 3u);
  EXPECT_FALSE(plain.has_super_node());
}

TEST(Softplus, InverseRoundTrip) {
  for (double y : {1e-6, 0.1, 1.0, 5.0, 40.0}) EXPECT_NEAR(softplus(inverse_softplus(y)), y, 1e-12 * std::max(1.0, y));
  EXPECT_THROW(inverse_softplus(0.0), DomainError);
}

TEST(LocVariants, SingleClientLocMpaEqualsFedMpa) {
  auto ds = small_sbm(9, 60);
  auto cfg = small_cfg(9);
  cfg.patience = 10;
  auto part = partition_louvain_balanced(ds.graph, 1, 0);
  SplitSpec sp;
  sp.train_frac = 0.05;
  sp.seed = 9;
  auto masks = make_splits(ds, sp);
  auto fed_clients = build_clients(ds, part, masks, cfg);
  auto loc_clients = fed_clients;
  const MlpParams init = fed_clients[0].params;

  auto fed = run_fedmlp(fed_clients, init, FedConfig{}, cfg);
  auto fed_head = fedmpa_train(fed_clients[0], fed.final_params, DiffusionConfig{}, cfg);
  auto loc = loc_variants(loc_clients[0], LocVariant::Mpa, init, DiffusionConfig{}, MpaeConfig{}, cfg);

  EXPECT_EQ(loc.mlp_params, fed.final_params);
  EXPECT_EQ(loc.head.final_params, fed_head.final_params);
  EXPECT_EQ(loc.head.params, fed_head.params);
  EXPECT_EQ(loc.head.counts.test_correct, fed_head.counts.test_correct);
}

TEST(LocVariants, LabelFreeClientRejected) {
  auto ds = small_sbm(10);
  auto cfg = small_cfg(10);
  auto client = client_from(ds, {}, {1, 2}, {3, 4}, cfg);
  EXPECT_THROW(loc_variants(client, LocVariant::Mlp, client.params, DiffusionConfig{}, MpaeConfig{}, cfg),
               DomainError);
}
