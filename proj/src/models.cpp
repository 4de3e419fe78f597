#include "fedmpa/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "fedmpa/error.hpp"
#include "fedmpa/kernels.hpp"

namespace fedmpa {

void DiffusionConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("diffusion alpha must lie in (0, 1]");
}

void MpaeConfig::validate() const {
  if (!(beta >= 0.0) || !(gamma >= 0.0)) throw DomainError("beta and gamma must be non-negative");
  if (!(a >= 0.0) || !(b >= 0.0)) throw DomainError("a and b must be non-negative");
}

DenseMatrix diffuse(const SparseGraph& a_norm, const DenseMatrix& r0, const DiffusionConfig& cfg) {
  cfg.validate();
  if (a_norm.n_nodes() != r0.rows()) {
    throw ShapeError("diffuse: graph has " + std::to_string(a_norm.n_nodes()) +
                     " nodes, representation has " + std::to_string(r0.rows()) + " rows");
  }
  DenseMatrix r = r0;
  for (std::size_t k = 0; k < cfg.k_steps; ++k)
    r = kernels::axpby(1.0 - cfg.alpha, kernels::spmm(a_norm, r), cfg.alpha, r0);
  return r;
}

std::vector<DenseMatrix> diffuse_trace(const SparseGraph& a_norm, const DenseMatrix& r0,
                                       const DiffusionConfig& cfg) {
  cfg.validate();
  if (a_norm.n_nodes() != r0.rows()) throw ShapeError("diffuse_trace: shape mismatch");
  std::vector<DenseMatrix> trace{r0};
  trace.reserve(cfg.k_steps + 1);
  for (std::size_t k = 0; k < cfg.k_steps; ++k)
    trace.push_back(
        kernels::axpby(1.0 - cfg.alpha, kernels::spmm(a_norm, trace.back()), cfg.alpha, r0));
  return trace;
}

DenseMatrix diffuse_backward(const SparseGraph& a_norm, const DenseMatrix& grad_out,
                             const DiffusionConfig& cfg) {
  return diffuse(a_norm, grad_out, cfg);
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

DenseMatrix decode_adjacency(const DenseMatrix& z) {
  DenseMatrix s = kernels::matmul_nt(z, z);
  for (double& v : s.values()) v = sigmoid(v);
  return s;
}

DenseMatrix dense_binary_adjacency(const SparseGraph& g) {
  DenseMatrix a(g.n_nodes(), g.n_nodes());
  for (std::size_t i = 0; i < g.n_nodes(); ++i)
    for (auto j : g.neighbors(i))
      if (j != i) a(i, j) = 1.0;
  return a;
}

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw DomainError("inverse_softplus: argument must be positive");
  return y + std::log(-std::expm1(-y));
}

LearnedStructure::LearnedStructure(const SparseGraph& base_norm, bool super_node)
    : n_local_(base_norm.n_nodes()) {
  const std::size_t n = n_local_;
  const std::size_t total = super_node ? n + 1 : n;
  const double super_init = n > 0 ? 1.0 / static_cast<double>(n) : 1.0;

  std::vector<std::size_t> offsets(total + 1, 0);
  std::vector<std::size_t> cols;
  std::vector<double> init;
  for (std::size_t i = 0; i < n; ++i) {
    auto nb = base_norm.neighbors(i);
    auto w = base_norm.row_values(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      cols.push_back(nb[k]);
      init.push_back(w[k]);
    }
    if (super_node) {
      cols.push_back(n);
      init.push_back(super_init);
    }
    offsets[i + 1] = cols.size();
  }
  if (super_node) {
    for (std::size_t j = 0; j <= n; ++j) {
      cols.push_back(j);
      init.push_back(j == n ? 1.0 : super_init);
    }
    offsets[n + 1] = cols.size();
  }
  pattern_ = SparseGraph(total, std::move(offsets), std::move(cols),
                         std::vector<double>(init.size(), 1.0));
  if (!pattern_.is_symmetric()) {
    throw StructuralError("LearnedStructure: base graph is not symmetric");
  }

  param_of_.assign(pattern_.n_entries(), 0);
  const auto off = pattern_.row_offsets();
  const auto col = pattern_.col_indices();
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t e = off[i]; e < off[i + 1]; ++e) {
      const std::size_t j = col[e];
      if (i <= j) {
        param_of_[e] = logits_.size();
        logits_.push_back(inverse_softplus(init[e]));
      } else {
        auto row = pattern_.neighbors(j);
        const auto pos = static_cast<std::size_t>(
            std::lower_bound(row.begin(), row.end(), i) - row.begin());
        param_of_[e] = param_of_[off[j] + pos];
      }
    }
  }
}

SparseGraph LearnedStructure::weights() const {
  std::vector<double> vals(pattern_.n_entries());
  for (std::size_t e = 0; e < vals.size(); ++e) vals[e] = softplus(logits_[param_of_[e]]);
  return SparseGraph(pattern_.n_nodes(),
                     {pattern_.row_offsets().begin(), pattern_.row_offsets().end()},
                     {pattern_.col_indices().begin(), pattern_.col_indices().end()},
                     std::move(vals));
}

namespace {

std::vector<double> row_sums(const SparseGraph& g) {
  std::vector<double> d(g.n_nodes(), 0.0);
  for (std::size_t i = 0; i < g.n_nodes(); ++i)
    for (double v : g.row_values(i)) d[i] += v;
  return d;
}

}  // namespace

SparseGraph LearnedStructure::normalized() const {
  const SparseGraph w = weights();
  const auto d = row_sums(w);
  std::vector<double> vals(w.values().begin(), w.values().end());
  const auto off = w.row_offsets();
  const auto col = w.col_indices();
  for (std::size_t i = 0; i < w.n_nodes(); ++i)
    for (std::size_t e = off[i]; e < off[i + 1]; ++e)
      vals[e] /= std::sqrt(d[i] * d[col[e]]);
  return SparseGraph(w.n_nodes(), {off.begin(), off.end()}, {col.begin(), col.end()},
                     std::move(vals));
}

std::vector<double> LearnedStructure::backward(std::span<const double> grad_entries) const {
  if (grad_entries.size() != pattern_.n_entries()) {
    throw ShapeError("LearnedStructure::backward: gradient length mismatch");
  }
  const SparseGraph w = weights();
  const auto d = row_sums(w);
  const auto off = w.row_offsets();
  const auto col = w.col_indices();
  const auto wv = w.values();

  // d(loss)/d(degree)
  std::vector<double> dd(w.n_nodes(), 0.0);
  for (std::size_t i = 0; i < w.n_nodes(); ++i) {
    for (std::size_t e = off[i]; e < off[i + 1]; ++e) {
      const std::size_t j = col[e];
      const double s = wv[e] / std::sqrt(d[i] * d[j]);
      const double c = -0.5 * grad_entries[e] * s;
      dd[i] += c / d[i];
      dd[j] += c / d[j];
    }
  }
  std::vector<double> g(logits_.size(), 0.0);
  for (std::size_t i = 0; i < w.n_nodes(); ++i) {
    for (std::size_t e = off[i]; e < off[i + 1]; ++e) {
      const double gw = grad_entries[e] / std::sqrt(d[i] * d[col[e]]) + dd[i];
      g[param_of_[e]] += gw;
    }
  }
  for (std::size_t p = 0; p < g.size(); ++p) g[p] *= sigmoid(logits_[p]);
  return g;
}

void LearnedStructure::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  const SparseGraph w = weights();
  for (std::size_t i = 0; i < w.n_nodes(); ++i) {
    auto nb = w.neighbors(i);
    auto vals = w.row_values(i);
    for (std::size_t k = 0; k < nb.size(); ++k)
      if (nb[k] >= i) out << i << '\t' << nb[k] << '\t' << vals[k] << '\n';
  }
}

namespace {

// R0 with the super-node row (mean of local rows) appended.
DenseMatrix append_super_row(const DenseMatrix& r0) {
  DenseMatrix ext(r0.rows() + 1, r0.cols());
  std::copy(r0.values().begin(), r0.values().end(), ext.values().begin());
  auto last = ext.row(r0.rows());
  for (std::size_t i = 0; i < r0.rows(); ++i) {
    auto row = r0.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) last[c] += row[c];
  }
  if (r0.rows() > 0)
    for (double& v : last) v /= static_cast<double>(r0.rows());
  return ext;
}

DenseMatrix top_rows(const DenseMatrix& m, std::size_t n) {
  DenseMatrix out(n, m.cols());
  std::copy_n(m.values().begin(), n * m.cols(), out.values().begin());
  return out;
}

double rms(const DenseMatrix& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

// Gradient of scale * rms(x) with respect to x.
DenseMatrix rms_grad(const DenseMatrix& x, double value, double scale) {
  DenseMatrix g(x.rows(), x.cols());
  if (value <= 0.0) return g;
  const double k = scale / (static_cast<double>(x.size()) * value);
  auto xv = x.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < xv.size(); ++i) gv[i] = k * xv[i];
  return g;
}

// Backward through Z -> sigmoid(Z Z^T) given d(loss)/d(A_bar).
DenseMatrix decoder_backward(const DenseMatrix& z, const DenseMatrix& a_bar,
                             const DenseMatrix& grad_a_bar) {
  const std::size_t n = z.rows();
  DenseMatrix gs(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double p_ij = a_bar(i, j), p_ji = a_bar(j, i);
      gs(i, j) = grad_a_bar(i, j) * p_ij * (1.0 - p_ij) + grad_a_bar(j, i) * p_ji * (1.0 - p_ji);
    }
  return kernels::matmul(gs, z);
}

DenseMatrix softmax_backward(const DenseMatrix& p, const DenseMatrix& grad_p) {
  DenseMatrix g(p.rows(), p.cols());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto pr = p.row(r);
    auto gr = grad_p.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < pr.size(); ++c) dot += gr[c] * pr[c];
    auto out = g.row(r);
    for (std::size_t c = 0; c < pr.size(); ++c) out[c] = pr[c] * (gr[c] - dot);
  }
  return g;
}

struct SampledRecon {
  double loss = 0.0;
  DenseMatrix grad_z;
};

// Reconstruction over every directed edge plus as many random non-edges.
SampledRecon sampled_recon(const DenseMatrix& z, const SparseGraph& adjacency, double scale,
                           Rng& rng) {
  const std::size_t n = z.rows();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> target;
  for (std::size_t i = 0; i < n; ++i)
    for (auto j : adjacency.neighbors(i))
      if (j != i) {
        pairs.emplace_back(i, j);
        target.push_back(1.0);
      }
  const std::size_t n_pos = pairs.size();
  for (std::size_t k = 0; k < n_pos; ++k) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const auto u = static_cast<std::size_t>(rng() % n);
      const auto v = static_cast<std::size_t>(rng() % n);
      if (u == v || adjacency.has_entry(u, v)) continue;
      pairs.emplace_back(u, v);
      target.push_back(0.0);
      break;
    }
  }
  SampledRecon res{0.0, DenseMatrix(n, z.cols())};
  if (pairs.empty()) return res;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    auto [u, v] = pairs[k];
    auto zu = z.row(u);
    auto zv = z.row(v);
    double s = 0.0;
    for (std::size_t c = 0; c < zu.size(); ++c) s += zu[c] * zv[c];
    const double p = sigmoid(s);
    const double d = p - target[k];
    res.loss += d * d * inv;
    const double g = scale * 2.0 * d * inv * p * (1.0 - p);
    auto gu = res.grad_z.row(u);
    auto gv = res.grad_z.row(v);
    for (std::size_t c = 0; c < zu.size(); ++c) {
      gu[c] += g * zv[c];
      gv[c] += g * zu[c];
    }
  }
  return res;
}

}  // namespace

HeadLoss mpae_loss(const MlpParams& params, const ClientState& client, const DiffusionConfig& dcfg,
                   const MpaeConfig& mcfg, const LearnedStructure* structure, Rng& rng,
                   double dropout) {
  const std::size_t n = client.n_nodes();
  const bool learnable = mcfg.recon_mode == MpaeConfig::Recon::LearnableStructure;
  if (learnable && (!structure || structure->n_local() != n)) {
    throw ContractError("mpae_loss: learnable mode needs a structure for this client");
  }

  auto fwd = mlp_forward(params, client.features, dropout,
                         dropout > 0.0 ? Mode::Train : Mode::Eval, rng);
  const DenseMatrix& r0 = fwd.logits;

  SparseGraph s_norm;
  std::vector<DenseMatrix> trace;
  DenseMatrix rk;
  if (learnable) {
    s_norm = structure->normalized();
    trace = diffuse_trace(s_norm, structure->has_super_node() ? append_super_row(r0) : r0, dcfg);
    rk = top_rows(trace.back(), n);
  } else {
    rk = diffuse(client.norm_adj, r0, dcfg);
  }

  HeadLoss out;
  DenseMatrix g_rk(rk.rows(), rk.cols());
  if (mcfg.beta > 0.0 && !client.train.empty()) {
    auto ce = softmax_ce_loss(rk, client.labels, client.train);
    out.ce = ce.loss;
    out.loss += mcfg.beta * ce.loss;
    if (mcfg.beta == 1.0) {
      g_rk = std::move(ce.grad);
    } else {
      for (double& v : ce.grad.values()) v *= mcfg.beta;
      g_rk = std::move(ce.grad);
    }
  }

  DenseMatrix g_check;  // d(loss)/d(A_check), learnable mode only
  if (mcfg.gamma > 0.0) {
    const bool post = mcfg.decoder_input == MpaeConfig::DecoderInput::PostSoftmax;
    const DenseMatrix z = post ? softmax_rows(rk) : rk;
    DenseMatrix g_z;
    if (learnable) {
      const DenseMatrix a = dense_binary_adjacency(client.adjacency);
      DenseMatrix a_check(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        auto nb = s_norm.neighbors(i);
        auto vals = s_norm.row_values(i);
        for (std::size_t k = 0; k < nb.size(); ++k)
          if (nb[k] < n) a_check(i, nb[k]) = vals[k];
      }
      const DenseMatrix a_bar = decode_adjacency(z);
      const DenseMatrix d1 = kernels::axpby(1.0, a_check, -1.0, a);      // A_check - A
      const DenseMatrix d2 = kernels::axpby(1.0, a_check, -1.0, a_bar);  // A_check - A_bar
      const double t1 = rms(d1), t2 = rms(d2);
      out.recon = mcfg.a * t1 + mcfg.b * t2;
      out.recon_bound = rms(kernels::axpby(1.0, a, -1.0, a_bar));
      const DenseMatrix g1 = rms_grad(d1, t1, mcfg.gamma * mcfg.a);
      const DenseMatrix g2 = rms_grad(d2, t2, mcfg.gamma * mcfg.b);
      g_check = kernels::axpby(1.0, g1, 1.0, g2);
      DenseMatrix g_bar = g2;
      for (double& v : g_bar.values()) v = -v;
      g_z = decoder_backward(z, a_bar, g_bar);
    } else if (n <= mcfg.dense_recon_max_nodes) {
      const DenseMatrix a = dense_binary_adjacency(client.adjacency);
      const DenseMatrix a_bar = decode_adjacency(z);
      auto mse = mse_matrix(a, a_bar);
      out.recon = mse.loss;
      out.recon_bound = std::sqrt(mse.loss);
      for (double& v : mse.grad.values()) v *= mcfg.gamma;
      g_z = decoder_backward(z, a_bar, mse.grad);
    } else {
      auto sr = sampled_recon(z, client.adjacency, mcfg.gamma, rng);
      out.recon = sr.loss;
      out.recon_bound = std::sqrt(sr.loss);
      g_z = std::move(sr.grad_z);
    }
    out.loss += mcfg.gamma * out.recon;
    if (post) g_z = softmax_backward(z, g_z);
    g_rk = kernels::axpby(1.0, g_rk, 1.0, g_z);
  }

  DenseMatrix g_r0;
  if (learnable) {
    const std::size_t n_total = s_norm.n_nodes();
    const double alpha = dcfg.alpha;
    DenseMatrix g(n_total, rk.cols());
    std::copy(g_rk.values().begin(), g_rk.values().end(), g.values().begin());
    std::vector<double> g_entries(s_norm.n_entries(), 0.0);
    const auto off = s_norm.row_offsets();
    const auto col = s_norm.col_indices();
    DenseMatrix g_r0_ext(n_total, rk.cols());
    for (std::size_t k = dcfg.k_steps; k >= 1; --k) {
      const DenseMatrix& prev = trace[k - 1];
      for (std::size_t i = 0; i < n_total; ++i) {
        auto gi = g.row(i);
        for (std::size_t e = off[i]; e < off[i + 1]; ++e) {
          auto pj = prev.row(col[e]);
          double acc = 0.0;
          for (std::size_t c = 0; c < gi.size(); ++c) acc += gi[c] * pj[c];
          g_entries[e] += (1.0 - alpha) * acc;
        }
      }
      g_r0_ext = kernels::axpby(1.0, g_r0_ext, alpha, g);
      g = kernels::spmm(s_norm, g);
      for (double& v : g.values()) v *= (1.0 - alpha);
    }
    g_r0_ext = kernels::axpby(1.0, g_r0_ext, 1.0, g);
    if (!g_check.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = off[i]; e < off[i + 1]; ++e)
          if (col[e] < n) g_entries[e] += g_check(i, col[e]);
    }
    g_r0 = top_rows(g_r0_ext, n);
    if (structure->has_super_node() && n > 0) {
      auto sup = g_r0_ext.row(n);
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto row = g_r0.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += sup[c] * inv;
      }
    }
    out.structure_grads = structure->backward(g_entries);
  } else {
    g_r0 = diffuse_backward(client.norm_adj, g_rk, dcfg);
  }
  out.grads = backward(params, fwd.tape, g_r0);
  return out;
}

DenseMatrix predict_diffused(const MlpParams& params, const ClientState& client,
                             const DiffusionConfig& dcfg, const LearnedStructure* structure) {
  Rng unused(0);
  auto fwd = mlp_forward(params, client.features, 0.0, Mode::Eval, unused);
  if (structure) {
    const SparseGraph s = structure->normalized();
    const DenseMatrix ext =
        structure->has_super_node() ? append_super_row(fwd.logits) : fwd.logits;
    return top_rows(diffuse(s, ext, dcfg), client.n_nodes());
  }
  return diffuse(client.norm_adj, fwd.logits, dcfg);
}

namespace {

EvalCounts evaluate_head(const MlpParams& params, const ClientState& client,
                         const DiffusionConfig& dcfg, const LearnedStructure* structure) {
  const DenseMatrix logits = predict_diffused(params, client, dcfg, structure);
  EvalCounts e;
  e.val_total = client.val.size();
  e.test_total = client.test.size();
  e.val_correct = count_correct(logits, client.labels, client.val);
  e.test_correct = count_correct(logits, client.labels, client.test);
  return e;
}

HeadResult train_head(ClientState& client, const MlpParams& w0, const DiffusionConfig& dcfg,
                      const MpaeConfig& mcfg, const TrainConfig& tcfg) {
  dcfg.validate();
  mcfg.validate();
  tcfg.validate();
  if (w0.dims().front() != client.features.cols()) {
    throw ShapeError("head training: parameters do not match client features");
  }
  const bool learnable = mcfg.recon_mode == MpaeConfig::Recon::LearnableStructure;
  if (learnable && client.n_nodes() > mcfg.structure_max_nodes) {
    throw CapacityError("learnable structure: client " + std::to_string(client.client_id) +
                        " has " + std::to_string(client.n_nodes()) + " nodes, budget is " +
                        std::to_string(mcfg.structure_max_nodes));
  }
  const double dropout = tcfg.head_dropout ? tcfg.dropout : 0.0;
  const bool has_ce = mcfg.beta > 0.0 && !client.train.empty();
  const bool has_recon = mcfg.gamma > 0.0;

  HeadResult res;
  MlpParams params = w0;
  Optimizer opt(tcfg.optimizer);
  std::optional<LearnedStructure> structure;
  Optimizer structure_opt(tcfg.optimizer);
  if (learnable) structure.emplace(client.norm_adj, mcfg.super_node);
  const LearnedStructure* sp = structure ? &*structure : nullptr;

  {
    Rng probe(0);
    const HeadLoss l0 = mpae_loss(params, client, dcfg, mcfg, sp, probe, 0.0);
    res.counts = evaluate_head(params, client, dcfg, sp);
    res.history.push_back({0, l0.loss, l0.ce, l0.recon, l0.recon_bound, res.counts.val_accuracy()});
  }
  res.params = params;
  res.structure = structure;
  if (!has_ce && !has_recon) {
    res.final_params = params;
    return res;
  }

  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    HeadLoss l = mpae_loss(params, client, dcfg, mcfg, sp, client.rng, dropout);
    if (!std::isfinite(l.loss)) {
      throw NumericError("head training diverged at epoch " + std::to_string(epoch) +
                         " on client " + std::to_string(client.client_id));
    }
    opt.step(params, l.grads);
    if (structure) structure_opt.step(structure->logits(), l.structure_grads);
    const EvalCounts counts = evaluate_head(params, client, dcfg, sp);
    res.history.push_back({epoch, l.loss, l.ce, l.recon, l.recon_bound, counts.val_accuracy()});
    res.epochs_run = epoch;

    if (counts.val_total == 0 || counts.val_accuracy() > res.counts.val_accuracy()) {
      res.counts = counts;
      res.params = params;
      res.structure = structure;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (tcfg.patience > 0 && ++since_best >= tcfg.patience) {
      break;
    }
  }
  res.final_params = params;
  return res;
}

}  // namespace

HeadResult fedmpa_train(ClientState& client, const MlpParams& w0, const DiffusionConfig& dcfg,
                        const TrainConfig& tcfg) {
  MpaeConfig plain;
  plain.beta = 1.0;
  plain.gamma = 0.0;
  return train_head(client, w0, dcfg, plain, tcfg);
}

HeadResult fedmpae_train(ClientState& client, const MlpParams& w0, const DiffusionConfig& dcfg,
                         const MpaeConfig& mcfg, const TrainConfig& tcfg) {
  return train_head(client, w0, dcfg, mcfg, tcfg);
}

LocResult loc_variants(ClientState& client, LocVariant variant, const MlpParams& init,
                       const DiffusionConfig& dcfg, const MpaeConfig& mcfg,
                       const TrainConfig& tcfg) {
  tcfg.validate();
  if (client.train.empty()) {
    throw DomainError("local training on client " + std::to_string(client.client_id) +
                      ": empty training mask");
  }
  client.params = init;
  client.optimizer = Optimizer(tcfg.optimizer);

  LocResult out;
  HeadResult mlp_head;
  mlp_head.params = client.params;
  mlp_head.counts = evaluate_mlp(client.params, client);
  double best_val = -1.0;
  for (std::size_t r = 1; r <= tcfg.rounds; ++r) {
    for (std::size_t e = 0; e < tcfg.local_epochs; ++e) local_mlp_epoch(client, tcfg);
    const EvalCounts counts = evaluate_mlp(client.params, client);
    if (counts.val_accuracy() > best_val) {
      best_val = counts.val_accuracy();
      mlp_head.params = client.params;
      mlp_head.counts = counts;
      mlp_head.best_epoch = r;
    }
    mlp_head.epochs_run = r;
  }
  mlp_head.final_params = client.params;
  out.mlp_params = client.params;

  switch (variant) {
    case LocVariant::Mlp:
      out.head = std::move(mlp_head);
      break;
    case LocVariant::Mpa:
      out.head = fedmpa_train(client, out.mlp_params, dcfg, tcfg);
      break;
    case LocVariant::Mpae:
      out.head = fedmpae_train(client, out.mlp_params, dcfg, mcfg, tcfg);
      break;
  }
  return out;
}

}  // namespace fedmpa
