#include "fedmpa/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "fedmpa/error.hpp"
#include "fedmpa/kernels.hpp"

namespace fedmpa {

double standard_normal(Rng& rng) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

MlpParams::MlpParams(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ShapeError("MlpParams: need at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    layers_.push_back({DenseMatrix(dims_[l], dims_[l + 1]),
                       std::vector<double>(dims_[l + 1], 0.0)});
  }
}

MlpParams MlpParams::glorot(std::vector<std::size_t> dims, std::uint64_t seed) {
  MlpParams p(std::move(dims));
  Rng rng(seed);
  for (auto& l : p.layers_) {
    const double fan = static_cast<double>(l.weight.rows() + l.weight.cols());
    const double limit = std::sqrt(6.0 / fan);
    for (double& w : l.weight.values()) w = (2.0 * uniform01(rng) - 1.0) * limit;
  }
  return p;
}

std::size_t MlpParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for_each_buffer([&](std::span<const double> b) { out.insert(out.end(), b.begin(), b.end()); });
  return out;
}

void MlpParams::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("unflatten: got " + std::to_string(flat.size()) + " values, need " +
                     std::to_string(parameter_count()));
  }
  std::size_t off = 0;
  for_each_buffer([&](std::span<double> b) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), b.size(), b.begin());
    off += b.size();
  });
}

std::vector<std::size_t> mlp_dims(std::size_t d0, std::size_t hidden, std::size_t n_hidden,
                                  std::size_t n_classes) {
  std::vector<std::size_t> dims{d0};
  for (std::size_t i = 0; i < n_hidden; ++i) dims.push_back(hidden);
  dims.push_back(n_classes);
  return dims;
}

namespace {

// Applies inverted dropout in place and returns the mask of scales.
DenseMatrix apply_dropout(DenseMatrix& h, double p, Rng& rng) {
  DenseMatrix mask(h.rows(), h.cols());
  const double scale = 1.0 / (1.0 - p);
  auto hv = h.values();
  auto mv = mask.values();
  for (std::size_t k = 0; k < hv.size(); ++k) {
    mv[k] = uniform01(rng) < p ? 0.0 : scale;
    hv[k] *= mv[k];
  }
  return mask;
}

void add_bias(DenseMatrix& z, const std::vector<double>& bias) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

}  // namespace

ForwardResult mlp_forward(const MlpParams& params, const DenseMatrix& x, double dropout,
                          Mode mode, Rng& rng) {
  if (params.n_layers() == 0) throw ShapeError("mlp_forward: empty network");
  if (x.cols() != params.dims().front()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(x.cols()) +
                     " features, network expects " + std::to_string(params.dims().front()));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw DomainError("mlp_forward: dropout must be in [0, 1)");
  }
  const bool drop = mode == Mode::Train && dropout > 0.0;

  ForwardResult out;
  auto& tape = out.tape;
  tape.params = &params;
  tape.revision = params.revision();

  DenseMatrix h = x;
  const std::size_t n_layers = params.n_layers();
  for (std::size_t l = 0; l < n_layers; ++l) {
    tape.masks.push_back(drop ? apply_dropout(h, dropout, rng) : DenseMatrix());
    const Layer& layer = params.layer(l);
    DenseMatrix z = kernels::matmul(h, layer.weight);
    add_bias(z, layer.bias);
    tape.inputs.push_back(std::move(h));
    if (l + 1 == n_layers) {
      out.logits = std::move(z);
      break;
    }
    h = z;
    for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
    tape.preacts.push_back(std::move(z));
  }
  out.logits.check_finite("mlp_forward");
  return out;
}

MlpParams backward(const MlpParams& params, const ForwardTape& tape,
                   const DenseMatrix& grad_logits) {
  if (tape.params != &params || tape.revision != params.revision()) {
    throw ContractError("backward: tape was recorded against different or since-modified parameters");
  }
  const std::size_t n_layers = params.n_layers();
  if (tape.inputs.size() != n_layers) throw ContractError("backward: incomplete tape");
  if (grad_logits.rows() != tape.inputs.front().rows() ||
      grad_logits.cols() != params.dims().back()) {
    throw ShapeError("backward: upstream gradient shape does not match logits");
  }

  MlpParams grads(params.dims());
  DenseMatrix g = grad_logits;
  for (std::size_t l = n_layers; l-- > 0;) {
    Layer& gl = grads.mutable_layer(l);
    gl.weight = kernels::matmul_tn(tape.inputs[l], g);
    std::fill(gl.bias.begin(), gl.bias.end(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto row = g.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) gl.bias[c] += row[c];
    }
    if (l == 0) break;
    DenseMatrix gh = kernels::matmul_nt(g, params.layer(l).weight);
    const DenseMatrix& mask = tape.masks[l];
    const DenseMatrix& pre = tape.preacts[l - 1];
    auto ghv = gh.values();
    auto prev = pre.values();
    for (std::size_t k = 0; k < ghv.size(); ++k) {
      if (!mask.empty()) ghv[k] *= mask.values()[k];
      if (!(prev[k] > 0.0)) ghv[k] = 0.0;
    }
    g = std::move(gh);
  }
  return grads;
}

DenseMatrix softmax_rows(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

LossResult softmax_ce_loss(const DenseMatrix& logits, std::span<const std::size_t> labels,
                           std::span<const std::size_t> mask) {
  if (mask.empty()) throw DomainError("softmax_ce_loss: empty training mask");
  if (labels.size() != logits.rows()) {
    throw ShapeError("softmax_ce_loss: labels length != logits rows");
  }
  LossResult res{0.0, DenseMatrix(logits.rows(), logits.cols())};
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (std::size_t i : mask) {
    if (i >= logits.rows()) throw DomainError("softmax_ce_loss: mask row out of range");
    const std::size_t y = labels[i];
    if (y >= logits.cols()) {
      throw DomainError("softmax_ce_loss: label " + std::to_string(y) + " out of range");
    }
    auto in = logits.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double v : in) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    res.loss += (log_z - in[y]) * inv;
    auto g = res.grad.row(i);
    for (std::size_t c = 0; c < in.size(); ++c) g[c] = std::exp(in[c] - log_z) * inv;
    g[y] -= inv;
  }
  if (!std::isfinite(res.loss)) throw NumericError("softmax_ce_loss: non-finite loss");
  return res;
}

LossResult mse_matrix(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "mse_matrix");
  LossResult res{0.0, DenseMatrix(b.rows(), b.cols())};
  if (a.empty()) return res;
  const double inv = 1.0 / static_cast<double>(a.size());
  auto av = a.values();
  auto bv = b.values();
  auto gv = res.grad.values();
  for (std::size_t k = 0; k < av.size(); ++k) {
    const double d = bv[k] - av[k];
    res.loss += d * d;
    gv[k] = 2.0 * d * inv;
  }
  res.loss *= inv;
  if (!std::isfinite(res.loss)) throw NumericError("mse_matrix: non-finite loss");
  return res;
}

std::vector<std::size_t> argmax_rows(const DenseMatrix& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::size_t count_correct(const DenseMatrix& logits, std::span<const std::size_t> labels,
                          std::span<const std::size_t> ids) {
  std::size_t correct = 0;
  for (std::size_t i : ids) {
    auto row = logits.row(i);
    const auto pred =
        static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == labels[i]) ++correct;
  }
  return correct;
}

void Optimizer::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

void Optimizer::update(std::span<double> params, std::span<const double> grads,
                       std::size_t offset) {
  const double lr = cfg_.learning_rate;
  if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr * grads[k];
    return;
  }
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    double& m = m_[offset + k];
    double& v = v_[offset + k];
    m = b1 * m + (1.0 - b1) * grads[k];
    v = b2 * v + (1.0 - b2) * grads[k] * grads[k];
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

void Optimizer::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: params/grads length differ");
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  } else if (m_.size() != params.size()) {
    throw ShapeError("optimizer: parameter count changed between steps");
  }
  ++t_;
  update(params, grads, 0);
}

void Optimizer::step(MlpParams& params, const MlpParams& grads) {
  if (!params.same_architecture(grads)) throw ShapeError("optimizer: gradient architecture mismatch");
  const std::size_t total = params.parameter_count();
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  } else if (m_.size() != total) {
    throw ShapeError("optimizer: parameter count changed between steps");
  }
  ++t_;
  std::vector<std::span<const double>> gbufs;
  grads.for_each_buffer([&](std::span<const double> b) { gbufs.push_back(b); });
  std::size_t idx = 0, off = 0;
  params.for_each_buffer([&](std::span<double> b) {
    update(b, gbufs[idx++], off);
    off += b.size();
  });
}

namespace {

constexpr char kMagic[4] = {'F', 'M', 'P', 'A'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MlpParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.dims().size()));
  for (auto d : params.dims()) write_le<std::uint64_t>(out, d);
  for (double v : params.flatten()) write_le<double>(out, v);
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (read_le<std::uint32_t>(in, path) != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version in " + path.string());
  }
  const auto n_dims = read_le<std::uint32_t>(in, path);
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) d = read_le<std::uint64_t>(in, path);
  MlpParams p(dims);
  std::vector<double> flat(p.parameter_count());
  for (double& v : flat) v = read_le<double>(in, path);
  p.unflatten(flat);
  return p;
}

}  // namespace fedmpa
