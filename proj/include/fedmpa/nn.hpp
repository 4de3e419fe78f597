#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedmpa/dense.hpp"
#include "fedmpa/rng.hpp"

namespace fedmpa {

struct Layer {
  DenseMatrix weight;  // fan_in x fan_out
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

// Parameters of a fully connected ReLU network. Also used to hold gradients.
//
// Every mutable access bumps a revision counter; a forward tape remembers the
// revision it was recorded against and backward refuses a stale tape.
class MlpParams {
 public:
  MlpParams() = default;

  // All-zero parameters for dims = [d0, h, ..., C].
  explicit MlpParams(std::vector<std::size_t> dims);

  // Glorot-uniform weights, zero biases.
  static MlpParams glorot(std::vector<std::size_t> dims, std::uint64_t seed);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t n_layers() const noexcept { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return layers_[i]; }
  Layer& mutable_layer(std::size_t i) {
    ++revision_;
    return layers_[i];
  }
  std::uint64_t revision() const noexcept { return revision_; }

  std::size_t parameter_count() const noexcept;

  // Layer order; within a layer the weight (row-major) then the bias.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  // Calls fn(span) over every weight and bias buffer in flatten order.
  template <typename Fn>
  void for_each_buffer(Fn&& fn) {
    ++revision_;
    for (auto& l : layers_) {
      fn(l.weight.values());
      fn(std::span<double>(l.bias));
    }
  }
  template <typename Fn>
  void for_each_buffer(Fn&& fn) const {
    for (const auto& l : layers_) {
      fn(l.weight.values());
      fn(std::span<const double>(l.bias));
    }
  }

  bool same_architecture(const MlpParams& other) const noexcept {
    return dims_ == other.dims_;
  }

  // Compares values only; the revision counter is bookkeeping.
  bool operator==(const MlpParams& other) const {
    return dims_ == other.dims_ && layers_ == other.layers_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Layer> layers_;
  std::uint64_t revision_ = 0;
};

// [d0, hidden x n_hidden, n_classes]
std::vector<std::size_t> mlp_dims(std::size_t d0, std::size_t hidden,
                                  std::size_t n_hidden, std::size_t n_classes);

enum class Mode { Train, Eval };

// Activations recorded by mlp_forward for the matching backward call.
struct ForwardTape {
  const MlpParams* params = nullptr;
  std::uint64_t revision = 0;
  std::vector<DenseMatrix> inputs;   // input to layer l, after dropout
  std::vector<DenseMatrix> preacts;  // pre-activation of hidden layer l
  std::vector<DenseMatrix> masks;    // dropout scale on input to layer l; empty = none
};

struct ForwardResult {
  DenseMatrix logits;
  ForwardTape tape;
};

// Inverted dropout on the input and on every hidden activation in Train
// mode; Eval mode ignores dropout and consumes no randomness.
ForwardResult mlp_forward(const MlpParams& params, const DenseMatrix& x, double dropout,
                          Mode mode, Rng& rng);

// Gradients of every parameter given d(loss)/d(logits).
// Throws ContractError if `params` changed since the tape was recorded.
MlpParams backward(const MlpParams& params, const ForwardTape& tape,
                   const DenseMatrix& grad_logits);

struct LossResult {
  double loss = 0.0;
  DenseMatrix grad;
};

// Mean softmax cross-entropy over the masked rows. Gradient is zero on
// unmasked rows. Throws DomainError on an empty mask or bad label.
LossResult softmax_ce_loss(const DenseMatrix& logits, std::span<const std::size_t> labels,
                           std::span<const std::size_t> mask);

// mean((a - b)^2); gradient with respect to b.
LossResult mse_matrix(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix softmax_rows(const DenseMatrix& logits);

std::vector<std::size_t> argmax_rows(const DenseMatrix& m);

// Number of rows in `ids` whose argmax equals the label.
std::size_t count_correct(const DenseMatrix& logits, std::span<const std::size_t> labels,
                          std::span<const std::size_t> ids);

struct OptimizerConfig {
  enum class Kind { Sgd, Adam };
  Kind kind = Kind::Adam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// SGD or Adam over a flat parameter vector. Moment buffers are sized on the
// first step and persist until reset().
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(std::span<double> params, std::span<const double> grads);
  void step(MlpParams& params, const MlpParams& grads);
  void reset();

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::uint64_t steps() const noexcept { return t_; }

 private:
  void update(std::span<double> params, std::span<const double> grads,
              std::size_t offset);

  OptimizerConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

// Binary checkpoint: "FMPA" magic, u32 version, u32 layer-dim count,
// u64 dims, then little-endian f64 values in flatten order.
void save_checkpoint(const std::filesystem::path& path, const MlpParams& params);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fedmpa
