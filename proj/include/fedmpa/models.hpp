#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fedmpa/dense.hpp"
#include "fedmpa/federation.hpp"
#include "fedmpa/graph.hpp"
#include "fedmpa/nn.hpp"

namespace fedmpa {

struct DiffusionConfig {
  double alpha = 0.1;  // teleport probability
  std::size_t k_steps = 10;

  void validate() const;
};

// k_steps of R <- (1 - alpha) * A_norm * R + alpha * R0, starting at R0.
DenseMatrix diffuse(const SparseGraph& a_norm, const DenseMatrix& r0, const DiffusionConfig& cfg);

// Same recurrence, keeping every iterate: result[k] = R^(k), k = 0..k_steps.
std::vector<DenseMatrix> diffuse_trace(const SparseGraph& a_norm, const DenseMatrix& r0,
                                       const DiffusionConfig& cfg);

// Gradient with respect to R0 given the gradient at the output. The
// diffusion operator is a polynomial in a symmetric matrix, so this is the
// forward map applied to the upstream gradient.
DenseMatrix diffuse_backward(const SparseGraph& a_norm, const DenseMatrix& grad_out,
                             const DiffusionConfig& cfg);

// sigmoid(Z Z^T). Exactly symmetric: both triangles accumulate the same
// products in the same order.
DenseMatrix decode_adjacency(const DenseMatrix& z);

// Dense 0/1 adjacency with zero diagonal.
DenseMatrix dense_binary_adjacency(const SparseGraph& g);

struct MpaeConfig {
  enum class Recon { Simplified, LearnableStructure };
  enum class DecoderInput { PreSoftmax, PostSoftmax };

  double beta = 1.0;
  double gamma = 1.0;
  double a = 1.0;
  double b = 1.0;
  Recon recon_mode = Recon::Simplified;
  DecoderInput decoder_input = DecoderInput::PreSoftmax;
  bool super_node = true;
  // Simplified mode switches to sampled reconstruction (all edges plus an
  // equal number of random non-edges) above this many local nodes.
  std::size_t dense_recon_max_nodes = 3000;
  // Learnable-structure mode refuses larger local graphs.
  std::size_t structure_max_nodes = 3000;

  void validate() const;
};

// Learnable edge weights over a fixed support: the local normalized graph's
// entries plus, optionally, one appended super-node joined to every local
// node. One parameter per undirected entry, so the structure stays
// symmetric. Weights are softplus(logit); each forward pass renormalizes
// them symmetrically.
class LearnedStructure {
 public:
  LearnedStructure() = default;
  LearnedStructure(const SparseGraph& base_norm, bool super_node);

  std::size_t n_local() const noexcept { return n_local_; }
  std::size_t n_total() const noexcept { return pattern_.n_nodes(); }
  bool has_super_node() const noexcept { return n_total() > n_local_; }

  std::span<double> logits() noexcept { return logits_; }
  std::span<const double> logits() const noexcept { return logits_; }
  std::size_t n_params() const noexcept { return logits_.size(); }

  // Augmented graph with softplus weights (unnormalized).
  SparseGraph weights() const;
  // D^-1/2 W D^-1/2 over the augmented support.
  SparseGraph normalized() const;

  // Chain rule from d(loss)/d(normalized entry), one value per CSR entry of
  // normalized(), to d(loss)/d(logit).
  std::vector<double> backward(std::span<const double> grad_entries) const;

  // "u<TAB>v<TAB>w" for u <= v, super-node id = n_local.
  void write(const std::filesystem::path& path) const;

 private:
  std::size_t n_local_ = 0;
  SparseGraph pattern_;                 // augmented support, values unused
  std::vector<std::size_t> param_of_;   // CSR entry -> logit index
  std::vector<double> logits_;
};

double softplus(double x);
double inverse_softplus(double y);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double ce = 0.0;
  double recon = 0.0;        // reconstruction term before gamma
  double recon_bound = 0.0;  // ||A - A_bar|| in the same norm (learnable mode)
  double val_accuracy = 0.0;
};

struct HeadResult {
  MlpParams params;  // best-validation checkpoint
  MlpParams final_params;
  std::optional<LearnedStructure> structure;  // learnable mode, at the checkpoint
  EvalCounts counts;                          // at the checkpoint
  std::size_t best_epoch = 0;                 // 0 = the initial parameters
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> history;
};

// Diffusion head: MLP features propagated over the local normalized graph,
// fine-tuned from w0 with cross-entropy on the client's own labels. No
// communication. A client without training labels is evaluated at w0.
HeadResult fedmpa_train(ClientState& client, const MlpParams& w0, const DiffusionConfig& dcfg,
                        const TrainConfig& tcfg);

// Diffusion head plus graph-autoencoder reconstruction:
// beta * CE + gamma * reconstruction. See MpaeConfig for the two modes.
HeadResult fedmpae_train(ClientState& client, const MlpParams& w0, const DiffusionConfig& dcfg,
                         const MpaeConfig& mcfg, const TrainConfig& tcfg);

// Eval-mode predictions of the diffusion head.
DenseMatrix predict_diffused(const MlpParams& params, const ClientState& client,
                             const DiffusionConfig& dcfg,
                             const LearnedStructure* structure = nullptr);

// Loss and gradients of one head-training step with dropout off; used by
// the finite-difference checks.
struct HeadLoss {
  double loss = 0.0;
  double ce = 0.0;
  double recon = 0.0;
  double recon_bound = 0.0;
  MlpParams grads;
  std::vector<double> structure_grads;
};
HeadLoss mpae_loss(const MlpParams& params, const ClientState& client, const DiffusionConfig& dcfg,
                   const MpaeConfig& mcfg, const LearnedStructure* structure, Rng& rng,
                   double dropout);

enum class LocVariant { Mlp, Mpa, Mpae };

struct LocResult {
  MlpParams mlp_params;  // after the local feature stage
  HeadResult head;       // for Mlp: evaluation of the feature stage
};

// Non-federated baselines. The feature MLP is trained on the client's own
// labels for rounds * local_epochs epochs from the same initialization the
// federation uses, then the requested head is trained as in the federated
// pipeline. Throws DomainError if the client has no training labels.
LocResult loc_variants(ClientState& client, LocVariant variant, const MlpParams& init,
                       const DiffusionConfig& dcfg, const MpaeConfig& mcfg,
                       const TrainConfig& tcfg);

}  // namespace fedmpa
