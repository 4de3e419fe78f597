#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedmpa/data.hpp"
#include "fedmpa/dense.hpp"
#include "fedmpa/graph.hpp"
#include "fedmpa/nn.hpp"
#include "fedmpa/partition.hpp"
#include "fedmpa/rng.hpp"

namespace fedmpa {

struct TrainConfig {
  OptimizerConfig optimizer;
  double dropout = 0.5;
  std::size_t hidden_dim = 64;
  std::size_t n_hidden = 3;
  std::size_t rounds = 20;        // federated communication rounds
  std::size_t local_epochs = 1;   // client epochs per round
  std::size_t epochs = 200;       // local head-training epochs
  std::size_t patience = 50;      // early stop on validation accuracy; 0 disables
  bool head_dropout = true;       // dropout inside the diffusion heads' MLP
  std::uint64_t seed = 0;

  // Throws DomainError on invalid learning rate or dropout.
  void validate() const;
};

// One party: its subgraph, features and labels (local indexing), and the
// model it trains. Nothing in here is ever sent to the server.
struct ClientState {
  std::size_t client_id = 0;
  SparseGraph adjacency;  // binary local A_i
  SparseGraph norm_adj;   // D^-1/2 (A_i + I) D^-1/2
  DenseMatrix features;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::vector<std::size_t> global_ids;
  MlpParams params;
  Optimizer optimizer;
  Rng rng;

  std::size_t n_nodes() const noexcept { return features.rows(); }

  // Throws DomainError if masks overlap or sizes disagree.
  void validate() const;
};

ClientState make_client(std::size_t client_id, SparseGraph adjacency, DenseMatrix features,
                        std::vector<std::size_t> labels, std::vector<std::size_t> train,
                        std::vector<std::size_t> val, std::vector<std::size_t> test,
                        MlpParams params, OptimizerConfig opt, std::uint64_t rng_seed);

// Restricts the global dataset and masks to each client of the partition.
// Every client starts from the same initial parameters; client i's dropout
// stream is seeded with mix_seed(seed, kClientBase + i).
std::vector<ClientState> build_clients(const Dataset& ds, const Partition& partition,
                                       const SplitMasks& masks, const TrainConfig& cfg);

std::uint64_t client_stream_seed(std::uint64_t seed, std::size_t client_id);
MlpParams initial_params(const std::vector<std::size_t>& dims, std::uint64_t seed);

enum class PayloadKind { Weights, Gradients };

// The only data that crosses the client/server boundary.
struct RoundPayload {
  std::size_t client_id = 0;
  PayloadKind kind = PayloadKind::Weights;
  std::vector<double> vector;
  std::size_t n_samples = 0;
};

struct AggregationRule {
  enum class Mode { Uniform, SampleWeighted };
  Mode mode = Mode::Uniform;

  // lambda_i per payload, in the given order; sums to 1.
  std::vector<double> weights(std::span<const RoundPayload> payloads) const;
};

// sum_i lambda_i * vector_i, summed in ascending client_id order.
// Throws ProtocolError on mixed kinds, length mismatch, duplicate ids, or
// an empty payload list.
std::vector<double> server_aggregate(std::vector<RoundPayload> payloads,
                                     const AggregationRule& rule);

// Every client adopts the global vector. Optimizer moments are kept unless
// reset_optimizer is set.
void broadcast(std::span<const double> global, std::span<ClientState> clients,
               bool reset_optimizer = false);

struct FedConfig {
  AggregationRule rule;
  PayloadKind kind = PayloadKind::Weights;
  bool reset_optimizer = false;
  bool parallel_clients = true;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::pair<std::size_t, double>> train_loss;  // (client_id, loss)
  double val_accuracy = 0.0;
  double online_ms = 0.0;
};

struct FedResult {
  MlpParams final_params;
  MlpParams best_params;  // highest global validation accuracy
  std::size_t best_round = 0;
  std::vector<RoundRecord> history;
  double online_ms = 0.0;
};

using PayloadObserver = std::function<void(const RoundPayload&)>;

// One full-batch epoch of plain MLP training on the client's train mask.
// Returns the cross-entropy before the update.
double local_mlp_epoch(ClientState& client, const TrainConfig& cfg);

// Full-batch gradient of the training loss at the client's current params.
MlpParams local_mlp_gradient(ClientState& client, const TrainConfig& cfg, double* loss);

// Synchronous federated MLP training. Clients without training labels send
// no payload but receive every broadcast. On return every client holds
// final_params.
FedResult run_fedmlp(std::span<ClientState> clients, const MlpParams& initial,
                     const FedConfig& fed, const TrainConfig& cfg,
                     const PayloadObserver& observer = {});

struct EvalCounts {
  std::size_t val_correct = 0;
  std::size_t val_total = 0;
  std::size_t test_correct = 0;
  std::size_t test_total = 0;

  double val_accuracy() const noexcept {
    return val_total ? static_cast<double>(val_correct) / static_cast<double>(val_total) : 0.0;
  }
  double test_accuracy() const noexcept {
    return test_total ? static_cast<double>(test_correct) / static_cast<double>(test_total)
                      : 0.0;
  }
  EvalCounts& operator+=(const EvalCounts& o) noexcept {
    val_correct += o.val_correct;
    val_total += o.val_total;
    test_correct += o.test_correct;
    test_total += o.test_total;
    return *this;
  }
};

// Eval-mode MLP accuracy on the client's own val/test nodes.
EvalCounts evaluate_mlp(const MlpParams& params, const ClientState& client);

// One JSON object per round: round, train_loss, val_accuracy, online_ms.
void write_round_log(std::ostream& out, std::span<const RoundRecord> history,
                     std::size_t repeat);

// Runs body(i) for i in [0, n), in parallel when requested. The first
// exception thrown by any iteration is rethrown after the loop.
void for_each_client(std::size_t n, bool parallel, const std::function<void(std::size_t)>& body);

}  // namespace fedmpa
