#include "fedmpa/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "fedmpa/error.hpp"

namespace fedmpa {

void TrainConfig::validate() const {
  if (!(optimizer.learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must lie in [0, 1)");
  if (hidden_dim == 0) throw DomainError("hidden_dim must be positive");
}

void ClientState::validate() const {
  const std::size_t n = features.rows();
  if (adjacency.n_nodes() != n || norm_adj.n_nodes() != n || labels.size() != n) {
    throw DomainError("client " + std::to_string(client_id) + ": inconsistent node counts");
  }
  std::vector<char> owner(n, 0);
  for (const auto* mask : {&train, &val, &test}) {
    for (auto i : *mask) {
      if (i >= n) throw DomainError("client mask index out of range");
      if (owner[i]) {
        throw DomainError("client " + std::to_string(client_id) + ": masks overlap at node " +
                          std::to_string(i));
      }
      owner[i] = 1;
    }
  }
}

ClientState make_client(std::size_t client_id, SparseGraph adjacency, DenseMatrix features,
                        std::vector<std::size_t> labels, std::vector<std::size_t> train,
                        std::vector<std::size_t> val, std::vector<std::size_t> test,
                        MlpParams params, OptimizerConfig opt, std::uint64_t rng_seed) {
  ClientState c;
  c.client_id = client_id;
  c.norm_adj = normalize_sym_selfloop(adjacency);
  c.adjacency = std::move(adjacency);
  c.features = std::move(features);
  c.labels = std::move(labels);
  c.train = std::move(train);
  c.val = std::move(val);
  c.test = std::move(test);
  c.params = std::move(params);
  c.optimizer = Optimizer(opt);
  c.rng = Rng(rng_seed);
  c.global_ids.resize(c.features.rows());
  std::iota(c.global_ids.begin(), c.global_ids.end(), std::size_t{0});
  c.validate();
  return c;
}

std::uint64_t client_stream_seed(std::uint64_t seed, std::size_t client_id) {
  return mix_seed(seed, seed_tag::kClientBase + client_id);
}

MlpParams initial_params(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  return MlpParams::glorot(dims, mix_seed(seed, seed_tag::kInit));
}

std::vector<ClientState> build_clients(const Dataset& ds, const Partition& partition,
                                       const SplitMasks& masks, const TrainConfig& cfg) {
  cfg.validate();
  if (partition.assignment.size() != ds.n_nodes()) {
    throw ShapeError("build_clients: partition does not match dataset");
  }
  const auto dims = mlp_dims(ds.features.cols(), cfg.hidden_dim, cfg.n_hidden, ds.n_classes);
  const MlpParams init = initial_params(dims, cfg.seed);

  enum : char { kNone, kTrain, kVal, kTest };
  std::vector<char> role(ds.n_nodes(), kNone);
  for (auto v : masks.train) role[v] = kTrain;
  for (auto v : masks.val) role[v] = kVal;
  for (auto v : masks.test) role[v] = kTest;

  std::vector<ClientState> clients;
  clients.reserve(partition.n_clients);
  for (std::size_t id = 0; id < partition.n_clients; ++id) {
    const auto& sub = partition.clients[id];
    std::vector<std::size_t> labels, train, val, test;
    for (std::size_t li = 0; li < sub.global_ids.size(); ++li) {
      const std::size_t g = sub.global_ids[li];
      labels.push_back(ds.labels[g]);
      if (role[g] == kTrain) train.push_back(li);
      if (role[g] == kVal) val.push_back(li);
      if (role[g] == kTest) test.push_back(li);
    }
    ClientState c = make_client(id, sub.local_graph, ds.features.gather_rows(sub.global_ids),
                                std::move(labels), std::move(train), std::move(val),
                                std::move(test), init, cfg.optimizer,
                                client_stream_seed(cfg.seed, id));
    c.global_ids = sub.global_ids;
    clients.push_back(std::move(c));
  }
  return clients;
}

std::vector<double> AggregationRule::weights(std::span<const RoundPayload> payloads) const {
  std::vector<double> w(payloads.size(), 0.0);
  if (payloads.empty()) return w;
  if (mode == Mode::Uniform) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(payloads.size()));
    return w;
  }
  double total = 0.0;
  for (const auto& p : payloads) total += static_cast<double>(p.n_samples);
  if (total <= 0.0) throw ProtocolError("sample-weighted aggregation with zero samples");
  for (std::size_t i = 0; i < payloads.size(); ++i)
    w[i] = static_cast<double>(payloads[i].n_samples) / total;
  return w;
}

std::vector<double> server_aggregate(std::vector<RoundPayload> payloads,
                                     const AggregationRule& rule) {
  if (payloads.empty()) throw ProtocolError("server_aggregate: no payloads");
  std::stable_sort(payloads.begin(), payloads.end(),
                   [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  const std::size_t len = payloads.front().vector.size();
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    const auto& p = payloads[i];
    if (p.kind != payloads.front().kind) throw ProtocolError("server_aggregate: mixed payload kinds");
    if (p.vector.size() != len) {
      throw ProtocolError("server_aggregate: client " + std::to_string(p.client_id) +
                          " sent " + std::to_string(p.vector.size()) + " values, expected " +
                          std::to_string(len));
    }
    if (i > 0 && payloads[i - 1].client_id == p.client_id) {
      throw ProtocolError("server_aggregate: duplicate payload from client " +
                          std::to_string(p.client_id));
    }
  }
  const auto lambda = rule.weights(payloads);
  std::vector<double> out(len, 0.0);
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    const auto& v = payloads[i].vector;
    for (std::size_t k = 0; k < len; ++k) out[k] += lambda[i] * v[k];
  }
  return out;
}

void broadcast(std::span<const double> global, std::span<ClientState> clients,
               bool reset_optimizer) {
  for (auto& c : clients) {
    if (global.size() != c.params.parameter_count()) {
      throw ProtocolError("broadcast: vector length " + std::to_string(global.size()) +
                          " does not match client " + std::to_string(c.client_id));
    }
  }
  for (auto& c : clients) {
    c.params.unflatten(global);
    if (reset_optimizer) c.optimizer.reset();
  }
}

double local_mlp_epoch(ClientState& client, const TrainConfig& cfg) {
  if (client.train.empty()) {
    throw DomainError("client " + std::to_string(client.client_id) + " has no training labels");
  }
  auto fwd = mlp_forward(client.params, client.features, cfg.dropout, Mode::Train, client.rng);
  auto loss = softmax_ce_loss(fwd.logits, client.labels, client.train);
  auto grads = backward(client.params, fwd.tape, loss.grad);
  client.optimizer.step(client.params, grads);
  return loss.loss;
}

MlpParams local_mlp_gradient(ClientState& client, const TrainConfig& cfg, double* loss) {
  if (client.train.empty()) {
    throw DomainError("client " + std::to_string(client.client_id) + " has no training labels");
  }
  auto fwd = mlp_forward(client.params, client.features, cfg.dropout, Mode::Train, client.rng);
  auto l = softmax_ce_loss(fwd.logits, client.labels, client.train);
  if (loss) *loss = l.loss;
  return backward(client.params, fwd.tape, l.grad);
}

EvalCounts evaluate_mlp(const MlpParams& params, const ClientState& client) {
  Rng unused(0);
  auto fwd = mlp_forward(params, client.features, 0.0, Mode::Eval, unused);
  EvalCounts e;
  e.val_total = client.val.size();
  e.test_total = client.test.size();
  e.val_correct = count_correct(fwd.logits, client.labels, client.val);
  e.test_correct = count_correct(fwd.logits, client.labels, client.test);
  return e;
}

void for_each_client(std::size_t n, bool parallel, const std::function<void(std::size_t)>& body) {
  std::exception_ptr first;
  std::mutex mu;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) if (parallel && n > 1)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

FedResult run_fedmlp(std::span<ClientState> clients, const MlpParams& initial,
                     const FedConfig& fed, const TrainConfig& cfg,
                     const PayloadObserver& observer) {
  cfg.validate();
  if (clients.empty()) throw ProtocolError("run_fedmlp: no clients");
  for (const auto& c : clients) {
    if (!c.params.same_architecture(initial)) {
      throw ProtocolError("run_fedmlp: client " + std::to_string(c.client_id) +
                          " has a different parameter layout");
    }
    if (c.features.cols() != initial.dims().front()) {
      throw ProtocolError("run_fedmlp: client " + std::to_string(c.client_id) +
                          " has a different feature dimension");
    }
  }
  if (std::none_of(clients.begin(), clients.end(),
                   [](const ClientState& c) { return !c.train.empty(); })) {
    throw DomainError("run_fedmlp: no client holds training labels");
  }
  using Clock = std::chrono::steady_clock;

  FedResult result;
  result.best_params = initial;
  double best_val = -1.0;
  {
    const auto flat = initial.flatten();
    broadcast(flat, clients, false);
  }

  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    const auto t0 = Clock::now();
    std::vector<std::optional<RoundPayload>> slots(clients.size());
    std::vector<double> losses(clients.size(), 0.0);

    for_each_client(clients.size(), fed.parallel_clients, [&](std::size_t i) {
      ClientState& c = clients[i];
      if (c.train.empty()) return;
      RoundPayload p;
      p.client_id = c.client_id;
      p.kind = fed.kind;
      p.n_samples = c.train.size();
      if (fed.kind == PayloadKind::Weights) {
        for (std::size_t e = 0; e < cfg.local_epochs; ++e) losses[i] = local_mlp_epoch(c, cfg);
        p.vector = c.params.flatten();
      } else {
        p.vector = local_mlp_gradient(c, cfg, &losses[i]).flatten();
      }
      slots[i] = std::move(p);
    });

    std::vector<RoundPayload> payloads;
    RoundRecord rec;
    rec.round = round;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i]) continue;
      const auto& v = slots[i]->vector;
      if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
        throw ProtocolError("poisoned round " + std::to_string(round) + ": client " +
                            std::to_string(slots[i]->client_id) + " sent non-finite values");
      }
      if (observer) observer(*slots[i]);
      rec.train_loss.emplace_back(slots[i]->client_id, losses[i]);
      payloads.push_back(std::move(*slots[i]));
    }

    const auto aggregate = server_aggregate(std::move(payloads), fed.rule);
    if (fed.kind == PayloadKind::Weights) {
      broadcast(aggregate, clients, fed.reset_optimizer);
    } else {
      for (auto& c : clients) {
        MlpParams g(c.params.dims());
        g.unflatten(aggregate);
        c.optimizer.step(c.params, g);
      }
    }
    rec.online_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    result.online_ms += rec.online_ms;

    EvalCounts total;
    for (const auto& c : clients) total += evaluate_mlp(c.params, c);
    rec.val_accuracy = total.val_accuracy();
    if (rec.val_accuracy > best_val) {
      best_val = rec.val_accuracy;
      result.best_params = clients.front().params;
      result.best_round = round;
    }
    result.history.push_back(std::move(rec));
  }
  result.final_params = clients.front().params;
  if (cfg.rounds == 0) result.best_params = result.final_params;
  return result;
}

void write_round_log(std::ostream& out, std::span<const RoundRecord> history,
                     std::size_t repeat) {
  for (const auto& r : history) {
    nlohmann::json j;
    j["repeat"] = repeat;
    j["round"] = r.round;
    nlohmann::json losses = nlohmann::json::object();
    for (auto [id, loss] : r.train_loss) losses[std::to_string(id)] = loss;
    j["train_loss"] = losses;
    j["val_accuracy"] = r.val_accuracy;
    j["online_ms"] = r.online_ms;
    out << j.dump() << '\n';
  }
}

}  // namespace fedmpa
