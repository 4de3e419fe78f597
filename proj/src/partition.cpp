#include "fedmpa/partition.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>

#include "fedmpa/error.hpp"

namespace fedmpa {

namespace {

// Weighted graph used between Louvain levels. Self-loop weight is kept apart
// from the neighbor lists.
struct LevelGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> self_weight;

  std::size_t size() const { return adj.size(); }

  double degree(std::size_t i) const {
    double d = 2.0 * self_weight[i];
    for (auto& [j, w] : adj[i]) d += w;
    return d;
  }
};

LevelGraph level_from_sparse(const SparseGraph& g) {
  LevelGraph lg;
  lg.adj.resize(g.n_nodes());
  lg.self_weight.assign(g.n_nodes(), 0.0);
  for (std::size_t i = 0; i < g.n_nodes(); ++i) {
    for (auto j : g.neighbors(i)) {
      if (j == i) {
        lg.self_weight[i] += 1.0;
      } else {
        lg.adj[i].emplace_back(j, 1.0);
      }
    }
  }
  return lg;
}

// One round of local moving. Returns true if any node changed community.
bool local_moving(const LevelGraph& lg, std::vector<std::size_t>& comm,
                  std::mt19937_64& rng) {
  const std::size_t n = lg.size();
  std::vector<double> k(n), tot(n, 0.0);
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    k[i] = lg.degree(i);
    m2 += k[i];
  }
  comm.resize(n);
  std::iota(comm.begin(), comm.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) tot[i] = k[i];
  if (m2 <= 0.0) return false;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> link(n, 0.0);
  std::vector<std::size_t> touched;
  bool any_move = false;
  constexpr int kMaxPasses = 64;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    std::size_t moves = 0;
    for (std::size_t i : order) {
      const std::size_t own = comm[i];
      touched.clear();
      for (auto& [j, w] : lg.adj[i]) {
        const std::size_t c = comm[j];
        if (link[c] == 0.0) touched.push_back(c);
        link[c] += w;
      }
      tot[own] -= k[i];
      std::size_t best = own;
      double best_gain = link[own] - tot[own] * k[i] / m2;
      std::sort(touched.begin(), touched.end());
      for (std::size_t c : touched) {
        const double gain = link[c] - tot[c] * k[i] / m2;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += k[i];
      comm[i] = best;
      for (std::size_t c : touched) link[c] = 0.0;
      if (best != own) ++moves;
    }
    if (moves == 0) break;
    any_move = true;
  }
  return any_move;
}

std::vector<std::size_t> renumber(std::vector<std::size_t>& comm) {
  std::unordered_map<std::size_t, std::size_t> ids;
  std::vector<std::size_t> sizes;
  for (auto& c : comm) {
    auto [it, inserted] = ids.emplace(c, ids.size());
    if (inserted) sizes.push_back(0);
    c = it->second;
    ++sizes[c];
  }
  return sizes;
}

LevelGraph aggregate(const LevelGraph& lg, const std::vector<std::size_t>& comm,
                     std::size_t n_comm) {
  LevelGraph out;
  out.adj.resize(n_comm);
  out.self_weight.assign(n_comm, 0.0);
  std::vector<std::unordered_map<std::size_t, double>> acc(n_comm);
  for (std::size_t i = 0; i < lg.size(); ++i) {
    const std::size_t ci = comm[i];
    out.self_weight[ci] += lg.self_weight[i];
    for (auto& [j, w] : lg.adj[i]) {
      const std::size_t cj = comm[j];
      if (ci == cj) {
        out.self_weight[ci] += 0.5 * w;  // each internal edge is seen twice
      } else {
        acc[ci][cj] += w;
      }
    }
  }
  for (std::size_t c = 0; c < n_comm; ++c) {
    out.adj[c].assign(acc[c].begin(), acc[c].end());
    std::sort(out.adj[c].begin(), out.adj[c].end());
  }
  return out;
}

}  // namespace

std::vector<std::size_t> louvain_communities(const SparseGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> node_comm(g.n_nodes());
  std::iota(node_comm.begin(), node_comm.end(), std::size_t{0});
  LevelGraph lg = level_from_sparse(g);
  while (true) {
    std::vector<std::size_t> comm;
    const bool moved = local_moving(lg, comm, rng);
    if (!moved) break;
    const auto sizes = renumber(comm);
    for (auto& c : node_comm) c = comm[c];
    if (sizes.size() == lg.size()) break;
    lg = aggregate(lg, comm, sizes.size());
  }
  renumber(node_comm);
  return node_comm;
}

double modularity(const SparseGraph& g, const std::vector<std::size_t>& community) {
  const std::size_t n = g.n_nodes();
  if (community.size() != n) throw ShapeError("modularity: labelling size mismatch");
  double m2 = static_cast<double>(g.n_entries());
  if (m2 == 0.0) return 0.0;
  std::size_t n_comm = 0;
  for (auto c : community) n_comm = std::max(n_comm, c + 1);
  std::vector<double> internal(n_comm, 0.0), tot(n_comm, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    tot[community[i]] += static_cast<double>(g.degree(i));
    for (auto j : g.neighbors(i))
      if (community[i] == community[j]) internal[community[i]] += 1.0;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < n_comm; ++c)
    q += internal[c] / m2 - (tot[c] / m2) * (tot[c] / m2);
  return q;
}

Partition Partition::from_assignment(const SparseGraph& g, std::size_t n_clients,
                                     std::vector<std::size_t> assignment) {
  if (assignment.size() != g.n_nodes()) {
    throw ShapeError("Partition: assignment length != node count");
  }
  Partition p;
  p.n_clients = n_clients;
  std::vector<std::vector<std::size_t>> members(n_clients);
  for (std::size_t v = 0; v < assignment.size(); ++v) {
    if (assignment[v] >= n_clients) {
      throw DomainError("Partition: node " + std::to_string(v) +
                        " assigned to unknown client");
    }
    members[assignment[v]].push_back(v);
  }
  p.assignment = std::move(assignment);
  p.clients.reserve(n_clients);
  for (auto& ids : members) {
    Subgraph sub = induce_subgraph(g, ids);
    p.clients.push_back({std::move(sub.graph), std::move(sub.global_ids)});
  }
  return p;
}

Partition partition_louvain_balanced(const SparseGraph& g, std::size_t m,
                                     std::uint64_t seed) {
  const std::size_t n = g.n_nodes();
  if (m == 0) throw DomainError("partition: need at least one client");
  if (m > n) {
    throw DomainError("partition: " + std::to_string(m) + " clients for " +
                      std::to_string(n) + " nodes");
  }
  if (m == 1) return Partition::from_assignment(g, 1, std::vector<std::size_t>(n, 0));

  auto comm = louvain_communities(g, seed);
  std::size_t n_comm = 0;
  for (auto c : comm) n_comm = std::max(n_comm, c + 1);
  std::vector<std::size_t> comm_size(n_comm, 0);
  for (auto c : comm) ++comm_size[c];

  // Largest community first onto the least loaded client.
  std::vector<std::size_t> comm_order(n_comm);
  std::iota(comm_order.begin(), comm_order.end(), std::size_t{0});
  std::stable_sort(comm_order.begin(), comm_order.end(), [&](auto a, auto b) {
    return comm_size[a] > comm_size[b];
  });
  std::vector<std::size_t> load(m, 0), client_of_comm(n_comm);
  for (auto c : comm_order) {
    const auto dst = static_cast<std::size_t>(
        std::min_element(load.begin(), load.end()) - load.begin());
    client_of_comm[c] = dst;
    load[dst] += comm_size[c];
  }
  std::vector<std::size_t> assignment(n);
  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t v = 0; v < n; ++v) {
    assignment[v] = client_of_comm[comm[v]];
    members[assignment[v]].push_back(v);
  }

  // Move lowest-degree boundary nodes from the largest to the smallest client.
  while (true) {
    auto [mn, mx] = std::minmax_element(load.begin(), load.end());
    const auto dst = static_cast<std::size_t>(mn - load.begin());
    const auto src = static_cast<std::size_t>(mx - load.begin());
    if (*mx - *mn <= 1) break;

    std::size_t best = kNoNode;
    int best_tier = 3;
    std::size_t best_deg = 0;
    for (std::size_t v : members[src]) {
      int tier = 2;
      for (auto u : g.neighbors(v)) {
        if (assignment[u] == dst) {
          tier = 0;
          break;
        }
        if (assignment[u] != src) tier = 1;
      }
      const std::size_t deg = g.degree(v);
      if (tier < best_tier || (tier == best_tier && deg < best_deg) ||
          (tier == best_tier && deg == best_deg && v < best)) {
        best = v;
        best_tier = tier;
        best_deg = deg;
      }
    }
    auto& from = members[src];
    from.erase(std::find(from.begin(), from.end(), best));
    members[dst].push_back(best);
    assignment[best] = dst;
    --load[src];
    ++load[dst];
  }
  return Partition::from_assignment(g, m, std::move(assignment));
}

std::size_t count_dropped_edges(const SparseGraph& g, const Partition& p) {
  if (p.assignment.size() != g.n_nodes()) {
    throw ShapeError("count_dropped_edges: partition does not match graph");
  }
  std::size_t dropped = 0;
  for (auto [u, v] : g.edge_list())
    if (p.assignment[u] != p.assignment[v]) ++dropped;
  return dropped;
}

void write_partition(std::ostream& out, const Partition& p) {
  for (std::size_t v = 0; v < p.assignment.size(); ++v)
    out << v << '\t' << p.assignment[v] << '\n';
}

void write_partition(const std::filesystem::path& path, const Partition& p) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_partition(out, p);
}

}  // namespace fedmpa
