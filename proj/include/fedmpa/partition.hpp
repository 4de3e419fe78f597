#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fedmpa/graph.hpp"

namespace fedmpa {

struct ClientSubgraph {
  SparseGraph local_graph;               // binary, unnormalized
  std::vector<std::size_t> global_ids;   // local -> global, ascending
};

// Node-to-client assignment plus each client's induced subgraph. Edges whose
// endpoints land in different clients are not present in any local graph.
struct Partition {
  std::size_t n_clients = 0;
  std::vector<std::size_t> assignment;  // global node -> client
  std::vector<ClientSubgraph> clients;

  // Builds per-client subgraphs from an assignment.
  static Partition from_assignment(const SparseGraph& g, std::size_t n_clients,
                                   std::vector<std::size_t> assignment);
};

// Louvain-style modularity communities (local moving + aggregation),
// packed onto `m` clients and rebalanced so client sizes differ by at most one.
// Deterministic for a fixed seed. Throws DomainError if m == 0 or m > n.
Partition partition_louvain_balanced(const SparseGraph& g, std::size_t m,
                                     std::uint64_t seed);

// One community id per node; ids are dense from 0. Exposed for testing.
std::vector<std::size_t> louvain_communities(const SparseGraph& g, std::uint64_t seed);

// Newman modularity of a node -> community labelling on an unweighted graph.
double modularity(const SparseGraph& g, const std::vector<std::size_t>& community);

// Undirected edges whose endpoints are owned by different clients.
std::size_t count_dropped_edges(const SparseGraph& g, const Partition& p);

// "node_id<TAB>client_id" per line.
void write_partition(const std::filesystem::path& path, const Partition& p);
void write_partition(std::ostream& out, const Partition& p);

}  // namespace fedmpa
