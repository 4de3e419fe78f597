#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace fedmpa {

inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

using Edge = std::pair<std::size_t, std::size_t>;

// Compressed-row adjacency. Immutable once built.
//
// Construction validates per-row ordering and finiteness. Symmetry is not
// enforced here so that normalization can reject asymmetric input with a
// structural error; every builder in this library produces symmetric graphs.
class SparseGraph {
 public:
  SparseGraph() : row_offsets_{0} {}

  // Takes ownership of CSR arrays. Column indices must be strictly
  // increasing within each row, in range, and values finite.
  SparseGraph(std::size_t n_nodes, std::vector<std::size_t> row_offsets,
              std::vector<std::size_t> col_indices, std::vector<double> values);

  // Undirected unweighted graph from an edge list. Each pair is inserted in
  // both directions with value 1; duplicates collapse. Self-loops are kept
  // only if allow_self_loops is set, otherwise they throw DomainError.
  static SparseGraph from_edges(std::size_t n_nodes, std::span<const Edge> edges,
                                bool allow_self_loops = false);

  std::size_t n_nodes() const noexcept { return n_nodes_; }
  std::size_t n_entries() const noexcept { return col_indices_.size(); }

  // Undirected edges excluding self-loops (entries with i < j).
  std::size_t n_edges() const noexcept;

  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const std::size_t> neighbors(std::size_t i) const noexcept {
    return {col_indices_.data() + row_offsets_[i],
            row_offsets_[i + 1] - row_offsets_[i]};
  }
  std::span<const double> row_values(std::size_t i) const noexcept {
    return {values_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
  }
  std::size_t degree(std::size_t i) const noexcept {
    return row_offsets_[i + 1] - row_offsets_[i];
  }

  // Value at (i, j), 0 if absent. Binary search within the row.
  double at(std::size_t i, std::size_t j) const;
  bool has_entry(std::size_t i, std::size_t j) const;

  bool is_symmetric() const;

  // Canonical u < v pairs, sorted.
  std::vector<Edge> edge_list() const;

  bool operator==(const SparseGraph&) const = default;

 private:
  std::size_t n_nodes_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I. Existing self-loops are
// merged with the added identity.
// Throws StructuralError for asymmetric input, DomainError for negative weights.
SparseGraph normalize_sym_selfloop(const SparseGraph& g);

struct Subgraph {
  SparseGraph graph;
  std::vector<std::size_t> global_ids;       // local -> global
  std::vector<std::size_t> local_of_global;  // global -> local, kNoNode if absent
};

// Keeps edges with both endpoints in `ids`. Local node i is ids[i].
Subgraph induce_subgraph(const SparseGraph& g, std::span<const std::size_t> ids);

// Edge-list text: one "u<TAB>v" per line, 0-based, each undirected edge once.
std::vector<Edge> read_edge_list(const std::filesystem::path& path);
void write_edge_list(const std::filesystem::path& path, const SparseGraph& g);

}  // namespace fedmpa
