#include "fedmpa/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "fedmpa/error.hpp"

namespace fedmpa {

SparseGraph::SparseGraph(std::size_t n_nodes, std::vector<std::size_t> row_offsets,
                         std::vector<std::size_t> col_indices, std::vector<double> values)
    : n_nodes_(n_nodes),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != n_nodes_ + 1 || row_offsets_.front() != 0 ||
      row_offsets_.back() != col_indices_.size()) {
    throw StructuralError("SparseGraph: row_offsets inconsistent with n_nodes/entries");
  }
  if (values_.size() != col_indices_.size()) {
    throw StructuralError("SparseGraph: values and col_indices differ in length");
  }
  for (std::size_t i = 0; i < n_nodes_; ++i) {
    if (row_offsets_[i] > row_offsets_[i + 1]) {
      throw StructuralError("SparseGraph: row_offsets not monotone");
    }
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      if (col_indices_[k] >= n_nodes_) {
        throw StructuralError("SparseGraph: column index out of range in row " +
                              std::to_string(i));
      }
      if (k > row_offsets_[i] && col_indices_[k] <= col_indices_[k - 1]) {
        throw StructuralError("SparseGraph: columns not strictly increasing in row " +
                              std::to_string(i));
      }
      if (!std::isfinite(values_[k])) {
        throw NumericError("SparseGraph: non-finite value in row " + std::to_string(i));
      }
    }
  }
}

SparseGraph SparseGraph::from_edges(std::size_t n_nodes, std::span<const Edge> edges,
                                    bool allow_self_loops) {
  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u >= n_nodes || v >= n_nodes) {
      throw DomainError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                        ") out of range for " + std::to_string(n_nodes) + " nodes");
    }
    if (u == v) {
      if (!allow_self_loops) {
        throw DomainError("self-loop on node " + std::to_string(u));
      }
      directed.emplace_back(u, u);
      continue;
    }
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  std::vector<std::size_t> offsets(n_nodes + 1, 0);
  std::vector<std::size_t> cols;
  cols.reserve(directed.size());
  for (auto [u, v] : directed) {
    ++offsets[u + 1];
    cols.push_back(v);
  }
  for (std::size_t i = 0; i < n_nodes; ++i) offsets[i + 1] += offsets[i];
  std::vector<double> vals(cols.size(), 1.0);
  return SparseGraph(n_nodes, std::move(offsets), std::move(cols), std::move(vals));
}

std::size_t SparseGraph::n_edges() const noexcept {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n_nodes_; ++i)
    for (auto j : neighbors(i))
      if (i < j) ++count;
  return count;
}

double SparseGraph::at(std::size_t i, std::size_t j) const {
  auto cols = neighbors(i);
  auto it = std::lower_bound(cols.begin(), cols.end(), j);
  if (it == cols.end() || *it != j) return 0.0;
  return values_[row_offsets_[i] + static_cast<std::size_t>(it - cols.begin())];
}

bool SparseGraph::has_entry(std::size_t i, std::size_t j) const {
  auto cols = neighbors(i);
  return std::binary_search(cols.begin(), cols.end(), j);
}

bool SparseGraph::is_symmetric() const {
  for (std::size_t i = 0; i < n_nodes_; ++i) {
    auto cols = neighbors(i);
    auto vals = row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::size_t j = cols[k];
      if (!has_entry(j, i) || at(j, i) != vals[k]) return false;
    }
  }
  return true;
}

std::vector<Edge> SparseGraph::edge_list() const {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < n_nodes_; ++i)
    for (auto j : neighbors(i))
      if (i < j) out.emplace_back(i, j);
  return out;
}

SparseGraph normalize_sym_selfloop(const SparseGraph& g) {
  for (double v : g.values()) {
    if (v < 0.0) throw DomainError("normalize_sym_selfloop: negative edge weight");
  }
  if (!g.is_symmetric()) {
    throw StructuralError("normalize_sym_selfloop: adjacency is not symmetric");
  }
  const std::size_t n = g.n_nodes();
  std::vector<std::size_t> offsets(n + 1, 0);
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  cols.reserve(g.n_entries() + n);
  vals.reserve(g.n_entries() + n);

  // A + I, keeping rows sorted.
  for (std::size_t i = 0; i < n; ++i) {
    auto nb = g.neighbors(i);
    auto w = g.row_values(i);
    bool diag_done = false;
    for (std::size_t k = 0; k < nb.size(); ++k) {
      if (!diag_done && nb[k] >= i) {
        if (nb[k] == i) {
          cols.push_back(i);
          vals.push_back(w[k] + 1.0);
          diag_done = true;
          continue;
        }
        cols.push_back(i);
        vals.push_back(1.0);
        diag_done = true;
      }
      cols.push_back(nb[k]);
      vals.push_back(w[k]);
    }
    if (!diag_done) {
      cols.push_back(i);
      vals.push_back(1.0);
    }
    offsets[i + 1] = cols.size();
  }

  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) d += vals[k];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k)
      vals[k] *= inv_sqrt_deg[i] * inv_sqrt_deg[cols[k]];

  return SparseGraph(n, std::move(offsets), std::move(cols), std::move(vals));
}

Subgraph induce_subgraph(const SparseGraph& g, std::span<const std::size_t> ids) {
  const std::size_t n = g.n_nodes();
  Subgraph sub;
  sub.local_of_global.assign(n, kNoNode);
  sub.global_ids.assign(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n) {
      throw DomainError("induce_subgraph: id " + std::to_string(ids[i]) +
                        " out of range");
    }
    if (sub.local_of_global[ids[i]] != kNoNode) {
      throw DomainError("induce_subgraph: duplicate id " + std::to_string(ids[i]));
    }
    sub.local_of_global[ids[i]] = i;
  }

  std::vector<std::size_t> offsets(ids.size() + 1, 0);
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  std::vector<std::pair<std::size_t, double>> row;
  for (std::size_t li = 0; li < ids.size(); ++li) {
    row.clear();
    auto nb = g.neighbors(ids[li]);
    auto w = g.row_values(ids[li]);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const std::size_t lj = sub.local_of_global[nb[k]];
      if (lj != kNoNode) row.emplace_back(lj, w[k]);
    }
    std::sort(row.begin(), row.end());
    for (auto [c, v] : row) {
      cols.push_back(c);
      vals.push_back(v);
    }
    offsets[li + 1] = cols.size();
  }
  sub.graph = SparseGraph(ids.size(), std::move(offsets), std::move(cols), std::move(vals));
  return sub;
}

std::vector<Edge> read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoaderError(LoaderError::Reason::MissingFile,
                      "cannot open edge list " + path.string());
  }
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    long long u = -1, v = -1;
    if (!(ss >> u >> v) || u < 0 || v < 0) {
      throw LoaderError(LoaderError::Reason::Malformed,
                        path.string() + ":" + std::to_string(line_no) +
                            ": expected two non-negative node ids");
    }
    edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }
  return edges;
}

void write_edge_list(const std::filesystem::path& path, const SparseGraph& g) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (auto [u, v] : g.edge_list()) out << u << '\t' << v << '\n';
}

}  // namespace fedmpa
