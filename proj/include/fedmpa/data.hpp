#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedmpa/dense.hpp"
#include "fedmpa/graph.hpp"

namespace fedmpa {

struct Dataset {
  std::string name;
  SparseGraph graph;  // binary, symmetric, no self-loops
  DenseMatrix features;
  std::vector<std::size_t> labels;
  std::size_t n_classes = 0;
  // Lines read from edges.tsv. Can exceed graph.n_edges() when the source
  // lists an edge in both directions or more than once.
  std::size_t n_edge_records = 0;

  std::size_t n_nodes() const noexcept { return graph.n_nodes(); }

  // Throws DomainError if dimensions disagree or a class is empty.
  void validate() const;
};

// Directory layout:
//   manifest.txt  key=value lines: n_nodes, n_features, n_classes, name
//   edges.tsv     "u<TAB>v" per line, each undirected edge once
//   features.bin  little-endian f64, row-major n_nodes x n_features
//   labels.tsv    "node_id<TAB>class" per line
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);

// Rescales each feature row to unit L1 norm; all-zero rows are left alone.
void row_l1_normalize(DenseMatrix& features);

struct SplitSpec {
  double train_frac = 0.01;
  double val_frac = 0.2;
  double test_frac = 0.2;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitMasks {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// ceil(frac * n) with a small tolerance for representation error.
std::size_t split_count(double frac, std::size_t n);

// Disjoint train/val/test node sets, each sorted ascending. With
// stratification the train set gives every class at least one node and
// otherwise follows class proportions (largest remainder).
SplitMasks make_splits(const Dataset& ds, const SplitSpec& spec);

// Per-class train quota used by the stratified mode.
std::vector<std::size_t> stratified_quota(const std::vector<std::size_t>& class_sizes,
                                          std::size_t total);

struct SbmSpec {
  std::size_t n = 300;
  std::size_t classes = 3;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t d0 = 16;
  double feature_noise = 1.0;
  std::uint64_t seed = 0;
};

// Stochastic block model with contiguous, near-equal blocks (block = label)
// and Gaussian features around a random per-class mean.
Dataset generate_sbm(const SbmSpec& spec);

// Expected share of edges that join two nodes of the same block.
double sbm_expected_intra_fraction(const SbmSpec& spec);

}  // namespace fedmpa
