#include "fedmpa/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fedmpa/error.hpp"
#include "fedmpa/rng.hpp"

namespace fedmpa {

namespace fs = std::filesystem;

void Dataset::validate() const {
  const std::size_t n = graph.n_nodes();
  if (features.rows() != n) throw DomainError("dataset: feature rows != node count");
  if (labels.size() != n) throw DomainError("dataset: label count != node count");
  if (n_classes == 0) throw DomainError("dataset: no classes");
  std::vector<std::size_t> per_class(n_classes, 0);
  for (auto y : labels) {
    if (y >= n_classes) throw DomainError("dataset: label out of range");
    ++per_class[y];
  }
  for (std::size_t c = 0; c < n_classes; ++c)
    if (per_class[c] == 0) throw DomainError("dataset: class " + std::to_string(c) + " is empty");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoaderError(LoaderError::Reason::MissingFile, "missing manifest " + path.string());
  }
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw LoaderError(LoaderError::Reason::Malformed,
                        path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::size_t manifest_count(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    throw LoaderError(LoaderError::Reason::Malformed, "manifest lacks " + key);
  }
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw LoaderError(LoaderError::Reason::Malformed, "manifest " + key + " is not a count");
  }
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) {
    throw LoaderError(LoaderError::Reason::MissingFile, "missing " + path.string());
  }
}

std::uint64_t swap_bytes(std::uint64_t x) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r = (r << 8) | ((x >> (8 * i)) & 0xFF);
  return r;
}

double read_f64_le(std::istream& in) {
  double v = 0.0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if constexpr (std::endian::native == std::endian::big) {
    v = std::bit_cast<double>(swap_bytes(std::bit_cast<std::uint64_t>(v)));
  }
  return v;
}

void write_f64_le(std::ostream& out, double v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = std::bit_cast<double>(swap_bytes(std::bit_cast<std::uint64_t>(v)));
  }
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

// Fisher-Yates with a library-independent index draw.
void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  const auto manifest = read_manifest(dir / "manifest.txt");
  const std::size_t n = manifest_count(manifest, "n_nodes");
  const std::size_t d0 = manifest_count(manifest, "n_features");
  const std::size_t n_classes = manifest_count(manifest, "n_classes");

  Dataset ds;
  auto name_it = manifest.find("name");
  ds.name = name_it != manifest.end() ? name_it->second : dir.filename().string();
  ds.n_classes = n_classes;

  require_file(dir / "edges.tsv");
  auto edges = read_edge_list(dir / "edges.tsv");
  ds.n_edge_records = edges.size();
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) {
      throw LoaderError(LoaderError::Reason::DimensionMismatch,
                        "edge (" + std::to_string(u) + "," + std::to_string(v) +
                            ") exceeds n_nodes=" + std::to_string(n));
    }
    if (u == v) {
      throw LoaderError(LoaderError::Reason::Malformed,
                        "self-loop on node " + std::to_string(u) + " in edges.tsv");
    }
  }
  ds.graph = SparseGraph::from_edges(n, edges);

  const fs::path feat_path = dir / "features.bin";
  require_file(feat_path);
  const auto bytes = fs::file_size(feat_path);
  if (bytes != n * d0 * sizeof(double)) {
    throw LoaderError(LoaderError::Reason::DimensionMismatch,
                      "features.bin holds " + std::to_string(bytes) + " bytes, expected " +
                          std::to_string(n * d0 * sizeof(double)));
  }
  {
    std::ifstream in(feat_path, std::ios::binary);
    ds.features = DenseMatrix(n, d0);
    for (double& v : ds.features.values()) v = read_f64_le(in);
    if (!in) throw LoaderError(LoaderError::Reason::Malformed, "short read on features.bin");
  }
  if (!ds.features.all_finite()) {
    throw LoaderError(LoaderError::Reason::Malformed, "features.bin has non-finite values");
  }

  const fs::path label_path = dir / "labels.tsv";
  require_file(label_path);
  {
    std::ifstream in(label_path);
    std::vector<bool> seen(n, false);
    ds.labels.assign(n, 0);
    std::string line;
    std::size_t line_no = 0, count = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      std::istringstream ss(line);
      long long node = -1, cls = -1;
      if (!(ss >> node >> cls) || node < 0 || cls < 0) {
        throw LoaderError(LoaderError::Reason::Malformed,
                          "labels.tsv:" + std::to_string(line_no) + ": expected node and class");
      }
      if (static_cast<std::size_t>(node) >= n || seen[static_cast<std::size_t>(node)]) {
        throw LoaderError(LoaderError::Reason::DimensionMismatch,
                          "labels.tsv:" + std::to_string(line_no) + ": node id " +
                              std::to_string(node) + " out of range or repeated");
      }
      if (static_cast<std::size_t>(cls) >= n_classes) {
        throw LoaderError(LoaderError::Reason::LabelOutOfRange,
                          "labels.tsv:" + std::to_string(line_no) + ": class " +
                              std::to_string(cls) + " >= n_classes=" + std::to_string(n_classes));
      }
      seen[static_cast<std::size_t>(node)] = true;
      ds.labels[static_cast<std::size_t>(node)] = static_cast<std::size_t>(cls);
      ++count;
    }
    if (count != n) {
      throw LoaderError(LoaderError::Reason::DimensionMismatch,
                        "labels.tsv labels " + std::to_string(count) + " of " +
                            std::to_string(n) + " nodes");
    }
  }
  try {
    ds.validate();
  } catch (const DomainError& e) {
    throw LoaderError(LoaderError::Reason::Malformed, e.what());
  }
  return ds;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw IoError("cannot write " + (dir / "manifest.txt").string());
    out << "name=" << ds.name << '\n'
        << "n_nodes=" << ds.n_nodes() << '\n'
        << "n_features=" << ds.features.cols() << '\n'
        << "n_classes=" << ds.n_classes << '\n';
  }
  write_edge_list(dir / "edges.tsv", ds.graph);
  {
    std::ofstream out(dir / "features.bin", std::ios::binary);
    if (!out) throw IoError("cannot write features.bin");
    for (double v : ds.features.values()) write_f64_le(out, v);
  }
  {
    std::ofstream out(dir / "labels.tsv");
    if (!out) throw IoError("cannot write labels.tsv");
    for (std::size_t i = 0; i < ds.labels.size(); ++i) out << i << '\t' << ds.labels[i] << '\n';
  }
}

void row_l1_normalize(DenseMatrix& features) {
  for (std::size_t r = 0; r < features.rows(); ++r) {
    auto row = features.row(r);
    double s = 0.0;
    for (double v : row) s += std::abs(v);
    if (s > 0.0)
      for (double& v : row) v /= s;
  }
}

std::size_t split_count(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-9));
}

std::vector<std::size_t> stratified_quota(const std::vector<std::size_t>& class_sizes,
                                          std::size_t total) {
  const std::size_t c = class_sizes.size();
  const std::size_t n = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
  if (total < c) {
    throw DomainError("stratified split: " + std::to_string(total) +
                      " training nodes cannot cover " + std::to_string(c) + " classes");
  }
  if (total > n) throw DomainError("stratified split: more training nodes than nodes");
  std::vector<double> share(c);
  std::vector<std::size_t> quota(c);
  std::size_t sum = 0;
  for (std::size_t k = 0; k < c; ++k) {
    share[k] = static_cast<double>(total) * static_cast<double>(class_sizes[k]) /
               static_cast<double>(n);
    quota[k] = std::min(class_sizes[k],
                        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(share[k]))));
    sum += quota[k];
  }
  while (sum < total) {
    std::size_t best = c;
    for (std::size_t k = 0; k < c; ++k) {
      if (quota[k] >= class_sizes[k]) continue;
      if (best == c || share[k] - static_cast<double>(quota[k]) >
                           share[best] - static_cast<double>(quota[best]))
        best = k;
    }
    ++quota[best];
    ++sum;
  }
  while (sum > total) {
    std::size_t best = c;
    for (std::size_t k = 0; k < c; ++k) {
      if (quota[k] <= 1) continue;
      if (best == c || share[k] - static_cast<double>(quota[k]) <
                           share[best] - static_cast<double>(quota[best]))
        best = k;
    }
    --quota[best];
    --sum;
  }
  return quota;
}

SplitMasks make_splits(const Dataset& ds, const SplitSpec& spec) {
  for (double f : {spec.train_frac, spec.val_frac, spec.test_frac}) {
    if (!(f > 0.0 && f < 1.0)) throw DomainError("split fractions must lie in (0, 1)");
  }
  if (spec.train_frac + spec.val_frac + spec.test_frac > 1.0 + 1e-12) {
    throw DomainError("split fractions sum above 1");
  }
  const std::size_t n = ds.n_nodes();
  const std::size_t n_train = split_count(spec.train_frac, n);
  const std::size_t n_val = split_count(spec.val_frac, n);
  const std::size_t n_test = split_count(spec.test_frac, n);
  if (n_train + n_val + n_test > n) throw DomainError("split sizes exceed node count");

  Rng rng(spec.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);

  SplitMasks masks;
  std::vector<bool> taken(n, false);
  if (spec.stratified) {
    std::vector<std::size_t> sizes(ds.n_classes, 0);
    for (auto y : ds.labels) ++sizes[y];
    auto quota = stratified_quota(sizes, n_train);
    for (auto v : order) {
      auto& q = quota[ds.labels[v]];
      if (q > 0) {
        --q;
        masks.train.push_back(v);
        taken[v] = true;
      }
    }
  } else {
    for (std::size_t k = 0; k < n_train; ++k) {
      masks.train.push_back(order[k]);
      taken[order[k]] = true;
    }
  }
  for (auto v : order) {
    if (taken[v]) continue;
    if (masks.val.size() < n_val) {
      masks.val.push_back(v);
    } else if (masks.test.size() < n_test) {
      masks.test.push_back(v);
    } else {
      break;
    }
  }
  std::sort(masks.train.begin(), masks.train.end());
  std::sort(masks.val.begin(), masks.val.end());
  std::sort(masks.test.begin(), masks.test.end());
  return masks;
}

namespace {

std::vector<std::size_t> block_sizes(std::size_t n, std::size_t classes) {
  std::vector<std::size_t> sizes(classes, n / classes);
  for (std::size_t c = 0; c < n % classes; ++c) ++sizes[c];
  return sizes;
}

void check_sbm(const SbmSpec& s) {
  if (s.classes == 0 || s.n < s.classes) throw DomainError("sbm: need n >= classes >= 1");
  if (s.d0 == 0) throw DomainError("sbm: feature dimension must be positive");
  for (double p : {s.p_in, s.p_out})
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("sbm: probabilities must lie in [0, 1]");
  if (!(s.p_in > s.p_out)) throw DomainError("sbm: homophilous model needs p_in > p_out");
  if (!(s.feature_noise >= 0.0) || !std::isfinite(s.feature_noise))
    throw DomainError("sbm: feature_noise must be finite and non-negative");
}

}  // namespace

Dataset generate_sbm(const SbmSpec& spec) {
  check_sbm(spec);
  Rng rng(spec.seed);
  Dataset ds;
  ds.name = "sbm";
  ds.n_classes = spec.classes;
  const auto sizes = block_sizes(spec.n, spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) ds.labels.insert(ds.labels.end(), sizes[c], c);

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < spec.n; ++i)
    for (std::size_t j = i + 1; j < spec.n; ++j) {
      const double p = ds.labels[i] == ds.labels[j] ? spec.p_in : spec.p_out;
      if (uniform01(rng) < p) edges.emplace_back(i, j);
    }
  ds.n_edge_records = edges.size();
  ds.graph = SparseGraph::from_edges(spec.n, edges);

  DenseMatrix means(spec.classes, spec.d0);
  for (double& v : means.values()) v = standard_normal(rng);
  ds.features = DenseMatrix(spec.n, spec.d0);
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto row = ds.features.row(i);
    auto mu = means.row(ds.labels[i]);
    for (std::size_t k = 0; k < spec.d0; ++k)
      row[k] = mu[k] + spec.feature_noise * standard_normal(rng);
  }
  ds.validate();
  return ds;
}

double sbm_expected_intra_fraction(const SbmSpec& spec) {
  check_sbm(spec);
  const auto sizes = block_sizes(spec.n, spec.classes);
  double intra = 0.0, inter = 0.0;
  for (std::size_t a = 0; a < sizes.size(); ++a) {
    const double sa = static_cast<double>(sizes[a]);
    intra += sa * (sa - 1.0) / 2.0 * spec.p_in;
    for (std::size_t b = a + 1; b < sizes.size(); ++b)
      inter += sa * static_cast<double>(sizes[b]) * spec.p_out;
  }
  return intra / (intra + inter);
}

}  // namespace fedmpa
