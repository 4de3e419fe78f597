#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedmpa/data.hpp"
#include "fedmpa/federation.hpp"
#include "fedmpa/models.hpp"

namespace fedmpa {

enum class ModelKind { FedMlp, FedMpa, FedMpae, LocMlp, LocMpa, LocMpae };

const char* model_name(ModelKind m);
ModelKind parse_model(const std::string& name);  // ConfigError on unknown names
bool is_federated(ModelKind m);
// Row order used by comparison tables.
std::size_t model_rank(ModelKind m);

// Sectioned key=value text:
//
//   [data]       path (empty = synthetic SBM), sbm_n, sbm_classes, sbm_p_in,
//                sbm_p_out, sbm_d0, sbm_noise, sbm_seed, row_normalize
//   [partition]  m_clients, seed, reseed
//   [split]      train, val, test, stratified, per_client
//   [train]      optimizer, lr, dropout, hidden_dim, n_hidden, rounds,
//                local_epochs, epochs, patience, head_dropout, payload,
//                aggregation, reset_optimizer, parallel_clients
//   [diffusion]  alpha, k_steps
//   [mpae]       beta, gamma, a, b, recon, decoder_input, super_node,
//                dense_recon_max_nodes, structure_max_nodes
//   [run]        model, n_repeats, seed, save_checkpoints
//
// Keys are addressed as "section.key". '#' starts a comment.
struct ExperimentConfig {
  std::string data_path;
  SbmSpec sbm;
  bool row_normalize = false;

  std::size_t m_clients = 3;
  std::uint64_t partition_seed = 0;
  bool partition_reseed = false;  // partition seed + repeat index per repeat

  SplitSpec split;
  bool split_per_client = false;

  TrainConfig train;
  FedConfig fed;
  DiffusionConfig diffusion;
  MpaeConfig mpae;

  ModelKind model = ModelKind::FedMpa;
  std::size_t n_repeats = 5;
  std::uint64_t seed = 0;
  bool save_checkpoints = false;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Sets one "section.key". Throws ConfigError on unknown keys or bad values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Every key with its effective value, in canonical order.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);

// ConfigError messages carry "<origin>:<line>".
ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

struct ClientMetrics {
  std::size_t client_id = 0;
  std::size_t n_nodes = 0;
  std::size_t n_train = 0;
  EvalCounts counts;
  std::size_t best_epoch = 0;
  bool trained = true;  // false: no training signal, evaluated at the initial parameters
};

struct RepeatResult {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;  // pooled over clients
  double val_accuracy = 0.0;
  std::size_t best_round = 0;
  std::size_t dropped_edges = 0;
  std::vector<ClientMetrics> clients;
  // Wall-clock fields.
  double online_ms = 0.0;
  double offline_ms = 0.0;
};

struct RunReport {
  std::string model;
  std::string dataset;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<RepeatResult> repeats;
  double mean = 0.0;
  double std = 0.0;  // n-1 denominator; 0 for a single repeat
  double min = 0.0;
  double max = 0.0;
  std::vector<std::string> flags;

  std::vector<double> accuracies() const;
  double online_ms() const;
  double offline_ms() const;
  std::string config_value(const std::string& key) const;

  // Wall-clock values live under a separate "timing" object.
  std::string to_json() const;
  static RunReport from_json(const std::string& text);
};

// Sample mean and (n-1) standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs);

// Runs every repeat. When out_dir is given, writes config.echo.txt,
// rounds.jsonl, clients.csv, report.json and optional checkpoints and
// learned-structure dumps there. Errors are rethrown with the repeat index.
RunReport run_experiment(const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                         std::ostream* log = nullptr);

// Loads the config, runs it into out_dir and prints a summary.
RunReport cmd_run(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                  std::ostream& out);

inline constexpr const char* kSweepAxes[] = {"dropout",     "lr",         "hidden_dim",
                                             "beta_gamma",  "label_rate", "m_clients"};

struct SweepRow {
  std::string value;
  RunReport report;
};

// One run per value (value pairs "beta:gamma" for beta_gamma), written to
// out_dir/<axis>_<i>/ and summarized in out_dir/sweep.csv. Throws UsageError
// for an unknown axis or an empty value list.
std::vector<SweepRow> cmd_sweep(const std::filesystem::path& config_path, const std::string& axis,
                                const std::vector<std::string>& values,
                                const std::filesystem::path& out_dir, std::ostream& out);

struct ReportSummary {
  std::vector<RunReport> runs;  // in table order
  std::vector<std::filesystem::path> dirs;
  std::vector<std::string> warnings;
};

// Comparison table of the given run directories plus table.md, timing.csv
// and label_rate.csv in out_dir. Runs whose shared settings disagree are
// flagged, never merged.
ReportSummary cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                         const std::filesystem::path& out_dir, std::ostream& out);

}  // namespace fedmpa
