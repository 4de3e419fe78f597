#include "fedmpa/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fedmpa/error.hpp"
#include "fedmpa/partition.hpp"
#include "fedmpa/rng.hpp"

namespace fedmpa {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const char* model_name(ModelKind m) {
  switch (m) {
    case ModelKind::FedMlp: return "fedmlp";
    case ModelKind::FedMpa: return "fedmpa";
    case ModelKind::FedMpae: return "fedmpae";
    case ModelKind::LocMlp: return "loc-mlp";
    case ModelKind::LocMpa: return "loc-mpa";
    case ModelKind::LocMpae: return "loc-mpae";
  }
  return "?";
}

ModelKind parse_model(const std::string& name) {
  for (auto m : {ModelKind::FedMlp, ModelKind::FedMpa, ModelKind::FedMpae, ModelKind::LocMlp,
                 ModelKind::LocMpa, ModelKind::LocMpae})
    if (name == model_name(m)) return m;
  throw ConfigError("unknown model '" + name + "'");
}

bool is_federated(ModelKind m) {
  return m == ModelKind::FedMlp || m == ModelKind::FedMpa || m == ModelKind::FedMpae;
}

std::size_t model_rank(ModelKind m) {
  switch (m) {
    case ModelKind::FedMlp: return 0;
    case ModelKind::LocMlp: return 1;
    case ModelKind::LocMpa: return 2;
    case ModelKind::LocMpae: return 3;
    case ModelKind::FedMpa: return 4;
    case ModelKind::FedMpae: return 5;
  }
  return 6;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

struct KeySpec {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class F>
KeySpec real_key(std::string key, F field) {
  return {key, [field](const ExperimentConfig& c) {
            return fmt_double(field(const_cast<ExperimentConfig&>(c)));
          },
          [field, key](ExperimentConfig& c, const std::string& v) {
            field(c) = parse_double(key, v);
          }};
}

template <class F>
KeySpec count_key(std::string key, F field) {
  return {key, [field](const ExperimentConfig& c) {
            return std::to_string(field(const_cast<ExperimentConfig&>(c)));
          },
          [field, key](ExperimentConfig& c, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(
                parse_u64(key, v));
          }};
}

template <class F>
KeySpec bool_key(std::string key, F field) {
  return {key, [field](const ExperimentConfig& c) {
            return std::string(field(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          },
          [field, key](ExperimentConfig& c, const std::string& v) {
            field(c) = parse_bool(key, v);
          }};
}

template <class E>
KeySpec enum_key(std::string key, std::function<E&(ExperimentConfig&)> field,
                 std::vector<std::pair<std::string, E>> names) {
  return {key,
          [field, names](const ExperimentConfig& c) {
            const E v = field(const_cast<ExperimentConfig&>(c));
            for (const auto& [n, e] : names)
              if (e == v) return n;
            return std::string("?");
          },
          [field, names, key](ExperimentConfig& c, const std::string& v) {
            for (const auto& [n, e] : names)
              if (n == v) {
                field(c) = e;
                return;
              }
            std::string allowed;
            for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + n;
            throw ConfigError(key + ": '" + v + "' is not one of " + allowed);
          }};
}

#define FIELD(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }

const std::vector<KeySpec>& key_table() {
  using Opt = OptimizerConfig::Kind;
  using Recon = MpaeConfig::Recon;
  using Dec = MpaeConfig::DecoderInput;
  using Agg = AggregationRule::Mode;
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> t;
    t.push_back({"data.path", [](const ExperimentConfig& c) { return c.data_path; },
                 [](ExperimentConfig& c, const std::string& v) { c.data_path = v; }});
    t.push_back(count_key("data.sbm_n", FIELD(sbm.n)));
    t.push_back(count_key("data.sbm_classes", FIELD(sbm.classes)));
    t.push_back(real_key("data.sbm_p_in", FIELD(sbm.p_in)));
    t.push_back(real_key("data.sbm_p_out", FIELD(sbm.p_out)));
    t.push_back(count_key("data.sbm_d0", FIELD(sbm.d0)));
    t.push_back(real_key("data.sbm_noise", FIELD(sbm.feature_noise)));
    t.push_back(count_key("data.sbm_seed", FIELD(sbm.seed)));
    t.push_back(bool_key("data.row_normalize", FIELD(row_normalize)));
    t.push_back(count_key("partition.m_clients", FIELD(m_clients)));
    t.push_back(count_key("partition.seed", FIELD(partition_seed)));
    t.push_back(bool_key("partition.reseed", FIELD(partition_reseed)));
    t.push_back(real_key("split.train", FIELD(split.train_frac)));
    t.push_back(real_key("split.val", FIELD(split.val_frac)));
    t.push_back(real_key("split.test", FIELD(split.test_frac)));
    t.push_back(bool_key("split.stratified", FIELD(split.stratified)));
    t.push_back(bool_key("split.per_client", FIELD(split_per_client)));
    t.push_back(enum_key<Opt>("train.optimizer", FIELD(train.optimizer.kind),
                              {{"adam", Opt::Adam}, {"sgd", Opt::Sgd}}));
    t.push_back(real_key("train.lr", FIELD(train.optimizer.learning_rate)));
    t.push_back(real_key("train.dropout", FIELD(train.dropout)));
    t.push_back(count_key("train.hidden_dim", FIELD(train.hidden_dim)));
    t.push_back(count_key("train.n_hidden", FIELD(train.n_hidden)));
    t.push_back(count_key("train.rounds", FIELD(train.rounds)));
    t.push_back(count_key("train.local_epochs", FIELD(train.local_epochs)));
    t.push_back(count_key("train.epochs", FIELD(train.epochs)));
    t.push_back(count_key("train.patience", FIELD(train.patience)));
    t.push_back(bool_key("train.head_dropout", FIELD(train.head_dropout)));
    t.push_back(enum_key<PayloadKind>(
        "train.payload", FIELD(fed.kind),
        {{"weights", PayloadKind::Weights}, {"gradients", PayloadKind::Gradients}}));
    t.push_back(enum_key<Agg>("train.aggregation", FIELD(fed.rule.mode),
                              {{"uniform", Agg::Uniform}, {"sample", Agg::SampleWeighted}}));
    t.push_back(bool_key("train.reset_optimizer", FIELD(fed.reset_optimizer)));
    t.push_back(bool_key("train.parallel_clients", FIELD(fed.parallel_clients)));
    t.push_back(real_key("diffusion.alpha", FIELD(diffusion.alpha)));
    t.push_back(count_key("diffusion.k_steps", FIELD(diffusion.k_steps)));
    t.push_back(real_key("mpae.beta", FIELD(mpae.beta)));
    t.push_back(real_key("mpae.gamma", FIELD(mpae.gamma)));
    t.push_back(real_key("mpae.a", FIELD(mpae.a)));
    t.push_back(real_key("mpae.b", FIELD(mpae.b)));
    t.push_back(enum_key<Recon>(
        "mpae.recon", FIELD(mpae.recon_mode),
        {{"simplified", Recon::Simplified}, {"learnable", Recon::LearnableStructure}}));
    t.push_back(enum_key<Dec>("mpae.decoder_input", FIELD(mpae.decoder_input),
                              {{"pre_softmax", Dec::PreSoftmax}, {"post_softmax", Dec::PostSoftmax}}));
    t.push_back(bool_key("mpae.super_node", FIELD(mpae.super_node)));
    t.push_back(count_key("mpae.dense_recon_max_nodes", FIELD(mpae.dense_recon_max_nodes)));
    t.push_back(count_key("mpae.structure_max_nodes", FIELD(mpae.structure_max_nodes)));
    t.push_back({"run.model", [](const ExperimentConfig& c) { return std::string(model_name(c.model)); },
                 [](ExperimentConfig& c, const std::string& v) { c.model = parse_model(v); }});
    t.push_back(count_key("run.n_repeats", FIELD(n_repeats)));
    t.push_back(count_key("run.seed", FIELD(seed)));
    t.push_back(bool_key("run.save_checkpoints", FIELD(save_checkpoints)));
    return t;
  }();
  return table;
}

#undef FIELD

}  // namespace

void ExperimentConfig::validate() const {
  if (n_repeats < 1) throw ConfigError("run.n_repeats must be at least 1");
  if (m_clients < 1) throw ConfigError("partition.m_clients must be at least 1");
  if (!data_path.empty() && !fs::is_directory(data_path)) {
    throw ConfigError("data.path: directory '" + data_path + "' does not exist");
  }
  auto wrap = [](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const DomainError& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
  };
  wrap("train", [&] { train.validate(); });
  wrap("diffusion", [&] { diffusion.validate(); });
  wrap("mpae", [&] { mpae.validate(); });
  if (train.hidden_dim == 0) throw ConfigError("train.hidden_dim must be positive");
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& spec : key_table()) {
    if (spec.key == key) {
      spec.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& spec : key_table()) out.emplace_back(spec.key, spec.get(cfg));
  return out;
}

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  ExperimentConfig cfg;
  std::string line, section;
  std::map<std::string, std::size_t> seen;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string name = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (name.empty()) throw ConfigError(where + "empty key");
    const std::string key = section.empty() ? name : section + "." + name;
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(where + "'" + key + "' already set on line " + std::to_string(it->second));
    }
    seen[key] = lineno;
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::vector<double> RunReport::accuracies() const {
  std::vector<double> out;
  for (const auto& r : repeats) out.push_back(r.test_accuracy);
  return out;
}

double RunReport::online_ms() const {
  double s = 0.0;
  for (const auto& r : repeats) s += r.online_ms;
  return s;
}

double RunReport::offline_ms() const {
  double s = 0.0;
  for (const auto& r : repeats) s += r.offline_ms;
  return s;
}

std::string RunReport::config_value(const std::string& key) const {
  for (const auto& [k, v] : config)
    if (k == key) return v;
  return {};
}

std::string RunReport::to_json() const {
  ojson j;
  j["model"] = model;
  j["dataset"] = dataset;
  ojson c = ojson::object();
  for (const auto& [k, v] : config) c[k] = v;
  j["config"] = c;
  j["accuracy"] = {{"mean", mean}, {"std", std}, {"min", min}, {"max", max},
                   {"per_repeat", accuracies()}};
  ojson reps = ojson::array();
  ojson timing_reps = ojson::array();
  for (const auto& r : repeats) {
    ojson cl = ojson::array();
    for (const auto& m : r.clients) {
      cl.push_back({{"client_id", m.client_id},
                    {"n_nodes", m.n_nodes},
                    {"n_train", m.n_train},
                    {"val_correct", m.counts.val_correct},
                    {"val_total", m.counts.val_total},
                    {"test_correct", m.counts.test_correct},
                    {"test_total", m.counts.test_total},
                    {"best_epoch", m.best_epoch},
                    {"trained", m.trained}});
    }
    reps.push_back({{"repeat", r.repeat},
                    {"seed", r.seed},
                    {"test_accuracy", r.test_accuracy},
                    {"val_accuracy", r.val_accuracy},
                    {"best_round", r.best_round},
                    {"dropped_edges", r.dropped_edges},
                    {"clients", cl}});
    timing_reps.push_back({{"online_ms", r.online_ms}, {"offline_ms", r.offline_ms}});
  }
  j["repeats"] = reps;
  j["flags"] = flags;
  j["timing"] = {{"online_ms", online_ms()}, {"offline_ms", offline_ms()},
                 {"per_repeat", timing_reps}};
  return j.dump(2) + "\n";
}

RunReport RunReport::from_json(const std::string& text) {
  RunReport r;
  try {
    const ojson j = ojson::parse(text);
    r.model = j.at("model").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    const auto& acc = j.at("accuracy");
    r.mean = acc.at("mean").get<double>();
    r.std = acc.at("std").get<double>();
    r.min = acc.at("min").get<double>();
    r.max = acc.at("max").get<double>();
    const auto& timing = j.at("timing").at("per_repeat");
    std::size_t i = 0;
    for (const auto& rj : j.at("repeats")) {
      RepeatResult rr;
      rr.repeat = rj.at("repeat").get<std::size_t>();
      rr.seed = rj.at("seed").get<std::uint64_t>();
      rr.test_accuracy = rj.at("test_accuracy").get<double>();
      rr.val_accuracy = rj.at("val_accuracy").get<double>();
      rr.best_round = rj.at("best_round").get<std::size_t>();
      rr.dropped_edges = rj.at("dropped_edges").get<std::size_t>();
      for (const auto& cj : rj.at("clients")) {
        ClientMetrics m;
        m.client_id = cj.at("client_id").get<std::size_t>();
        m.n_nodes = cj.at("n_nodes").get<std::size_t>();
        m.n_train = cj.at("n_train").get<std::size_t>();
        m.counts.val_correct = cj.at("val_correct").get<std::size_t>();
        m.counts.val_total = cj.at("val_total").get<std::size_t>();
        m.counts.test_correct = cj.at("test_correct").get<std::size_t>();
        m.counts.test_total = cj.at("test_total").get<std::size_t>();
        m.best_epoch = cj.at("best_epoch").get<std::size_t>();
        m.trained = cj.at("trained").get<bool>();
        rr.clients.push_back(m);
      }
      if (i < timing.size()) {
        rr.online_ms = timing[i].at("online_ms").get<double>();
        rr.offline_ms = timing[i].at("offline_ms").get<double>();
      }
      ++i;
      r.repeats.push_back(std::move(rr));
    }
    for (const auto& f : j.at("flags")) r.flags.push_back(f.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return r;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Splits drawn inside each client over the classes it actually holds.
SplitMasks per_client_splits(const Dataset& ds, const Partition& part, const SplitSpec& spec) {
  SplitMasks out;
  for (std::size_t c = 0; c < part.n_clients; ++c) {
    const auto& ids = part.clients[c].global_ids;
    std::map<std::size_t, std::size_t> compact;
    for (auto g : ids) compact.emplace(ds.labels[g], 0);
    std::size_t next = 0;
    for (auto& [label, idx] : compact) idx = next++;
    Dataset local;
    local.graph = SparseGraph::from_edges(ids.size(), {});
    local.n_classes = compact.size();
    for (auto g : ids) local.labels.push_back(compact.at(ds.labels[g]));
    SplitSpec s = spec;
    s.seed = mix_seed(spec.seed, c);
    SplitMasks m;
    try {
      m = make_splits(local, s);
    } catch (const DomainError& e) {
      throw DomainError("per-client split on client " + std::to_string(c) + ": " + e.what());
    }
    for (auto v : m.train) out.train.push_back(ids[v]);
    for (auto v : m.val) out.val.push_back(ids[v]);
    for (auto v : m.test) out.test.push_back(ids[v]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

EvalCounts evaluate_diffused(const MlpParams& params, const ClientState& client,
                             const DiffusionConfig& dcfg) {
  const DenseMatrix logits = predict_diffused(params, client, dcfg);
  EvalCounts e;
  e.val_total = client.val.size();
  e.test_total = client.test.size();
  e.val_correct = count_correct(logits, client.labels, client.val);
  e.test_correct = count_correct(logits, client.labels, client.test);
  return e;
}

struct RepeatOutputs {
  RepeatResult result;
  std::vector<RoundRecord> rounds;
  std::vector<std::pair<std::size_t, MlpParams>> checkpoints;  // client id (npos = global)
  std::vector<std::pair<std::size_t, LearnedStructure>> structures;
};

constexpr std::size_t kGlobal = static_cast<std::size_t>(-1);

RepeatOutputs run_repeat(const ExperimentConfig& cfg, const Dataset& ds, std::size_t r) {
  RepeatOutputs out;
  RepeatResult& res = out.result;
  res.repeat = r;
  res.seed = cfg.seed + r;

  const std::uint64_t pseed = cfg.partition_seed + (cfg.partition_reseed ? r : 0);
  const Partition part = partition_louvain_balanced(ds.graph, cfg.m_clients, pseed);
  res.dropped_edges = count_dropped_edges(ds.graph, part);

  SplitSpec sp = cfg.split;
  sp.seed = mix_seed(res.seed, seed_tag::kSplit);
  const SplitMasks masks = cfg.split_per_client ? per_client_splits(ds, part, sp)
                                                : make_splits(ds, sp);
  TrainConfig tc = cfg.train;
  tc.seed = res.seed;
  std::vector<ClientState> clients = build_clients(ds, part, masks, tc);
  const MlpParams init = clients.front().params;

  const std::size_t m = clients.size();
  std::vector<ClientMetrics> metrics(m);
  std::vector<std::optional<HeadResult>> heads(m);
  const bool parallel = cfg.fed.parallel_clients;

  const auto t0 = Clock::now();
  if (is_federated(cfg.model)) {
    FedResult fed = run_fedmlp(clients, init, cfg.fed, tc);
    res.online_ms = fed.online_ms;
    res.best_round = fed.best_round;
    out.rounds = std::move(fed.history);
    if (cfg.model == ModelKind::FedMlp) {
      out.checkpoints.emplace_back(kGlobal, fed.best_params);
      for (std::size_t i = 0; i < m; ++i) {
        metrics[i].counts = evaluate_mlp(fed.best_params, clients[i]);
        metrics[i].best_epoch = fed.best_round;
      }
    } else {
      out.checkpoints.emplace_back(kGlobal, fed.final_params);
      for_each_client(m, parallel, [&](std::size_t i) {
        heads[i] = cfg.model == ModelKind::FedMpa
                       ? fedmpa_train(clients[i], fed.final_params, cfg.diffusion, tc)
                       : fedmpae_train(clients[i], fed.final_params, cfg.diffusion, cfg.mpae, tc);
      });
    }
  } else {
    const LocVariant variant = cfg.model == ModelKind::LocMlp   ? LocVariant::Mlp
                               : cfg.model == ModelKind::LocMpa ? LocVariant::Mpa
                                                                : LocVariant::Mpae;
    for_each_client(m, parallel, [&](std::size_t i) {
      ClientState& c = clients[i];
      if (c.train.empty()) {
        metrics[i].trained = false;
        metrics[i].counts = variant == LocVariant::Mlp ? evaluate_mlp(init, c)
                                                       : evaluate_diffused(init, c, cfg.diffusion);
        return;
      }
      heads[i] = loc_variants(c, variant, init, cfg.diffusion, cfg.mpae, tc).head;
    });
  }
  const double total_ms = ms_since(t0);
  res.offline_ms = std::max(0.0, total_ms - res.online_ms);

  EvalCounts pooled;
  for (std::size_t i = 0; i < m; ++i) {
    ClientMetrics& cm = metrics[i];
    cm.client_id = clients[i].client_id;
    cm.n_nodes = clients[i].n_nodes();
    cm.n_train = clients[i].train.size();
    if (heads[i]) {
      cm.counts = heads[i]->counts;
      cm.best_epoch = heads[i]->best_epoch;
      cm.trained = heads[i]->epochs_run > 0;
      out.checkpoints.emplace_back(cm.client_id, heads[i]->params);
      if (heads[i]->structure) out.structures.emplace_back(cm.client_id, *heads[i]->structure);
    }
    pooled += cm.counts;
  }
  res.clients = std::move(metrics);
  res.test_accuracy = pooled.test_accuracy();
  res.val_accuracy = pooled.val_accuracy();
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

std::string percent(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * x;
  return s.str();
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, const std::optional<fs::path>& out_dir,
                         std::ostream* log) {
  cfg.validate();
  Dataset ds = cfg.data_path.empty() ? generate_sbm(cfg.sbm) : load_dataset(cfg.data_path);
  if (cfg.row_normalize) row_l1_normalize(ds.features);

  RunReport report;
  report.model = model_name(cfg.model);
  report.dataset = ds.name;
  report.config = config_entries(cfg);
  if (cfg.split.stratified) report.flags.push_back("stratified train split");
  if (cfg.split_per_client) report.flags.push_back("per-client splits");
  if (cfg.model == ModelKind::FedMpae || cfg.model == ModelKind::LocMpae) {
    report.flags.push_back(cfg.mpae.recon_mode == MpaeConfig::Recon::LearnableStructure
                               ? "reconstruction: learnable structure"
                               : "reconstruction: simplified");
  }

  std::ofstream rounds_log;
  if (out_dir) {
    fs::create_directories(*out_dir);
    std::string echo;
    for (const auto& [k, v] : report.config) echo += k + " = " + v + "\n";
    write_text(*out_dir / "config.echo.txt", echo);
    if (is_federated(cfg.model)) {
      rounds_log.open(*out_dir / "rounds.jsonl", std::ios::binary);
      if (!rounds_log) throw IoError("cannot write rounds.jsonl");
    }
    if (cfg.save_checkpoints) fs::create_directories(*out_dir / "checkpoints");
  }

  std::size_t untrained = 0;
  for (std::size_t r = 0; r < cfg.n_repeats; ++r) {
    RepeatOutputs ro;
    try {
      ro = run_repeat(cfg, ds, r);
    } catch (const Error& e) {
      throw Error(e.kind(), "repeat " + std::to_string(r) + ": " + e.what());
    }
    for (const auto& c : ro.result.clients) untrained += c.trained ? 0 : 1;
    if (out_dir) {
      if (rounds_log.is_open()) write_round_log(rounds_log, ro.rounds, r);
      if (cfg.save_checkpoints) {
        for (const auto& [id, params] : ro.checkpoints) {
          const std::string who = id == kGlobal ? "global" : "c" + std::to_string(id);
          save_checkpoint(*out_dir / "checkpoints" / ("r" + std::to_string(r) + "_" + who + ".fmpa"),
                          params);
        }
      }
      if (!ro.structures.empty()) {
        fs::create_directories(*out_dir / "structures");
        for (const auto& [id, st] : ro.structures)
          st.write(*out_dir / "structures" /
                   ("r" + std::to_string(r) + "_c" + std::to_string(id) + ".tsv"));
      }
    }
    if (log) {
      *log << report.model << " repeat " << r << " seed " << ro.result.seed << ": test "
           << percent(ro.result.test_accuracy) << "%\n";
    }
    report.repeats.push_back(std::move(ro.result));
  }
  if (untrained > 0) {
    report.flags.push_back(std::to_string(untrained) +
                           " client-repeats had no training signal and kept their initial parameters");
  }

  const auto accs = report.accuracies();
  std::tie(report.mean, report.std) = mean_std(accs);
  report.min = *std::min_element(accs.begin(), accs.end());
  report.max = *std::max_element(accs.begin(), accs.end());

  if (out_dir) {
    std::ostringstream csv;
    csv << "repeat,client_id,n_nodes,n_train,val_total,test_total,val_accuracy,test_accuracy,"
           "best_epoch,trained\n";
    for (const auto& r : report.repeats)
      for (const auto& c : r.clients)
        csv << r.repeat << ',' << c.client_id << ',' << c.n_nodes << ',' << c.n_train << ','
            << c.counts.val_total << ',' << c.counts.test_total << ','
            << fmt_double(c.counts.val_accuracy()) << ',' << fmt_double(c.counts.test_accuracy())
            << ',' << c.best_epoch << ',' << (c.trained ? "true" : "false") << '\n';
    write_text(*out_dir / "clients.csv", csv.str());
    write_text(*out_dir / "report.json", report.to_json());
  }
  return report;
}

RunReport cmd_run(const fs::path& config_path, const fs::path& out_dir, std::ostream& out) {
  const ExperimentConfig cfg = load_config(config_path);
  RunReport report = run_experiment(cfg, out_dir, &out);
  out << report.model << " on " << report.dataset << ": " << percent(report.mean) << " +- "
      << percent(report.std) << " % over " << report.repeats.size() << " repeats (online "
      << std::fixed << std::setprecision(1) << report.online_ms() << " ms, offline "
      << report.offline_ms() << " ms)\n"
      << std::defaultfloat;
  for (const auto& f : report.flags) out << "  note: " << f << '\n';
  out << "  report: " << (out_dir / "report.json").string() << '\n';
  return report;
}

std::vector<SweepRow> cmd_sweep(const fs::path& config_path, const std::string& axis,
                                const std::vector<std::string>& values, const fs::path& out_dir,
                                std::ostream& out) {
  if (std::find(std::begin(kSweepAxes), std::end(kSweepAxes), axis) == std::end(kSweepAxes)) {
    std::string allowed;
    for (const char* a : kSweepAxes) allowed += std::string(allowed.empty() ? "" : ", ") + a;
    throw UsageError("unknown sweep axis '" + axis + "' (expected one of " + allowed + ")");
  }
  if (values.empty()) throw UsageError("sweep needs at least one value");
  const ExperimentConfig base = load_config(config_path);

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig cfg = base;
    const std::string& v = values[i];
    if (axis == "beta_gamma") {
      const auto colon = v.find(':');
      if (colon == std::string::npos) throw UsageError("beta_gamma values are beta:gamma pairs");
      set_config_value(cfg, "mpae.beta", v.substr(0, colon));
      set_config_value(cfg, "mpae.gamma", v.substr(colon + 1));
    } else {
      static const std::map<std::string, std::string> key_of{
          {"dropout", "train.dropout"},   {"lr", "train.lr"},
          {"hidden_dim", "train.hidden_dim"}, {"label_rate", "split.train"},
          {"m_clients", "partition.m_clients"}};
      set_config_value(cfg, key_of.at(axis), v);
    }
    out << "[" << axis << " = " << v << "]\n";
    RunReport rep = run_experiment(cfg, out_dir / (axis + "_" + std::to_string(i)), &out);
    rows.push_back({v, std::move(rep)});
  }

  std::ostringstream csv;
  csv << "axis,value,model,dataset,n_repeats,mean,std,min,max,online_ms,offline_ms\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    csv << axis << ',' << row.value << ',' << r.model << ',' << r.dataset << ','
        << r.repeats.size() << ',' << fmt_double(r.mean) << ',' << fmt_double(r.std) << ','
        << fmt_double(r.min) << ',' << fmt_double(r.max) << ',' << fmt_double(r.online_ms())
        << ',' << fmt_double(r.offline_ms()) << '\n';
  }
  fs::create_directories(out_dir);
  write_text(out_dir / "sweep.csv", csv.str());

  out << "\n" << axis << "\tmean(%)\tstd(%)\n";
  std::size_t best = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << rows[i].value << '\t' << percent(rows[i].report.mean) << '\t'
        << percent(rows[i].report.std) << '\n';
    if (rows[i].report.mean > rows[best].report.mean) best = i;
  }
  out << "peak at " << axis << " = " << rows[best].value << " (" << percent(rows[best].report.mean)
      << "%)\n";
  out << "sweep table: " << (out_dir / "sweep.csv").string() << '\n';
  return rows;
}

ReportSummary cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir,
                         std::ostream& out) {
  if (run_dirs.empty()) throw UsageError("report needs at least one run directory");
  std::vector<std::pair<RunReport, fs::path>> runs;
  for (const auto& d : run_dirs) {
    std::ifstream in(d / "report.json", std::ios::binary);
    if (!in) throw IoError("no report.json in " + d.string());
    std::stringstream ss;
    ss << in.rdbuf();
    runs.emplace_back(RunReport::from_json(ss.str()), d);
  }
  std::stable_sort(runs.begin(), runs.end(), [](const auto& x, const auto& y) {
    const auto rx = model_rank(parse_model(x.first.model));
    const auto ry = model_rank(parse_model(y.first.model));
    if (rx != ry) return rx < ry;
    return x.first.dataset < y.first.dataset;
  });

  ReportSummary summary;
  for (auto& [r, d] : runs) {
    summary.runs.push_back(r);
    summary.dirs.push_back(d);
  }

  // Settings every compared run on a dataset must share. The label rate
  // may differ: it is an axis of its own.
  auto shared_key = [](const std::string& k) {
    return (k.rfind("data.", 0) == 0 || k.rfind("partition.", 0) == 0 ||
            k.rfind("split.", 0) == 0) &&
           k != "split.train";
  };
  // Each run is checked against the first table row on its dataset.
  std::vector<bool> incompatible(runs.size(), false);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (runs[i].first.dataset != runs[j].first.dataset) continue;
      std::vector<std::string> diff;
      for (const auto& [k, v] : runs[i].first.config)
        if (shared_key(k) && runs[j].first.config_value(k) != v) diff.push_back(k);
      if (!diff.empty()) {
        std::string keys;
        for (const auto& k : diff) keys += (keys.empty() ? "" : ", ") + k;
        summary.warnings.push_back("incompatible settings: " + runs[i].second.string() +
                                   " differs from " + runs[j].second.string() + " in " + keys);
        incompatible[i] = true;
      }
      break;
    }
  }

  std::ostringstream table;
  table << "| model | dataset | M | label rate | repeats | accuracy (%) | online share |\n"
        << "|---|---|---|---|---|---|---|\n";
  std::ostringstream timing;
  timing << "run,model,dataset,online_ms,offline_ms,online_fraction,offline_fraction\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunReport& r = runs[i].first;
    const double on = r.online_ms(), off = r.offline_ms(), total = on + off;
    const double on_frac = total > 0.0 ? on / total : 0.0;
    const double off_frac = total > 0.0 ? off / total : 1.0;
    table << "| " << r.model << (incompatible[i] ? " (!)" : "") << " | " << r.dataset << " | "
          << r.config_value("partition.m_clients") << " | " << r.config_value("split.train")
          << " | " << r.repeats.size() << " | " << percent(r.mean) << " ± " << percent(r.std)
          << " | " << percent(on_frac) << "% |\n";
    timing << runs[i].second.string() << ',' << r.model << ',' << r.dataset << ','
           << fmt_double(on) << ',' << fmt_double(off) << ',' << fmt_double(on_frac) << ','
           << fmt_double(off_frac) << '\n';
  }

  std::vector<std::size_t> order(runs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = runs[x].first;
    const auto& b = runs[y].first;
    if (a.model != b.model) return model_rank(parse_model(a.model)) < model_rank(parse_model(b.model));
    if (a.dataset != b.dataset) return a.dataset < b.dataset;
    return std::stod(a.config_value("split.train")) < std::stod(b.config_value("split.train"));
  });
  std::ostringstream label_rate;
  label_rate << "model,dataset,label_rate,mean,std,n_repeats\n";
  for (auto i : order) {
    const RunReport& r = runs[i].first;
    label_rate << r.model << ',' << r.dataset << ',' << r.config_value("split.train") << ','
               << fmt_double(r.mean) << ',' << fmt_double(r.std) << ',' << r.repeats.size()
               << '\n';
  }

  fs::create_directories(out_dir);
  write_text(out_dir / "table.md", table.str());
  write_text(out_dir / "timing.csv", timing.str());
  write_text(out_dir / "label_rate.csv", label_rate.str());

  out << table.str();
  for (const auto& w : summary.warnings) out << "warning: " << w << '\n';
  out << "wrote table.md, timing.csv, label_rate.csv to " << out_dir.string() << '\n';
  return summary;
}

}  // namespace fedmpa
