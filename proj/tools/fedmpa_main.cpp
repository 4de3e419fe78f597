// Command-line entry point: run, sweep, report, partition, gradcheck.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fedmpa/data.hpp"
#include "fedmpa/error.hpp"
#include "fedmpa/experiment.hpp"
#include "fedmpa/gradcheck.hpp"
#include "fedmpa/partition.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

fs::path default_run_dir(const fs::path& config) {
  return fs::path("runs") / config.stem();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subgraph federated learning simulator"};
  app.require_subcommand(1);

  std::string config, out, axis, values, dataset;
  std::vector<std::string> dirs;
  std::size_t m = 3, probes = 100;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "Run one experiment config");
  run->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Run directory (default runs/<config name>)");

  auto* sweep = app.add_subcommand("sweep", "Sweep one axis of a config");
  sweep->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--axis", axis,
                    "dropout | lr | hidden_dim | beta_gamma | label_rate | m_clients")
      ->required();
  sweep->add_option("--values", values, "Comma-separated values (beta:gamma pairs for beta_gamma)")
      ->required();
  sweep->add_option("--out", out, "Sweep directory (default runs/<config name>_<axis>)");

  auto* report = app.add_subcommand("report", "Compare finished runs");
  report->add_option("dirs", dirs, "Run directories")->required();
  report->add_option("--out", out, "Output directory (default report)");

  auto* part = app.add_subcommand("partition", "Partition a dataset and dump the assignment");
  part->add_option("--dataset", dataset, "Dataset directory")->required();
  part->add_option("--m", m, "Number of clients")->required();
  part->add_option("--seed", seed, "Partition seed");
  part->add_option("--out", out, "Output file (default stdout)");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss path");
  grad->add_option("--probes", probes, "Probes per loss path");
  grad->add_option("--seed", seed, "Problem seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(fedmpa::ErrorKind::Usage);
  }

  try {
    if (*run) {
      fedmpa::cmd_run(config, out.empty() ? default_run_dir(config) : fs::path(out), std::cout);
    } else if (*sweep) {
      fs::path dir = out.empty() ? fs::path(default_run_dir(config).string() + "_" + axis) : fs::path(out);
      fedmpa::cmd_sweep(config, axis, split_list(values), dir, std::cout);
    } else if (*report) {
      std::vector<fs::path> paths(dirs.begin(), dirs.end());
      fedmpa::cmd_report(paths, out.empty() ? fs::path("report") : fs::path(out), std::cout);
    } else if (*part) {
      const fedmpa::Dataset ds = fedmpa::load_dataset(dataset);
      const fedmpa::Partition p = fedmpa::partition_louvain_balanced(ds.graph, m, seed);
      if (out.empty()) {
        fedmpa::write_partition(std::cout, p);
      } else {
        fedmpa::write_partition(out, p);
      }
      std::cerr << "client sizes:";
      for (const auto& c : p.clients) std::cerr << ' ' << c.global_ids.size();
      std::cerr << "  dropped edges: " << fedmpa::count_dropped_edges(ds.graph, p) << '/'
                << ds.graph.n_edges() << '\n';
    } else if (*grad) {
      fedmpa::GradCheckOptions opts;
      opts.probes = probes;
      if (grad->count("--seed")) opts.seed = seed;
      bool ok = true;
      for (const auto& r : fedmpa::run_gradcheck(opts)) {
        std::printf("%-22s probes %3zu  redrawn %2zu  max rel err %.3e  %s\n", r.path.c_str(),
                    r.probes, r.redrawn, r.max_rel_error, r.passed() ? "ok" : "FAIL");
        ok = ok && r.passed();
      }
      if (!ok) return static_cast<int>(fedmpa::ErrorKind::Numeric);
    }
  } catch (const fedmpa::Error& e) {
    std::cerr << "error (" << fedmpa::to_string(e.kind()) << "): " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
