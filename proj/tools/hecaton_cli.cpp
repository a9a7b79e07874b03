// Command-line front end: runs experiment configs, the functional
// verification suite, and the communication cost-table printer.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "hecaton/experiments.hpp"

namespace {

bool parse_grid(const std::string& text, std::pair<int, int>& out) {
  const std::size_t x = text.find('x');
  if (x == std::string::npos) return false;
  const int r = std::atoi(text.substr(0, x).c_str());
  const int c = std::atoi(text.substr(x + 1).c_str());
  if (r < 1 || c < 1) return false;
  out = {r, c};
  return true;
}

int cmd_run(const hecaton::config::ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  using namespace hecaton;

  const std::vector<report::ReportRow> rows = experiments::run_experiment(spec);
  fs::create_directories(spec.out_dir);
  if (spec.format == "csv" || spec.format == "both") {
    const fs::path path = fs::path(spec.out_dir) / (spec.id + ".csv");
    report::write_text_file(path.string(), report::to_csv(rows));
    std::cout << "wrote " << path.string() << "\n";
  }
  if (spec.format == "json" || spec.format == "both") {
    const fs::path path = fs::path(spec.out_dir) / (spec.id + ".json");
    report::write_text_file(path.string(), report::to_json(spec.id, rows, spec.seed));
    std::cout << "wrote " << path.string() << "\n";
  }
  std::size_t infeasible = 0;
  for (const auto& r : rows)
    if (!r.feasible) ++infeasible;
  std::cout << rows.size() << " rows, " << infeasible << " flagged infeasible\n";
  return 0;
}

int cmd_verify(const hecaton::experiments::VerifyOptions& opt) {
  const auto summary = hecaton::experiments::verify_engine(opt, &std::cout);
  std::cout << summary.checks << " checks, " << summary.failures << " failures\n";
  if (!summary.ok()) {
    std::cout << "first failure: " << summary.first_failure() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chiplet tensor-parallel training: cost model and engine checks"};
  app.require_subcommand(1);

  std::string spec_path, out_override, format_override;
  std::uint64_t seed_override = 0;
  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("spec", spec_path, "Experiment config file")->required();
  run->add_option("--out", out_override, "Output directory (overrides the config)");
  run->add_option("--format", format_override, "Report format (overrides the config)")
      ->check(CLI::IsMember({"csv", "json", "both"}));
  run->add_option("--seed", seed_override, "Seed recorded in reports (overrides the config)");

  std::vector<std::string> grid_args;
  std::vector<std::uint64_t> seed_args;
  std::string fault_label;
  bool no_fd = false;
  CLI::App* verify =
      app.add_subcommand("verify", "Check the distributed engine against the dense reference");
  verify->add_option("--grids", grid_args, "Die grids as RxC (default: 1x1 2x2 2x4 4x4)");
  verify->add_option("--seeds", seed_args, "Random seeds (default: 1 2 3)");
  verify->add_option("--inject-fault", fault_label,
                     "Skip the reduce-scatter with this exact label, e.g. "
                     "fwd_ffn/down/scatter_out (negative control; the run must "
                     "fail naming the phase)");
  verify->add_flag("--no-finite-difference", no_fd, "Skip gradient finite-difference checks");

  std::vector<std::int64_t> n_values;
  CLI::App* table = app.add_subcommand(
      "table2", "Print the per-phase NoP cost matrix (closed forms and numeric values)");
  table->add_option("--N", n_values, "Die counts (default: 4 16 64 256 1024)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      hecaton::config::ExperimentSpec spec = hecaton::config::parse_experiment_file(spec_path);
      if (run->count("--out")) spec.out_dir = out_override;
      if (run->count("--format")) spec.format = format_override;
      if (run->count("--seed")) spec.seed = seed_override;
      return cmd_run(spec);
    }
    if (verify->parsed()) {
      hecaton::experiments::VerifyOptions opt;
      if (!grid_args.empty()) {
        opt.grids.clear();
        for (const std::string& g : grid_args) {
          std::pair<int, int> rc;
          if (!parse_grid(g, rc)) {
            std::cerr << "bad grid '" << g << "': expected RxC with positive sides\n";
            return 2;
          }
          opt.grids.push_back(rc);
        }
      }
      if (!seed_args.empty()) opt.seeds = seed_args;
      opt.fault_label = fault_label;
      opt.finite_difference = !no_fd;
      return cmd_verify(opt);
    }
    if (table->parsed()) {
      if (n_values.empty()) n_values = {4, 16, 64, 256, 1024};
      hecaton::experiments::print_cost_table(std::cout, n_values);
      return 0;
    }
  } catch (const hecaton::config::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
