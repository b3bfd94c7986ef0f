// tdcp: command-line driver for sectorwise eigenbasis propagation.
//
//   tdcp --problem problem2 --N 20 --K 20 --dx 0.2 --T 12 --dt 0.02 --out run2
//   tdcp --config run.cfg --mode converge --sweep dt --values 0.2,0.1,0.05
//
// Exit status: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "tdcp/tdcp.hpp"

namespace {

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr FlagSpec kFlags[] = {
    {"--problem", "problem", "problem1:n, problem2 or problem3"},
    {"--xmin", "xmin", "left end of the domain"},
    {"--xmax", "xmax", "right end of the domain"},
    {"--nx", "nx", "number of mesh steps"},
    {"--dx", "dx", "mesh step width (must divide the domain)"},
    {"--T", "T", "final time; a 'tau' suffix counts laser periods"},
    {"--K", "K", "number of time sectors"},
    {"--N", "N", "basis size per sector"},
    {"--dt", "dt", "propagator substep; must divide T/K"},
    {"--order", "order", "propagator order, 2 or 4"},
    {"--mode", "mode", "solve, eigen, sectors, quadcheck, converge or compare-cn"},
    {"--out", "out", "output directory"},
    {"--snap", "snap", "comma-separated snapshot times"},
    {"--cp-substeps", "cp_substeps", "CP steps per mesh step in the eigensolver"},
    {"--tol-E", "tol_E", "relative eigenvalue tolerance"},
    {"--ref-dt-divisor", "ref_dt_divisor", "self-reference dt divisor"},
    {"--ref-N", "ref_N", "self-reference basis size (default N+10)"},
    {"--ref-dx-divisor", "ref_dx_divisor", "self-reference mesh refinement"},
    {"--sweep", "sweep", "converge axis: dt, N, dx or K"},
    {"--values", "values", "comma-separated sweep values"},
    {"--cn-dx", "cn_dx", "Crank-Nicolson grid spacing"},
    {"--cn-dt", "cn_dt", "Crank-Nicolson time step"},
    {"--seed", "seed", "random seed for quadcheck"},
    {"--samples", "samples", "quadcheck sample count"},
    {"--eigen-t", "eigen_t", "time at which eigen mode freezes the potential"},
    {"--norm-log", "norm_log", "write norms.csv with the per-substep norm"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sectorwise CP eigenbasis solver for the 1D time-dependent Schroedinger equation"};
  std::string config_path;
  app.add_option("--config", config_path, "key=value configuration file; flags override it");

  std::vector<CLI::Option*> options;
  std::vector<std::string> storage(std::size(kFlags));
  for (std::size_t i = 0; i < std::size(kFlags); ++i) {
    options.push_back(app.add_option(kFlags[i].flag, storage[i], kFlags[i].help));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  tdcp::RunConfig config;
  try {
    if (!config_path.empty()) tdcp::apply_config_file(config, config_path);
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (options[i]->count() > 0) tdcp::apply_setting(config, kFlags[i].key, storage[i]);
    }
    tdcp::execute(config, std::cout);
  } catch (const tdcp::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
