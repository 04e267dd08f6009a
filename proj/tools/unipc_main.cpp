// unipc: convergence studies for the UniPC sampler family on synthetic
// diffusion ODEs.
//
//   unipc run --config study.json --out results.csv [--format csv|json] [--seed 42] [--jobs N]
//   unipc fit --in results.csv
//   unipc selftest
//
// Exit codes: 0 success, 2 invalid input, 3 numeric failure (a diverged run,
// an unconverged reference, a failed fit or a failed self-test).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "selftest.hpp"
#include "unipc/errors.hpp"
#include "unipc/json_io.hpp"
#include "unipc/study.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNumeric = 3;

struct RunArgs {
  std::string config;
  std::string out;
  std::string format = "csv";
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw unipc::ValidationError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw unipc::ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void print_fits(std::ostream& out, const std::vector<unipc::ConfigFit>& fits) {
  for (const auto& f : fits) {
    out << f.solver << " (" << f.setting << ")";
    if (!f.fit) {
      out << ": no fit (" << f.message << ")\n";
      continue;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "slope=%.4f intercept=%.4f r2=%.6f", f.fit->slope,
                  f.fit->intercept, f.fit->r_squared);
    out << ": " << buf << " used=" << f.fit->used.size();
    if (!f.fit->excluded.empty()) {
      out << " excluded=";
      for (std::size_t i = 0; i < f.fit->excluded.size(); ++i) {
        out << (i ? "," : "") << f.fit->excluded[i];
      }
    }
    out << '\n';
  }
}

int cmd_run(const RunArgs& args) {
  auto study = unipc::study_config_from_json(read_json_file(args.config));
  if (args.seed) study.seed = *args.seed;

  unipc::run_study(study, {.jobs = args.jobs});

  std::ofstream out(args.out, std::ios::binary);
  if (!out) throw unipc::ValidationError("cannot write '" + args.out + "'");
  if (args.format == "json") {
    out << unipc::study_to_json(study).dump(2) << '\n';
  } else {
    unipc::write_csv(out, study.results);
  }
  out.close();
  if (!out) throw unipc::Error("failed writing '" + args.out + "'");

  print_fits(std::cout, study.fits);
  int diverged = 0;
  for (const auto& r : study.results) {
    if (r.diverged()) {
      std::cerr << "diverged: " << r.solver << " M=" << r.steps << ": " << r.failure << '\n';
      ++diverged;
    }
  }
  return diverged ? kExitNumeric : kExitOk;
}

int cmd_fit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw unipc::ValidationError("cannot open '" + path + "'");
  const auto rows = unipc::read_csv(in);
  const auto fits = unipc::fit_results(rows);
  print_fits(std::cout, fits);
  for (const auto& f : fits) {
    if (!f.fit) return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UniPC convergence-study harness"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run a convergence study from a JSON config");
  run->add_option("--config", run_args.config, "Study config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_args.out, "Output file")->required();
  run->add_option("--format", run_args.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--seed", run_args.seed, "Override the config seed");
  run->add_option("--jobs", run_args.jobs, "Worker threads (0 = hardware concurrency)");

  std::string fit_in;
  auto* fit = app.add_subcommand("fit", "Fit convergence orders to a results CSV");
  fit->add_option("--in", fit_in, "Results CSV")->required()->check(CLI::ExistingFile);

  auto* selftest = app.add_subcommand("selftest", "Run the built-in numerical cross-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*run) {
      if (run_args.jobs == 0) run_args.jobs = std::max(1u, std::thread::hardware_concurrency());
      return cmd_run(run_args);
    }
    if (*fit) return cmd_fit(fit_in);
    if (*selftest) return unipc::tools::run_selftest(std::cout) == 0 ? kExitOk : kExitNumeric;
  } catch (const unipc::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const unipc::ReferenceError& e) {
    std::cerr << "reference failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const unipc::SingularSystemError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const unipc::FitError& e) {
    std::cerr << "fit failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const unipc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}
