#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ldpinf/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Influence-based estimates of how randomized-response LDP changes test loss"};
  app.set_version_flag("--version", std::string(ldpinf::kVersion));

  std::string config_path;
  std::optional<std::string> output_dir, format, oracle, ihvp, mode, correction, scaling;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  app.add_option("--config", config_path, "SweepConfig JSON document")->required();
  app.add_option("--output-dir", output_dir, "Directory for report files");
  app.add_option("--format", format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
  app.add_option("--threads", threads, "Worker threads for oracle retraining")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Root seed");
  app.add_option("--oracle", oracle, "off, on or subsample:<n>");
  app.add_option("--ihvp", ihvp, "explicit, cg or stochastic");
  app.add_option("--mode", mode, "features, labels or both");
  app.add_option("--correction", correction, "none or flc");
  app.add_option("--scaling", scaling, "paper or exact");
  app.add_flag("--quiet", quiet, "Suppress warnings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ldpinf::set_warnings_enabled(!quiet);
    auto config = ldpinf::SweepConfig::load(config_path);
    if (seed) {
      config.seed = *seed;
      config.train.seed = *seed;
      config.ihvp.seed = *seed;
      if (config.dataset.synthetic) config.dataset.synthetic->seed = *seed;
    }
    if (output_dir) config.output_dir = *output_dir;
    if (format) config.format = ldpinf::parse_report_format(*format);
    if (threads) config.threads = *threads;
    if (oracle) config.oracle = ldpinf::OracleMode::parse(*oracle);
    if (ihvp) config.ihvp.method = ldpinf::parse_ihvp_method(*ihvp);
    if (mode) config.mode = ldpinf::parse_perturb_mode(*mode);
    if (correction) config.correction = ldpinf::parse_correction(*correction);
    if (scaling) config.scaling = ldpinf::parse_scaling_mode(*scaling);

    const auto report = ldpinf::run(config);
    for (const auto& path : ldpinf::emit_report(config, report, config.output_dir, config.format)) {
      std::cout << path.string() << '\n';
    }
    for (const auto& g : report.groups) {
      std::cout << "group " << g.group << " k=" << g.k << " |S|=" << g.group_size;
      if (g.mae) std::cout << " mae=" << *g.mae;
      if (g.rho) std::cout << " rho=" << *g.rho;
      std::cout << '\n';
    }
    return 0;
  } catch (const ldpinf::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ldpinf::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ldpinf::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
