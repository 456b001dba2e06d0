// tps: run one experiment from a JSON config, or list the experiments.
//
//   tps run <config.json> [--output-dir DIR]
//   tps list
//
// Exit codes: 0 ok, 2 invalid config, 3 truncation or grid guard failure,
// 4 numerical failure.

#include <CLI11.hpp>
#include <iostream>

#include "tps/cli.hpp"

namespace {

int run(const std::string& path, const std::string& output_dir) {
  using namespace tps;
  try {
    cli::RunConfig cfg = cli::parse_config_text(io::read_text(path));
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    const auto out = cli::execute(cfg);
    cli::write_outputs(cfg, out);
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
    std::cerr << cfg.experiment << ": wrote " << out.files.size() << " file(s) and manifest.json to "
              << cfg.output_dir.string() << "\n";
    return 0;
  } catch (const Error& e) {
    const int code = cli::exit_code(e);
    const char* kind = code == 2 ? "config error" : code == 3 ? "truncation/guard failure" : "numerical failure";
    std::cerr << "tps: " << kind << ": " << e.what() << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "tps: numerical failure: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triple-photon state simulator"};
  app.require_subcommand(1);
  std::string config, output_dir;
  auto* run_cmd = app.add_subcommand("run", "run the experiment described by a JSON config");
  run_cmd->add_option("config", config, "config file")->required();
  run_cmd->add_option("-o,--output-dir", output_dir, "override the config's output_dir");
  auto* list_cmd = app.add_subcommand("list", "list experiments and their config keys");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (list_cmd->parsed()) {
    std::cout << tps::cli::list_text();
    return 0;
  }
  return run(config, output_dir);
}
