#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace xxzr::cli;
  CLI::App app{"Open XXZ chain with reflection: identities, flows, separated variables and theta solutions"};
  app.require_subcommand(1, 1);
  std::string config, out;
  std::uint64_t seed = 0;
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "random seed (overrides seed)");
  }
  CLI11_PARSE(app, argc, argv);
  std::string cmd = app.get_subcommands().front()->get_name();
  bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
  try {
    auto c = load_config(config);
    if (seed_given) c.seed = seed;
    if (!out.empty()) c.output_dir = out;
    auto r = run_command(cmd, c, c.output_dir);
    for (auto& ch : r.report["checks"])
      std::cout << (ch["pass"].get<bool>() ? "PASS " : "FAIL ") << ch["name"].get<std::string>() << "  "
                << ch["residual"].dump() << " " << ch["comparison"].get<std::string>() << " " << ch["tolerance"].dump() << "\n";
    if (r.report.contains("error"))
      std::cerr << "error in stage " << r.report["error"]["stage"].get<std::string>() << ": "
                << r.report["error"]["message"].get<std::string>() << "\n";
    std::cout << cmd << ": " << r.report["status"].get<std::string>() << " (" << c.output_dir << "/" << cmd << ".json)\n";
    return r.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
}
