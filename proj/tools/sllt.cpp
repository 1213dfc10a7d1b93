#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sllt/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Local limit theorem checks for additive functionals of finite Markov chains"};
  app.require_subcommand(1);

  std::string config_path;
  std::string describe_as;
  for (const auto& name : sllt::cli::experiments()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("config", config_path, "JSON experiment config")->required();
  }
  auto* describe = app.add_subcommand("describe", "print the plan and effective defaults without computing");
  describe->add_option("config", config_path, "JSON experiment config")->required();
  describe->add_option("--experiment", describe_as, "experiment to plan (overrides the config field)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sllt::cli::kUsage;
  }

  const auto* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    if (name == "describe") return sllt::cli::describe(sllt::load_config(config_path, describe_as));
    return sllt::cli::run(sllt::load_config(config_path, name));
  } catch (const sllt::Error& e) {
    std::cerr << e.what() << '\n';
    return e.is_usage_error() ? sllt::cli::kUsage : sllt::cli::kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "config: ConfigError: " << e.what() << '\n';
    return sllt::cli::kUsage;
  }
}
