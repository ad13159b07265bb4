#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "experiments.hpp"

namespace {

int run_experiment(const std::string& name,
                   const std::vector<std::string>& param_args,
                   const std::string& config_path, std::uint64_t seed, bool fast,
                   const std::string& out_dir, bool svg) {
  const auto& exp = qsim::find_experiment(name);

  std::map<std::string, std::string> overrides;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::invalid_argument("cannot open config file " + config_path);
    qsim::json j = qsim::json::parse(in);
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "seed") continue;
      if (it.value().is_string())
        overrides[it.key()] = it.value().get<std::string>();
      else
        overrides[it.key()] = it.value().dump();
    }
    if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
  }
  // command-line flags override file values
  for (const auto& kv : param_args) {
    const auto pos = kv.find('=');
    if (pos == std::string::npos)
      throw std::invalid_argument("parameter must look like name=value: " + kv);
    overrides[kv.substr(0, pos)] = kv.substr(pos + 1);
  }

  qsim::Config cfg = qsim::resolve_config(exp, overrides, seed, fast);
  cfg.out_dir = out_dir;
  cfg.want_svg = svg;

  qsim::ResultTable table = exp.run(cfg);
  table.metadata["experiment"] = exp.name;
  table.metadata["seed"] = std::to_string(seed);
  table.metadata["preset"] = fast ? "fast" : "full";
  table.metadata["version"] = qsim::version();

  std::filesystem::create_directories(out_dir);
  const std::string base = out_dir + "/" + exp.name;
  {
    std::ofstream out(base + ".csv", std::ios::binary);
    out << table.to_csv();
  }
  std::cout << "wrote " << base << ".csv (" << table.rows.size() << " rows)\n";
  if (svg) {
    const std::string chart = table.to_svg();
    if (!chart.empty()) {
      std::ofstream out(base + ".svg", std::ios::binary);
      out << chart;
      std::cout << "wrote " << base << ".svg\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"experiment runner for the cavity-network toolkit"};
  app.require_subcommand(1);

  auto* list_cmd = app.add_subcommand("list", "show the experiment registry");
  bool as_json = false;
  list_cmd->add_flag("--json", as_json, "emit the registry as JSON");

  auto* run_cmd = app.add_subcommand("run", "run one experiment");
  std::string name, config_path, out_dir = ".";
  std::vector<std::string> params;
  std::uint64_t seed = 1;
  bool fast = false, full = false, svg = false;
  run_cmd->add_option("experiment", name, "registered experiment name")->required();
  run_cmd->add_option("--param,-p", params, "override as name=value (repeatable)");
  run_cmd->add_option("--config", config_path, "JSON file with parameter overrides");
  run_cmd->add_option("--seed", seed, "random seed");
  run_cmd->add_option("--out", out_dir, "output directory");
  run_cmd->add_flag("--fast", fast, "reduced preset for quick runs");
  run_cmd->add_flag("--full", full, "full-size preset (default)");
  run_cmd->add_flag("--svg", svg, "also write a line chart");
  run_cmd->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (list_cmd->parsed()) {
      if (as_json) {
        std::cout << qsim::registry_json().dump(2) << "\n";
      } else {
        for (const auto& e : qsim::registry()) {
          std::printf("%-26s %s\n", e.name.c_str(), e.summary.c_str());
          std::printf("%-26s   reproduces: %s\n", "", e.reproduces.c_str());
        }
      }
      return 0;
    }
    // collect stray "--name value" pairs passed after the experiment name
    auto extras = run_cmd->remaining();
    for (std::size_t k = 0; k < extras.size(); ++k) {
      std::string key = extras[k];
      if (key.rfind("--", 0) == 0) key = key.substr(2);
      if (k + 1 >= extras.size())
        throw std::invalid_argument("dangling parameter flag: " + extras[k]);
      params.push_back(key + "=" + extras[++k]);
    }
    return run_experiment(name, params, config_path, seed, !full && fast, out_dir,
                          svg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const cavkit::numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
}
