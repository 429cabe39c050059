/*
 * Copyright 2026 The rtxlab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line entry point for the explainer lab.
//
//   rtxlab <command> [--config file.json] [--set key.path=value ...]
//
// Commands: oracle, train, finetune, eval, sweep-labels, ablation, frontier,
// print-config. Exit status: 0 success, 1 configuration error, 2 runtime
// failure.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rtxlab/experiment.h"

int main(int argc, char** argv) {
  CLI::App app{"Contrastive real-time explainer lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string name;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"oracle", "Build label caches and the estimator error table"},
      {"train", "Contrastive pretraining of the explanation encoder"},
      {"finetune", "Fit MSE and CE heads on the trained encoder"},
      {"eval", "Score heads on the test split (metrics, curves, bound)"},
      {"sweep-labels", "Label-budget sweep against the supervised baseline"},
      {"ablation", "Compare positive selectors at a fixed label budget"},
      {"frontier", "Throughput versus ranking accuracy against samplers"},
      {"print-config", "Print the resolved configuration and exit"},
  };
  for (const auto& [cmd, help] : commands) {
    CLI::App* sub = app.add_subcommand(cmd, help);
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("-s,--set", overrides, "Override: key.path=value")
        ->take_all();
    sub->add_option("-o,--output-dir", output_dir, "Root of run directories");
    sub->add_option("-n,--name", name, "Run name");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  rtxlab::ExperimentConfig config;
  try {
    if (!output_dir.empty()) {
      overrides.insert(overrides.begin(), "output_dir=\"" + output_dir + "\"");
    }
    if (!name.empty()) {
      overrides.insert(overrides.begin(), "name=\"" + name + "\"");
    }
    config = rtxlab::LoadExperimentConfig(config_path, overrides);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
  if (command == "print-config") {
    std::cout << config.raw.dump(2) << "\n";
    return 0;
  }
  return rtxlab::RunCommand(command, config);
}
