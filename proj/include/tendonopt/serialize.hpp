#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tendonopt/chain.hpp"
#include "tendonopt/cooptim.hpp"
#include "tendonopt/net.hpp"
#include "tendonopt/solver.hpp"

namespace tendonopt {

// All *_from_json readers are strict: unknown keys raise
// std::invalid_argument naming the key, missing keys take the documented
// defaults, and the result is validated.

nlohmann::json design_to_json(const DesignParams& d);
DesignParams design_from_json(const nlohmann::json& j,
                              const std::string& path = "design");

nlohmann::json task_to_json(const TaskSpec& t);
TaskSpec task_from_json(const nlohmann::json& j,
                        const std::string& path = "task");

nlohmann::json state_to_json(const ChainState& s);
ChainState state_from_json(const nlohmann::json& j,
                           const std::string& path = "state");

nlohmann::json solver_to_json(const SolverConfig& c);
SolverConfig solver_from_json(const nlohmann::json& j,
                              const std::string& path = "solver");

nlohmann::json train_to_json(const TrainConfig& c);
TrainConfig train_from_json(const nlohmann::json& j,
                            const std::string& path = "train");

// Checkpoint: layer sizes, activation tag, flat parameter array, init seed.
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j,
                          const std::string& path = "network");

nlohmann::json transition_to_json(const Transition& t);
Transition transition_from_json(const nlohmann::json& j,
                                const std::string& path = "transition");

std::string transitions_to_jsonl(const std::vector<Transition>& transitions);
std::vector<Transition> transitions_from_jsonl(const std::string& text);

nlohmann::json eval_to_json(const EvalResult& r);
nlohmann::json epoch_record_to_json(const EpochRecord& r);

// Experiment configuration: the single-file CLI input.
struct ExperimentConfig {
  DesignParams design = DesignParams::initial();
  std::vector<TaskSpec> tasks;
  SolverConfig solver;
  TrainConfig train;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);

// Reads and strictly parses a config file. Parse errors carry the line
// position reported by the JSON parser; semantic errors name the key.
ExperimentConfig parse_config(const std::filesystem::path& file);

std::string read_text_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, const std::string& text);

}  // namespace tendonopt
