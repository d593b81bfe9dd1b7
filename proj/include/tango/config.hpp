#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tango/agent.hpp"
#include "tango/baselines.hpp"
#include "tango/env.hpp"
#include "tango/explainer.hpp"
#include "tango/reasoner.hpp"

namespace tango::config {

// Configuration problems (bad file, unknown key, type error, invalid value).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RuleSpec {
    std::string name;
    std::string condition;
    double action = 0.0;
};

struct RunSection {
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    int steps_per_episode = 100;
    int eval_trials = 40;
    std::vector<double> noise_sigmas = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int chunk_size = 5;
    std::vector<int> chunk_sizes = {2, 5};
    std::string output_dir = "out";
    bool record_steps = false;
};

struct ExperimentConfig {
    env::CellConfig cell;
    env::RewardConfig reward;
    env::TrafficModel traffic = env::TrafficModel::defaults();
    agent::TrainConfig train;
    nn::ActivationConfig activation;
    explainer::ExplainerConfig explain_full;
    explainer::ExplainerConfig explain_shaping = explainer::ExplainerConfig::light();
    reasoner::ReasonerConfig reasoner_cfg;
    bool use_default_rules = true;
    std::vector<RuleSpec> extra_rules;
    baselines::DqnConfig dqn;
    baselines::ReinforceConfig reinforce;
    RunSection run;

    void validate() const;  // throws ConfigError
    reasoner::RuleBase build_rule_base() const;
};

ExperimentConfig from_json_text(const std::string& text);
ExperimentConfig load(const std::string& path);
std::string to_json_text(const ExperimentConfig& cfg);  // resolved snapshot

// Applies a dotted-path override like "agent.episodes=2" or
// "run.seeds=[1,2]". The value is parsed as JSON, falling back to a string.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Provenance document written before any result file. The config snapshot
// plus the command name and args is sufficient to reproduce a run exactly.
struct RunManifest {
    std::string command;
    std::string code_version;
    std::string created_utc;
    std::map<std::string, std::string> args;  // command-specific inputs
    ExperimentConfig config;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);

std::string code_version();

}  // namespace tango::config
