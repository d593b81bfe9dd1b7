#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tango/config.hpp"

namespace tango::experiment {

// Small statistics helpers shared by commands and tests.
double median(std::vector<double> v);
double last_k_mean(const std::vector<double>& v, int k);
// 90%-of-final bar that stays reachable for negative finals.
double robust_threshold(double final_reward);
// First episode index whose reward meets the threshold; v.size() if never.
int episodes_to_reach(const std::vector<double>& rewards, double threshold);

env::Environment make_env(const config::ExperimentConfig& cfg, int chunk_size, uint64_t seed);

// Combined agent state persisted by training: policy checkpoint followed by
// the feature-scaler ranges. Loadable with bit-exact round trip.
struct AgentCheckpoint {
    nn::PolicyParameters params;
    graph::FeatureScaler scaler;
};
void save_agent(const AgentCheckpoint& ck, const std::string& path);
AgentCheckpoint load_agent(const std::string& path);

// Known agent labels: tango, gnn_reinforce, dqn, double_dqn, dueling_dqn,
// reinforce.
const std::vector<std::string>& all_agents();

// Commands. Each writes a "<command>_manifest.json" under
// cfg.run.output_dir before any result file, then its artifacts. Wall-clock
// measurements go to timing.log (plain text, excluded from the determinism
// contract); all CSV/JSON outputs are byte-reproducible from the manifest.
void cmd_train(const config::ExperimentConfig& cfg, const std::string& agent_name);
void cmd_eval(const config::ExperimentConfig& cfg, const std::string& checkpoint_path);
void cmd_explain(const config::ExperimentConfig& cfg, const std::string& checkpoint_path,
                 const std::optional<env::NetworkState>& state);
void cmd_robustness(const config::ExperimentConfig& cfg, const std::string& checkpoint_path);
void cmd_scalability(const config::ExperimentConfig& cfg);
void cmd_bench(const config::ExperimentConfig& cfg, const std::vector<std::string>& agents);

// Re-runs the command recorded in a manifest file, writing into out_dir
// (defaults to the manifest config's output_dir).
void rerun_from_manifest(const std::string& manifest_path,
                         const std::string& out_dir_override = "");

}  // namespace tango::experiment
