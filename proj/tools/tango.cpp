#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tango/experiment.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Path to a JSON config file");
    cmd->add_option("--set", flags.overrides,
                    "Override a config value, e.g. --set agent.episodes=2 (repeatable)");
    cmd->add_option("--out", flags.out_dir, "Output directory (overrides run.output_dir)");
    cmd->add_option("--seed", flags.seed, "Use a single seed (overrides run.seeds)");
}

tango::config::ExperimentConfig resolve(const CommonFlags& flags) {
    tango::config::ExperimentConfig cfg;
    if (!flags.config_path.empty()) cfg = tango::config::load(flags.config_path);
    for (const auto& o : flags.overrides) tango::config::apply_override(cfg, o);
    if (!flags.out_dir.empty()) cfg.run.output_dir = flags.out_dir;
    if (flags.seed) cfg.run.seeds = {*flags.seed};
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-RL resource allocator: training, evaluation and explanation harness"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string agent_name = "tango";
    std::string checkpoint;
    std::string state_csv;
    bool sample_state = false;
    std::optional<double> noise;
    std::optional<int> trials;
    std::optional<int> episodes;
    std::string agents_csv;
    std::string manifest_path;

    CLI::App* train = app.add_subcommand("train", "Train an agent and write checkpoints/logs");
    add_common(train, flags);
    train->add_option("--agent", agent_name, "tango | gnn_reinforce | dqn | double_dqn | "
                                             "dueling_dqn | reinforce");
    train->add_option("--episodes", episodes, "Episode count (applies to every agent type)");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a trained checkpoint");
    add_common(eval, flags);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--noise", noise, "Observation noise sigma");
    eval->add_option("--trials", trials, "Number of greedy trials");

    CLI::App* explain = app.add_subcommand("explain", "Fit the mask explainer on one state");
    add_common(explain, flags);
    explain->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    explain->add_option("--state", state_csv, "State as s1,s2,s3,s4");
    explain->add_flag("--sample", sample_state, "Sample the state from the environment");

    CLI::App* robust = app.add_subcommand("robustness", "Accuracy sweep over noise sigmas");
    add_common(robust, flags);
    robust->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

    CLI::App* scal = app.add_subcommand("scalability", "Train/evaluate per action granularity");
    add_common(scal, flags);

    CLI::App* bench = app.add_subcommand("bench", "Run all agents over shared seeds");
    add_common(bench, flags);
    bench->add_option("--agents", agents_csv, "Comma-separated agent subset");

    CLI::App* rerun = app.add_subcommand("rerun", "Re-run a command from its manifest");
    rerun->add_option("--manifest", manifest_path, "Manifest file")->required();
    rerun->add_option("--out", flags.out_dir, "Output directory override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rerun->parsed()) {
            tango::experiment::rerun_from_manifest(manifest_path, flags.out_dir);
            return 0;
        }
        tango::config::ExperimentConfig cfg = resolve(flags);
        if (episodes) {
            cfg.train.episodes = *episodes;
            cfg.dqn.episodes = *episodes;
            cfg.reinforce.episodes = *episodes;
            cfg.validate();
        }
        if (noise) cfg.run.noise_sigmas = {*noise};
        if (trials) cfg.run.eval_trials = *trials;

        if (train->parsed()) {
            tango::experiment::cmd_train(cfg, agent_name);
        } else if (eval->parsed()) {
            tango::experiment::cmd_eval(cfg, checkpoint);
        } else if (explain->parsed()) {
            std::optional<tango::env::NetworkState> state;
            if (!state_csv.empty()) {
                tango::env::NetworkState ns;
                if (std::sscanf(state_csv.c_str(), "%lf,%lf,%lf,%lf", &ns.s1_snr, &ns.s2_traffic,
                                &ns.s3_residual, &ns.s4_gap) != 4)
                    throw tango::config::ConfigError(
                        "--state must be four comma-separated numbers");
                state = ns;
            } else if (!sample_state) {
                throw tango::config::ConfigError("explain requires --state or --sample");
            }
            tango::experiment::cmd_explain(cfg, checkpoint, state);
        } else if (robust->parsed()) {
            tango::experiment::cmd_robustness(cfg, checkpoint);
        } else if (scal->parsed()) {
            tango::experiment::cmd_scalability(cfg);
        } else if (bench->parsed()) {
            std::vector<std::string> agents;
            if (agents_csv.empty()) {
                agents = tango::experiment::all_agents();
            } else {
                std::string item;
                std::stringstream ss(agents_csv);
                while (std::getline(ss, item, ','))
                    if (!item.empty()) agents.push_back(item);
            }
            tango::experiment::cmd_bench(cfg, agents);
        }
        return 0;
    } catch (const tango::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 3;
    }
}
