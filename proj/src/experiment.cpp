#include "tango/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tango::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string now_utc() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path.string());
    return out;
}

void write_manifest(const config::ExperimentConfig& cfg, const std::string& command,
                    const std::map<std::string, std::string>& args) {
    fs::create_directories(cfg.run.output_dir);
    config::RunManifest m;
    m.command = command;
    m.code_version = config::code_version();
    m.created_utc = now_utc();
    m.args = args;
    m.config = cfg;
    auto out = open_out(fs::path(cfg.run.output_dir) / (command + "_manifest.json"));
    out << config::manifest_to_json(m) << "\n";
}

std::ofstream open_timing(const config::ExperimentConfig& cfg) {
    std::ofstream out(fs::path(cfg.run.output_dir) / "timing.log", std::ios::app);
    if (!out) throw std::runtime_error("cannot open timing.log");
    return out;
}

void check_compatible(const AgentCheckpoint& ck, const env::Environment& e,
                      const std::string& path) {
    if (ck.params.n_actions != static_cast<int>(e.actions().actions.size()))
        throw std::runtime_error("checkpoint/architecture mismatch: " + path + " expects " +
                                 std::to_string(ck.params.n_actions) + " actions, environment has " +
                                 std::to_string(e.actions().actions.size()));
}

struct GraphRun {
    std::vector<double> base_rewards;   // per episode
    std::vector<double> wall_clock;
    AgentCheckpoint ck;
    agent::TrainResult full;
};

GraphRun run_graph_agent(const config::ExperimentConfig& cfg, bool with_reasoner, uint64_t seed,
                         bool record_steps) {
    env::Environment e = make_env(cfg, cfg.run.chunk_size, seed);
    agent::TrainConfig tc = cfg.train;
    tc.seed = seed;
    const reasoner::RuleBase rules = cfg.build_rule_base();
    agent::TrainResult r = agent::train(e, tc, cfg.activation, with_reasoner ? &rules : nullptr,
                                        cfg.explain_shaping, record_steps);
    GraphRun out;
    for (const auto& ep : r.episodes) {
        out.base_rewards.push_back(ep.total_base_reward);
        out.wall_clock.push_back(ep.wall_clock_s);
    }
    out.ck = {r.params, r.scaler};
    out.full = std::move(r);
    return out;
}

struct FlatRun {
    std::vector<double> rewards;
    std::vector<double> wall_clock;
};

FlatRun run_flat_agent(const config::ExperimentConfig& cfg, const std::string& name,
                       uint64_t seed) {
    env::Environment e = make_env(cfg, cfg.run.chunk_size, seed);
    FlatRun out;
    if (name == "reinforce") {
        baselines::ReinforceConfig rc = cfg.reinforce;
        rc.seed = seed;
        const auto r = baselines::train_vanilla_reinforce(e, rc);
        for (const auto& ep : r.episodes) {
            out.rewards.push_back(ep.total_reward);
            out.wall_clock.push_back(ep.wall_clock_s);
        }
        return out;
    }
    baselines::DqnVariant variant;
    if (name == "dqn")
        variant = baselines::DqnVariant::Dqn;
    else if (name == "double_dqn")
        variant = baselines::DqnVariant::Double;
    else if (name == "dueling_dqn")
        variant = baselines::DqnVariant::Dueling;
    else
        throw config::ConfigError("unknown agent: " + name);
    baselines::DqnConfig dc = cfg.dqn;
    dc.seed = seed;
    const auto r = baselines::train_dqn_family(e, variant, dc);
    for (const auto& ep : r.episodes) {
        out.rewards.push_back(ep.total_reward);
        out.wall_clock.push_back(ep.wall_clock_s);
    }
    return out;
}

agent::EvalResult eval_checkpoint(const config::ExperimentConfig& cfg, const AgentCheckpoint& ck,
                                  double sigma, int trials, uint64_t seed) {
    env::Environment e = make_env(cfg, cfg.run.chunk_size, seed);
    check_compatible(ck, e, "checkpoint");
    return agent::evaluate(ck.params, cfg.activation, ck.scaler, e, trials, sigma, seed);
}

void write_eval_outputs(const config::ExperimentConfig& cfg, const agent::EvalResult& res,
                        double sigma, int trials) {
    const fs::path dir = cfg.run.output_dir;
    {
        auto out = open_out(dir / "eval_steps.csv");
        out << "trial,step,action_prbs,traffic,served,f,reward,in_band\n";
        for (const auto& s : res.steps)
            out << s.trial << "," << s.step << "," << s.action_prbs << "," << fmt(s.traffic)
                << "," << fmt(s.served) << "," << fmt(s.f) << "," << fmt(s.reward) << ","
                << (s.in_band ? 1 : 0) << "\n";
    }
    std::vector<double> gaps;
    gaps.reserve(res.steps.size());
    for (const auto& s : res.steps) gaps.push_back(s.f);
    std::sort(gaps.begin(), gaps.end());
    json cdf = json::array();
    const int points = 20;
    for (int i = 0; i <= points; ++i) {
        const double p = static_cast<double>(i) / points;
        const size_t idx =
            std::min(gaps.size() - 1, static_cast<size_t>(std::ceil(p * (gaps.size() - 1))));
        cdf.push_back({{"gap", gaps[idx]}, {"p", p}});
    }
    json summary = {{"noise_sigma", sigma},
                    {"trials", trials},
                    {"steps", res.steps.size()},
                    {"in_band_accuracy", res.in_band_accuracy},
                    {"over_fraction", res.over_fraction},
                    {"under_fraction", res.under_fraction},
                    {"gap_cdf", cdf}};
    auto out = open_out(dir / "eval_summary.json");
    out << summary.dump(2) << "\n";
}

}  // namespace

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty vector");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double last_k_mean(const std::vector<double>& v, int k) {
    if (v.empty() || k < 1) throw std::invalid_argument("last_k_mean: bad arguments");
    const size_t take = std::min<size_t>(k, v.size());
    double sum = 0.0;
    for (size_t i = v.size() - take; i < v.size(); ++i) sum += v[i];
    return sum / take;
}

double robust_threshold(double final_reward) {
    return final_reward - 0.1 * std::fabs(final_reward);
}

int episodes_to_reach(const std::vector<double>& rewards, double threshold) {
    for (size_t i = 0; i < rewards.size(); ++i)
        if (rewards[i] >= threshold) return static_cast<int>(i);
    return static_cast<int>(rewards.size());
}

env::Environment make_env(const config::ExperimentConfig& cfg, int chunk_size, uint64_t seed) {
    return env::Environment(cfg.cell, cfg.reward, cfg.traffic,
                            env::build_action_space(chunk_size, cfg.cell.n_prbs),
                            cfg.run.steps_per_episode, seed);
}

void save_agent(const AgentCheckpoint& ck, const std::string& path) {
    nn::save_checkpoint(ck.params, path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot append scaler to checkpoint: " + path);
    char buf[64];
    auto hex = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%a", v);
        return std::string(buf);
    };
    out << "scaler " << (ck.scaler.initialized() ? 1 : 0) << "\n";
    const Eigen::Vector4d mins = ck.scaler.mins(), maxs = ck.scaler.maxs();
    out << "min " << hex(mins[0]) << " " << hex(mins[1]) << " " << hex(mins[2]) << " "
        << hex(mins[3]) << "\n";
    out << "max " << hex(maxs[0]) << " " << hex(maxs[1]) << " " << hex(maxs[2]) << " "
        << hex(maxs[3]) << "\n";
}

AgentCheckpoint load_agent(const std::string& path) {
    AgentCheckpoint ck;
    ck.params = nn::load_checkpoint(path);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string tok;
    while (in >> tok && tok != "scaler") {
    }
    if (tok != "scaler") throw std::runtime_error("checkpoint lacks scaler section: " + path);
    int initialized = 0;
    in >> initialized;
    Eigen::Vector4d mins, maxs;
    auto read4 = [&](const char* tag, Eigen::Vector4d& v) {
        std::string t;
        in >> t;
        if (t != tag) throw std::runtime_error("malformed scaler section in " + path);
        for (int i = 0; i < 4; ++i) {
            std::string s;
            if (!(in >> s)) throw std::runtime_error("truncated scaler section in " + path);
            v[i] = std::strtod(s.c_str(), nullptr);
        }
    };
    read4("min", mins);
    read4("max", maxs);
    if (initialized) ck.scaler.set_range(mins, maxs);
    return ck;
}

const std::vector<std::string>& all_agents() {
    static const std::vector<std::string> agents = {"tango",       "gnn_reinforce", "dqn",
                                                    "double_dqn",  "dueling_dqn",   "reinforce"};
    return agents;
}

void cmd_train(const config::ExperimentConfig& cfg, const std::string& agent_name) {
    if (std::find(all_agents().begin(), all_agents().end(), agent_name) == all_agents().end())
        throw config::ConfigError("unknown agent: " + agent_name);
    write_manifest(cfg, "train", {{"agent", agent_name}});
    const fs::path dir = cfg.run.output_dir;
    auto timing = open_timing(cfg);

    for (uint64_t seed : cfg.run.seeds) {
        const std::string suffix = agent_name + "_seed" + std::to_string(seed);
        if (agent_name == "tango" || agent_name == "gnn_reinforce") {
            GraphRun run =
                run_graph_agent(cfg, agent_name == "tango", seed, cfg.run.record_steps);
            auto out = open_out(dir / ("episodes_" + suffix + ".csv"));
            out << "episode,total_reward,mean_shaped_bonus,loss,mean_entropy,lr\n";
            for (const auto& ep : run.full.episodes)
                out << ep.episode << "," << fmt(ep.total_reward) << ","
                    << fmt(ep.mean_shaped_bonus) << "," << fmt(ep.loss) << ","
                    << fmt(ep.mean_entropy) << "," << fmt(ep.lr) << "\n";
            save_agent(run.ck, (dir / ("checkpoint_" + suffix + ".txt")).string());
            if (cfg.run.record_steps) {
                auto sout = open_out(dir / ("steps_" + suffix + ".csv"));
                sout << "episode,step,action_prbs,traffic,served,f,reward,r_star\n";
                for (const auto& s : run.full.steps)
                    sout << s.episode << "," << s.step << "," << s.action_prbs << ","
                         << fmt(s.traffic) << "," << fmt(s.served) << "," << fmt(s.f) << ","
                         << fmt(s.reward) << "," << fmt(s.r_star) << "\n";
            }
            for (const auto& ep : run.full.episodes)
                timing << "train " << suffix << " episode=" << ep.episode
                       << " wall_clock_s=" << ep.wall_clock_s << "\n";
        } else {
            FlatRun run = run_flat_agent(cfg, agent_name, seed);
            auto out = open_out(dir / ("episodes_" + suffix + ".csv"));
            out << "episode,total_reward\n";
            for (size_t i = 0; i < run.rewards.size(); ++i)
                out << i << "," << fmt(run.rewards[i]) << "\n";
            for (size_t i = 0; i < run.rewards.size(); ++i)
                timing << "train " << suffix << " episode=" << i
                       << " wall_clock_s=" << run.wall_clock[i] << "\n";
        }
    }
}

void cmd_eval(const config::ExperimentConfig& cfg, const std::string& checkpoint_path) {
    write_manifest(cfg, "eval", {{"checkpoint", checkpoint_path}});
    const AgentCheckpoint ck = load_agent(checkpoint_path);
    const double sigma = cfg.run.noise_sigmas.empty() ? 0.0 : cfg.run.noise_sigmas.front();
    const agent::EvalResult res =
        eval_checkpoint(cfg, ck, sigma, cfg.run.eval_trials, cfg.run.seeds.front());
    write_eval_outputs(cfg, res, sigma, cfg.run.eval_trials);
}

void cmd_explain(const config::ExperimentConfig& cfg, const std::string& checkpoint_path,
                 const std::optional<env::NetworkState>& state) {
    std::map<std::string, std::string> args = {{"checkpoint", checkpoint_path}};
    if (state) {
        args["state"] = fmt(state->s1_snr) + "," + fmt(state->s2_traffic) + "," +
                        fmt(state->s3_residual) + "," + fmt(state->s4_gap);
    }
    write_manifest(cfg, "explain", args);

    const AgentCheckpoint ck = load_agent(checkpoint_path);
    env::Environment e = make_env(cfg, cfg.run.chunk_size, cfg.run.seeds.front());
    check_compatible(ck, e, checkpoint_path);
    const env::NetworkState s = state ? *state : e.reset();
    const graph::GraphState g = graph::state_to_graph_frozen(s, ck.scaler);

    explainer::ExplainerConfig ecfg = cfg.explain_full;
    ecfg.seed = cfg.run.seeds.front();
    const explainer::Explanation ex = explainer::explain(ck.params, cfg.activation, g, ecfg);

    const auto contexts = reasoner::build_node_contexts(g, ex);
    const reasoner::RuleBase rules = cfg.build_rule_base();
    std::vector<reasoner::Firing> firings;
    const double r_star = reasoner::evaluate(rules, contexts, &firings);

    json doc = json::parse(explainer::to_json(ex));
    doc["state"] = {s.s1_snr, s.s2_traffic, s.s3_residual, s.s4_gap};
    doc["r_star"] = r_star;
    doc["rule_firings"] = json::array();
    for (const auto& f : firings)
        doc["rule_firings"].push_back({{"node", f.node}, {"rule", f.rule}, {"value", f.value}});
    auto out = open_out(fs::path(cfg.run.output_dir) / "explanation.json");
    out << doc.dump(2) << "\n";
}

void cmd_robustness(const config::ExperimentConfig& cfg, const std::string& checkpoint_path) {
    write_manifest(cfg, "robustness", {{"checkpoint", checkpoint_path}});
    const AgentCheckpoint ck = load_agent(checkpoint_path);
    const fs::path dir = cfg.run.output_dir;

    auto out = open_out(dir / "robustness.csv");
    out << "sigma,in_band_accuracy,over_fraction,under_fraction\n";
    std::vector<double> accs;
    for (double sigma : cfg.run.noise_sigmas) {
        const agent::EvalResult res =
            eval_checkpoint(cfg, ck, sigma, cfg.run.eval_trials, cfg.run.seeds.front());
        out << fmt(sigma) << "," << fmt(res.in_band_accuracy) << "," << fmt(res.over_fraction)
            << "," << fmt(res.under_fraction) << "\n";
        accs.push_back(res.in_band_accuracy);
    }
    json summary = {{"sigmas", cfg.run.noise_sigmas},
                    {"accuracies", accs},
                    {"accuracy_first", accs.front()},
                    {"accuracy_last", accs.back()},
                    {"degradation", accs.front() - accs.back()},
                    {"degrades_monotonically_endpoints", accs.back() <= accs.front()}};
    auto sout = open_out(dir / "robustness_summary.json");
    sout << summary.dump(2) << "\n";
}

void cmd_scalability(const config::ExperimentConfig& cfg) {
    write_manifest(cfg, "scalability", {});
    const fs::path dir = cfg.run.output_dir;
    const uint64_t seed = cfg.run.seeds.front();

    auto out = open_out(dir / "scalability.csv");
    out << "chunk_size,n_actions,final_reward,in_band_accuracy,episodes_to_threshold\n";
    auto timing = open_timing(cfg);
    for (int chunk : cfg.run.chunk_sizes) {
        config::ExperimentConfig sub = cfg;
        sub.run.chunk_size = chunk;
        GraphRun run = run_graph_agent(sub, /*with_reasoner=*/true, seed, false);
        const int n_actions =
            static_cast<int>(env::build_action_space(chunk, cfg.cell.n_prbs).actions.size());
        const double final_reward = last_k_mean(run.base_rewards, 10);
        const int to_thr =
            episodes_to_reach(run.base_rewards, robust_threshold(final_reward));
        env::Environment e = make_env(sub, chunk, seed);
        const agent::EvalResult res = agent::evaluate(run.ck.params, cfg.activation,
                                                      run.ck.scaler, e, cfg.run.eval_trials, 0.0,
                                                      seed);
        out << chunk << "," << n_actions << "," << fmt(final_reward) << ","
            << fmt(res.in_band_accuracy) << "," << to_thr << "\n";
        for (size_t i = 0; i < run.wall_clock.size(); ++i)
            timing << "scalability chunk=" << chunk << " episode=" << i
                   << " wall_clock_s=" << run.wall_clock[i] << "\n";
    }
}

void cmd_bench(const config::ExperimentConfig& cfg, const std::vector<std::string>& agents) {
    std::string joined;
    for (const auto& a : agents) joined += (joined.empty() ? "" : ",") + a;
    write_manifest(cfg, "bench", {{"agents", joined}});
    const fs::path dir = cfg.run.output_dir;

    auto out = open_out(dir / "bench.csv");
    out << "agent,seed,episode,reward\n";
    auto timing = open_timing(cfg);
    for (const auto& name : agents) {
        if (std::find(all_agents().begin(), all_agents().end(), name) == all_agents().end())
            throw config::ConfigError("unknown agent: " + name);
        for (uint64_t seed : cfg.run.seeds) {
            std::vector<double> rewards, wall;
            if (name == "tango" || name == "gnn_reinforce") {
                GraphRun run = run_graph_agent(cfg, name == "tango", seed, false);
                rewards = run.base_rewards;
                wall = run.wall_clock;
            } else {
                FlatRun run = run_flat_agent(cfg, name, seed);
                rewards = run.rewards;
                wall = run.wall_clock;
            }
            for (size_t i = 0; i < rewards.size(); ++i)
                out << name << "," << seed << "," << i << "," << fmt(rewards[i]) << "\n";
            for (size_t i = 0; i < wall.size(); ++i)
                timing << "bench " << name << " seed=" << seed << " episode=" << i
                       << " wall_clock_s=" << wall[i] << "\n";
        }
    }
}

void rerun_from_manifest(const std::string& manifest_path, const std::string& out_dir_override) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    config::RunManifest m = config::manifest_from_json(ss.str());
    if (!out_dir_override.empty()) m.config.run.output_dir = out_dir_override;

    auto arg = [&](const std::string& key) -> std::string {
        auto it = m.args.find(key);
        return it == m.args.end() ? std::string() : it->second;
    };
    if (m.command == "train") {
        cmd_train(m.config, arg("agent").empty() ? "tango" : arg("agent"));
    } else if (m.command == "eval") {
        cmd_eval(m.config, arg("checkpoint"));
    } else if (m.command == "explain") {
        std::optional<env::NetworkState> state;
        const std::string s = arg("state");
        if (!s.empty()) {
            env::NetworkState ns;
            if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf", &ns.s1_snr, &ns.s2_traffic,
                            &ns.s3_residual, &ns.s4_gap) != 4)
                throw config::ConfigError("manifest state must be four comma-separated numbers");
            state = ns;
        }
        cmd_explain(m.config, arg("checkpoint"), state);
    } else if (m.command == "robustness") {
        cmd_robustness(m.config, arg("checkpoint"));
    } else if (m.command == "scalability") {
        cmd_scalability(m.config);
    } else if (m.command == "bench") {
        std::vector<std::string> agents;
        std::stringstream list(arg("agents"));
        std::string item;
        while (std::getline(list, item, ',')) {
            if (!item.empty()) agents.push_back(item);
        }
        if (agents.empty()) agents = all_agents();
        cmd_bench(m.config, agents);
    } else {
        throw config::ConfigError("manifest has unknown command: " + m.command);
    }
}

}  // namespace tango::experiment
