#include "tango/config.hpp"

#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tango::config {

using nlohmann::json;

namespace {

// Strict section reader: every key present in the document must be claimed
// by a get() call, otherwise done() reports it by its full dotted name.
class Reader {
public:
    Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object())
            throw ConfigError("config section '" + prefix_ + "' must be an object");
    }

    template <typename T>
    void get(const std::string& key, T& target) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            target = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key '" + dotted(key) + "' has the wrong type");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& claim(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void done() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key()))
                throw ConfigError("unknown config key: " + dotted(item.key()));
        }
    }

private:
    std::string dotted(const std::string& key) const {
        return prefix_.empty() ? key : prefix_ + "." + key;
    }
    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

void read_cell(const json& j, env::CellConfig& c) {
    Reader r(j, "cell");
    r.get("n_prbs", c.n_prbs);
    r.get("bandwidth_mhz", c.bandwidth_mhz);
    r.get("scs_khz", c.scs_khz);
    r.get("prb_bandwidth_mhz", c.prb_bandwidth_mhz);
    r.get("efficiency", c.efficiency);
    r.get("snr_floor_db", c.snr_floor_db);
    r.get("snr_ceil_db", c.snr_ceil_db);
    r.get("snr_walk_std_db", c.snr_walk_std_db);
    r.get("spectral_eff_cap", c.spectral_eff_cap);
    r.done();
}

void read_reward(const json& j, env::RewardConfig& c) {
    Reader r(j, "reward");
    r.get("delta_over", c.delta_over);
    r.get("delta_under", c.delta_under);
    r.get("bonus", c.bonus);
    r.get("p_over", c.p_over);
    r.get("p_under", c.p_under);
    r.get("lambda_w", c.lambda_w);
    if (r.has("base_mode")) {
        std::string mode;
        r.get("base_mode", mode);
        if (mode == "literal")
            c.base_mode = env::RewardBaseMode::Literal;
        else if (mode == "magnitude")
            c.base_mode = env::RewardBaseMode::Magnitude;
        else
            throw ConfigError("reward.base_mode must be 'literal' or 'magnitude'");
    }
    r.done();
}

void read_traffic(const json& j, env::TrafficModel& c) {
    Reader r(j, "traffic");
    r.get("step_seconds", c.step_seconds);
    r.get("background_floor", c.background_floor);
    r.get("background_ceil", c.background_ceil);
    r.get("background_walk_std", c.background_walk_std);
    if (r.has("sources")) {
        const json& arr = r.claim("sources");
        if (!arr.is_array()) throw ConfigError("traffic.sources must be an array");
        c.sources.clear();
        int idx = 0;
        for (const auto& sj : arr) {
            env::TrafficSource s;
            Reader sr(sj, "traffic.sources[" + std::to_string(idx++) + "]");
            sr.get("burst_arrival_rate", s.burst_arrival_rate);
            sr.get("in_burst_rate", s.in_burst_rate);
            sr.get("mean_duration", s.mean_duration);
            sr.get("max_active", s.max_active);
            sr.done();
            c.sources.push_back(s);
        }
    }
    r.done();
}

void read_train(const json& j, agent::TrainConfig& c) {
    Reader r(j, "agent");
    r.get("gamma", c.gamma);
    r.get("base_lr", c.base_lr);
    r.get("entropy_weight", c.entropy_weight);
    r.get("episodes", c.episodes);
    r.get("shaping_period", c.shaping_period);
    r.get("hidden", c.hidden);
    r.get("lr_step_size", c.lr_step_size);
    r.get("lr_gamma", c.lr_gamma);
    r.done();
}

void read_explainer(const json& j, const std::string& name, explainer::ExplainerConfig& c) {
    Reader r(j, name);
    r.get("mc_samples", c.mc_samples);
    r.get("grad_steps_per_block", c.grad_steps_per_block);
    r.get("lr", c.lr);
    r.get("tol", c.tol);
    r.get("max_outer_iters", c.max_outer_iters);
    r.get("init_mu", c.init_mu);
    r.get("init_sigma", c.init_sigma);
    r.done();
}

void read_reasoner(const json& j, ExperimentConfig& cfg) {
    Reader r(j, "reasoner");
    r.get("feature_importance_threshold", cfg.reasoner_cfg.feature_importance_threshold);
    r.get("edge_importance_threshold", cfg.reasoner_cfg.edge_importance_threshold);
    r.get("uncertainty_threshold", cfg.reasoner_cfg.uncertainty_threshold);
    r.get("similarity_threshold", cfg.reasoner_cfg.similarity_threshold);
    r.get("bonus", cfg.reasoner_cfg.bonus);
    r.get("penalty", cfg.reasoner_cfg.penalty);
    r.get("use_default_rules", cfg.use_default_rules);
    if (r.has("extra_rules")) {
        const json& arr = r.claim("extra_rules");
        if (!arr.is_array()) throw ConfigError("reasoner.extra_rules must be an array");
        cfg.extra_rules.clear();
        int idx = 0;
        for (const auto& rj : arr) {
            RuleSpec spec;
            Reader rr(rj, "reasoner.extra_rules[" + std::to_string(idx++) + "]");
            rr.get("name", spec.name);
            rr.get("condition", spec.condition);
            rr.get("action", spec.action);
            rr.done();
            cfg.extra_rules.push_back(std::move(spec));
        }
    }
    r.done();
}

void read_dqn(const json& j, baselines::DqnConfig& c) {
    Reader r(j, "dqn");
    r.get("gamma", c.gamma);
    r.get("lr", c.lr);
    r.get("episodes", c.episodes);
    r.get("hidden", c.hidden);
    r.get("buffer_capacity", c.buffer_capacity);
    r.get("batch_size", c.batch_size);
    r.get("target_sync_period", c.target_sync_period);
    r.get("eps_start", c.eps_start);
    r.get("eps_end", c.eps_end);
    r.get("eps_decay_fraction", c.eps_decay_fraction);
    r.done();
}

void read_reinforce(const json& j, baselines::ReinforceConfig& c) {
    Reader r(j, "reinforce");
    r.get("gamma", c.gamma);
    r.get("lr", c.lr);
    r.get("episodes", c.episodes);
    r.get("hidden", c.hidden);
    r.done();
}

void read_run(const json& j, RunSection& c) {
    Reader r(j, "run");
    r.get("seeds", c.seeds);
    r.get("steps_per_episode", c.steps_per_episode);
    r.get("eval_trials", c.eval_trials);
    r.get("noise_sigmas", c.noise_sigmas);
    r.get("chunk_size", c.chunk_size);
    r.get("chunk_sizes", c.chunk_sizes);
    r.get("output_dir", c.output_dir);
    r.get("record_steps", c.record_steps);
    r.done();
}

json cfg_to_json(const ExperimentConfig& c) {
    json j;
    j["cell"] = {{"n_prbs", c.cell.n_prbs},
                 {"bandwidth_mhz", c.cell.bandwidth_mhz},
                 {"scs_khz", c.cell.scs_khz},
                 {"prb_bandwidth_mhz", c.cell.prb_bandwidth_mhz},
                 {"efficiency", c.cell.efficiency},
                 {"snr_floor_db", c.cell.snr_floor_db},
                 {"snr_ceil_db", c.cell.snr_ceil_db},
                 {"snr_walk_std_db", c.cell.snr_walk_std_db},
                 {"spectral_eff_cap", c.cell.spectral_eff_cap}};
    j["reward"] = {{"delta_over", c.reward.delta_over},
                   {"delta_under", c.reward.delta_under},
                   {"bonus", c.reward.bonus},
                   {"p_over", c.reward.p_over},
                   {"p_under", c.reward.p_under},
                   {"lambda_w", c.reward.lambda_w},
                   {"base_mode",
                    c.reward.base_mode == env::RewardBaseMode::Literal ? "literal" : "magnitude"}};
    json sources = json::array();
    for (const auto& s : c.traffic.sources)
        sources.push_back({{"burst_arrival_rate", s.burst_arrival_rate},
                           {"in_burst_rate", s.in_burst_rate},
                           {"mean_duration", s.mean_duration},
                           {"max_active", s.max_active}});
    j["traffic"] = {{"step_seconds", c.traffic.step_seconds},
                    {"background_floor", c.traffic.background_floor},
                    {"background_ceil", c.traffic.background_ceil},
                    {"background_walk_std", c.traffic.background_walk_std},
                    {"sources", sources}};
    j["agent"] = {{"gamma", c.train.gamma},
                  {"base_lr", c.train.base_lr},
                  {"entropy_weight", c.train.entropy_weight},
                  {"episodes", c.train.episodes},
                  {"shaping_period", c.train.shaping_period},
                  {"hidden", c.train.hidden},
                  {"lr_step_size", c.train.lr_step_size},
                  {"lr_gamma", c.train.lr_gamma}};
    auto expl = [](const explainer::ExplainerConfig& e) {
        return json{{"mc_samples", e.mc_samples},
                    {"grad_steps_per_block", e.grad_steps_per_block},
                    {"lr", e.lr},
                    {"tol", e.tol},
                    {"max_outer_iters", e.max_outer_iters},
                    {"init_mu", e.init_mu},
                    {"init_sigma", e.init_sigma}};
    };
    j["explainer"] = expl(c.explain_full);
    j["shaping_explainer"] = expl(c.explain_shaping);
    json rules = json::array();
    for (const auto& r : c.extra_rules)
        rules.push_back({{"name", r.name}, {"condition", r.condition}, {"action", r.action}});
    j["reasoner"] = {
        {"feature_importance_threshold", c.reasoner_cfg.feature_importance_threshold},
        {"edge_importance_threshold", c.reasoner_cfg.edge_importance_threshold},
        {"uncertainty_threshold", c.reasoner_cfg.uncertainty_threshold},
        {"similarity_threshold", c.reasoner_cfg.similarity_threshold},
        {"bonus", c.reasoner_cfg.bonus},
        {"penalty", c.reasoner_cfg.penalty},
        {"use_default_rules", c.use_default_rules},
        {"extra_rules", rules}};
    j["dqn"] = {{"gamma", c.dqn.gamma},
                {"lr", c.dqn.lr},
                {"episodes", c.dqn.episodes},
                {"hidden", c.dqn.hidden},
                {"buffer_capacity", c.dqn.buffer_capacity},
                {"batch_size", c.dqn.batch_size},
                {"target_sync_period", c.dqn.target_sync_period},
                {"eps_start", c.dqn.eps_start},
                {"eps_end", c.dqn.eps_end},
                {"eps_decay_fraction", c.dqn.eps_decay_fraction}};
    j["reinforce"] = {{"gamma", c.reinforce.gamma},
                      {"lr", c.reinforce.lr},
                      {"episodes", c.reinforce.episodes},
                      {"hidden", c.reinforce.hidden}};
    j["run"] = {{"seeds", c.run.seeds},
                {"steps_per_episode", c.run.steps_per_episode},
                {"eval_trials", c.run.eval_trials},
                {"noise_sigmas", c.run.noise_sigmas},
                {"chunk_size", c.run.chunk_size},
                {"chunk_sizes", c.run.chunk_sizes},
                {"output_dir", c.run.output_dir},
                {"record_steps", c.run.record_steps}};
    return j;
}

ExperimentConfig cfg_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    ExperimentConfig cfg;
    Reader root(j, "");
    if (root.has("cell")) read_cell(root.claim("cell"), cfg.cell);
    if (root.has("reward")) read_reward(root.claim("reward"), cfg.reward);
    if (root.has("traffic")) read_traffic(root.claim("traffic"), cfg.traffic);
    if (root.has("agent")) read_train(root.claim("agent"), cfg.train);
    if (root.has("explainer")) read_explainer(root.claim("explainer"), "explainer",
                                              cfg.explain_full);
    if (root.has("shaping_explainer"))
        read_explainer(root.claim("shaping_explainer"), "shaping_explainer",
                       cfg.explain_shaping);
    if (root.has("reasoner")) read_reasoner(root.claim("reasoner"), cfg);
    if (root.has("dqn")) read_dqn(root.claim("dqn"), cfg.dqn);
    if (root.has("reinforce")) read_reinforce(root.claim("reinforce"), cfg.reinforce);
    if (root.has("run")) read_run(root.claim("run"), cfg.run);
    root.done();
    cfg.validate();
    return cfg;
}

}  // namespace

void ExperimentConfig::validate() const {
    try {
        cell.validate();
        reward.validate();
        traffic.validate();
        train.validate();
        explain_full.validate();
        explain_shaping.validate();
        reasoner_cfg.validate();
        dqn.validate();
        build_rule_base();
        env::build_action_space(run.chunk_size, cell.n_prbs);
        for (int k : run.chunk_sizes) env::build_action_space(k, cell.n_prbs);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (run.seeds.empty()) throw ConfigError("run.seeds must be non-empty");
    if (run.steps_per_episode < 1) throw ConfigError("run.steps_per_episode must be >= 1");
    if (run.eval_trials < 1) throw ConfigError("run.eval_trials must be >= 1");
    if (run.output_dir.empty()) throw ConfigError("run.output_dir must be non-empty");
    for (double s : run.noise_sigmas)
        if (s < 0.0) throw ConfigError("run.noise_sigmas entries must be >= 0");
}

reasoner::RuleBase ExperimentConfig::build_rule_base() const {
    reasoner::RuleBase base;
    if (use_default_rules) base = reasoner::default_rules(reasoner_cfg);
    for (const auto& spec : extra_rules) {
        reasoner::add_rule(base, {spec.name, reasoner::Condition::parse(spec.condition),
                                  spec.action});
    }
    return base;
}

ExperimentConfig from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return cfg_from_json(j);
}

ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string to_json_text(const ExperimentConfig& cfg) { return cfg_to_json(cfg).dump(2); }

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must have the form section.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    json doc = cfg_to_json(cfg);
    json* node = &doc;
    size_t start = 0;
    std::vector<std::string> segments;
    while (true) {
        const size_t dot = path.find('.', start);
        segments.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (size_t i = 0; i + 1 < segments.size(); ++i) {
        if (!node->is_object() || !node->contains(segments[i]))
            throw ConfigError("unknown config key: " + path);
        node = &(*node)[segments[i]];
    }
    if (!node->is_object() || !node->contains(segments.back()))
        throw ConfigError("unknown config key: " + path);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // bare strings need no quotes
    }
    (*node)[segments.back()] = parsed;
    cfg = cfg_from_json(doc);
}

std::string manifest_to_json(const RunManifest& m) {
    json j;
    j["command"] = m.command;
    j["code_version"] = m.code_version;
    j["created_utc"] = m.created_utc;
    j["args"] = m.args;
    j["config"] = json::parse(to_json_text(m.config));
    return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
    }
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.code_version = j.at("code_version").get<std::string>();
        m.created_utc = j.at("created_utc").get<std::string>();
        if (j.contains("args"))
            m.args = j.at("args").get<std::map<std::string, std::string>>();
    } catch (const json::exception&) {
        throw ConfigError("manifest is missing required fields");
    }
    if (!j.contains("config")) throw ConfigError("manifest is missing the config snapshot");
    m.config = from_json_text(j.at("config").dump());
    return m;
}

std::string code_version() { return "tango 0.1.0"; }

}  // namespace tango::config
