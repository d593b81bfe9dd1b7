#include "tango/agent.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace tango::agent {

void TrainConfig::validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("train.gamma must be in [0, 1]");
    if (base_lr <= 0.0) throw std::invalid_argument("train.base_lr must be > 0");
    if (entropy_weight < 0.0) throw std::invalid_argument("train.entropy_weight must be >= 0");
    if (episodes < 1) throw std::invalid_argument("train.episodes must be >= 1");
    if (shaping_period < 1) throw std::invalid_argument("train.shaping_period must be >= 1");
    if (hidden < 1) throw std::invalid_argument("train.hidden must be >= 1");
}

SampledAction sample_action(const Eigen::VectorXd& log_probs, Rng& rng) {
    const Eigen::VectorXd probs = log_probs.array().exp();
    if (std::fabs(probs.sum() - 1.0) > 1e-6)
        throw std::invalid_argument("sample_action: log-probabilities are not normalized");

    const double u = rng.uniform();
    double cum = 0.0;
    int chosen = static_cast<int>(probs.size()) - 1;
    for (int i = 0; i < probs.size(); ++i) {
        cum += probs(i);
        if (u < cum) {
            chosen = i;
            break;
        }
    }
    double entropy = 0.0;
    for (int i = 0; i < probs.size(); ++i)
        if (probs(i) > 0.0) entropy -= probs(i) * log_probs(i);
    return {chosen, log_probs(chosen), entropy};
}

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
    std::vector<double> g(rewards.size(), 0.0);
    double acc = 0.0;
    for (size_t i = rewards.size(); i-- > 0;) {
        if (!std::isfinite(rewards[i]))
            throw std::invalid_argument("discounted_returns: non-finite reward");
        acc = rewards[i] + gamma * acc;
        g[i] = acc;
    }
    return g;
}

TrajectoryStats normalize_advantage(const std::vector<double>& returns, double eps) {
    if (returns.empty()) throw std::invalid_argument("normalize_advantage: empty returns");
    TrajectoryStats s;
    s.returns = returns;
    double sum = 0.0;
    for (double g : returns) sum += g;
    s.mean = sum / returns.size();
    double var = 0.0;
    for (double g : returns) var += (g - s.mean) * (g - s.mean);
    s.stddev = std::sqrt(var / returns.size());
    s.normalized.resize(returns.size());
    for (size_t i = 0; i < returns.size(); ++i) {
        s.normalized[i] = s.stddev < eps ? 0.0 : (returns[i] - s.mean) / (s.stddev + eps);
    }
    return s;
}

double policy_loss(const Trajectory& traj, const TrajectoryStats& stats, double entropy_weight) {
    if (traj.steps.size() != stats.normalized.size())
        throw std::invalid_argument("policy_loss: trajectory/stats length mismatch");
    double loss = 0.0;
    for (size_t t = 0; t < traj.steps.size(); ++t) {
        loss -= traj.steps[t].log_prob * stats.normalized[t];
        loss -= entropy_weight * traj.steps[t].entropy;
    }
    return loss;
}

double policy_loss_backward(Trajectory& traj, const TrajectoryStats& stats,
                            double entropy_weight, nn::PolicyParameters& grads) {
    if (traj.steps.size() != stats.normalized.size())
        throw std::invalid_argument("policy_loss_backward: trajectory/stats length mismatch");
    double loss = 0.0;
    for (size_t t = 0; t < traj.steps.size(); ++t) {
        StepRecord& rec = traj.steps[t];
        ad::Tape& tape = rec.trace.tape;
        const int picked = tape.pick_per_row(rec.trace.logp_id, {rec.action_index});
        const int ent = tape.entropy_from_logp(rec.trace.logp_id);
        const int loss_id = tape.add(tape.affine(picked, -stats.normalized[t], 0.0),
                                     tape.affine(ent, -entropy_weight, 0.0));
        loss += tape.value(loss_id)(0, 0);
        nn::accumulate_gradients(rec.trace, loss_id, grads);
    }
    return loss;
}

namespace {

uint64_t shaping_seed(uint64_t master, int episode, int step) {
    return master ^ (0x9e3779b97f4a7c15ULL *
                     (static_cast<uint64_t>(episode) * 100003ULL + static_cast<uint64_t>(step)));
}

}  // namespace

TrainResult train(env::Environment& environment, const TrainConfig& cfg,
                  const nn::ActivationConfig& act, const reasoner::RuleBase* rules,
                  const explainer::ExplainerConfig& shaping_cfg, bool record_steps) {
    cfg.validate();
    const int n_actions = static_cast<int>(environment.actions().actions.size());

    Rng init_rng = Rng::substream(cfg.seed, 1);
    Rng action_rng = Rng::substream(cfg.seed, 2);
    Rng dropout_rng = Rng::substream(cfg.seed, 3);

    TrainResult result;
    result.params = nn::PolicyParameters::init(n_actions, cfg.hidden, init_rng);

    int update_count = 0;
    for (int episode = 0; episode < cfg.episodes; ++episode) {
        const auto t0 = std::chrono::steady_clock::now();
        env::NetworkState state = environment.reset();
        Trajectory traj;
        traj.steps.reserve(environment.steps_per_episode());

        for (int t = 1;; ++t) {
            StepRecord rec;
            rec.g = graph::state_to_graph(state, result.scaler);
            const Eigen::VectorXd logp =
                nn::forward(rec.g, result.params, act, nn::Mode::Train, dropout_rng, &rec.trace);
            const SampledAction a = sample_action(logp, action_rng);
            rec.action_index = a.index;
            rec.action_prbs = environment.actions().actions[a.index];
            rec.log_prob = a.log_prob;
            rec.entropy = a.entropy;

            const env::StepResult sr = environment.step(rec.action_prbs);
            rec.base_reward = sr.reward;
            rec.objective = sr.objective;

            // Shaping consumes only its own derived seed, never the shared
            // streams, so an empty rule base leaves the run unchanged.
            if (rules != nullptr && t % cfg.shaping_period == 0 && !rules->rules.empty()) {
                explainer::ExplainerConfig ecfg = shaping_cfg;
                ecfg.seed = shaping_seed(cfg.seed, episode, t);
                const explainer::Explanation ex =
                    explainer::explain(result.params, act, rec.g, ecfg);
                const auto contexts = reasoner::build_node_contexts(rec.g, ex);
                rec.r_star = reasoner::evaluate(*rules, contexts);
            }
            rec.shaped_reward = reasoner::shape_reward(rec.base_reward, rec.r_star);

            if (record_steps) {
                result.steps.push_back({episode, t, rec.action_prbs, state.s2_traffic, sr.served,
                                        sr.objective, rec.shaped_reward, rec.r_star});
            }
            traj.steps.push_back(std::move(rec));
            state = sr.next;
            if (sr.done) break;
        }

        std::vector<double> rewards(traj.steps.size());
        double total_shaped = 0.0, total_base = 0.0, total_entropy = 0.0, total_bonus = 0.0;
        for (size_t i = 0; i < traj.steps.size(); ++i) {
            rewards[i] = traj.steps[i].shaped_reward;
            total_shaped += traj.steps[i].shaped_reward;
            total_base += traj.steps[i].base_reward;
            total_bonus += traj.steps[i].r_star;
            total_entropy += traj.steps[i].entropy;
        }
        const TrajectoryStats stats = normalize_advantage(discounted_returns(rewards, cfg.gamma));

        nn::PolicyParameters grads = nn::PolicyParameters::zeros_like(result.params);
        const double loss = policy_loss_backward(traj, stats, cfg.entropy_weight, grads);
        const double lr =
            nn::lr_schedule(update_count, cfg.base_lr, cfg.lr_step_size, cfg.lr_gamma);
        nn::sgd_update(result.params, grads, lr);
        ++update_count;

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.episodes.push_back({episode, total_shaped, total_base,
                                   total_bonus / traj.steps.size(), loss,
                                   total_entropy / traj.steps.size(), lr, wall});
    }
    return result;
}

EvalResult evaluate_policy_fn(const std::function<int(const env::NetworkState&)>& choose_prbs,
                              env::Environment& environment, int n_trials, double noise_sigma,
                              uint64_t noise_seed) {
    if (n_trials < 1) throw std::invalid_argument("evaluate: n_trials must be >= 1");
    if (noise_sigma < 0.0) throw std::invalid_argument("evaluate: noise_sigma must be >= 0");
    Rng noise_rng = Rng::substream(noise_seed, 4);

    EvalResult out;
    int in_band = 0, over = 0, under = 0;
    const env::RewardConfig& rc = environment.reward_config();
    for (int trial = 0; trial < n_trials; ++trial) {
        env::NetworkState state = environment.reset();
        for (int step = 1;; ++step) {
            env::NetworkState observed = state;
            if (noise_sigma > 0.0) {
                observed.s1_snr += noise_rng.normal(0.0, noise_sigma);
                observed.s2_traffic += noise_rng.normal(0.0, noise_sigma);
                observed.s3_residual += noise_rng.normal(0.0, noise_sigma);
                observed.s4_gap += noise_rng.normal(0.0, noise_sigma);
            }
            const int prbs = choose_prbs(observed);

            const env::StepResult sr = environment.step(prbs);
            const bool band = sr.objective >= rc.delta_over && sr.objective <= rc.delta_under;
            in_band += band;
            over += sr.objective < rc.delta_over;
            under += sr.objective > rc.delta_under;
            out.steps.push_back({trial, step, prbs, state.s2_traffic, sr.served, sr.objective,
                                 sr.reward, band});
            state = sr.next;
            if (sr.done) break;
        }
    }
    const double n = static_cast<double>(out.steps.size());
    out.in_band_accuracy = in_band / n;
    out.over_fraction = over / n;
    out.under_fraction = under / n;
    return out;
}

EvalResult evaluate(const nn::PolicyParameters& params, const nn::ActivationConfig& act,
                    const graph::FeatureScaler& scaler, env::Environment& environment,
                    int n_trials, double noise_sigma, uint64_t noise_seed) {
    auto choose = [&](const env::NetworkState& observed) {
        const graph::GraphState g = graph::state_to_graph_frozen(observed, scaler);
        const Eigen::VectorXd logp = nn::forward_eval(g, params, act);
        int best = 0;
        logp.maxCoeff(&best);
        return environment.actions().actions[best];
    };
    return evaluate_policy_fn(choose, environment, n_trials, noise_sigma, noise_seed);
}

double in_band_accuracy(const std::vector<double>& gaps, const env::RewardConfig& cfg) {
    if (gaps.empty()) throw std::invalid_argument("in_band_accuracy: empty gap list");
    int count = 0;
    for (double f : gaps) count += (f >= cfg.delta_over && f <= cfg.delta_under);
    return static_cast<double>(count) / gaps.size();
}

}  // namespace tango::agent
