#pragma once

#include <optional>
#include <vector>

#include "tango/env.hpp"
#include "tango/explainer.hpp"
#include "tango/policy.hpp"
#include "tango/reasoner.hpp"

namespace tango::agent {

struct TrainConfig {
    double gamma = 0.9;
    double base_lr = 1e-3;
    double entropy_weight = 0.01;
    int episodes = 70;
    int shaping_period = 10;  // steps between reasoner invocations
    int hidden = 64;
    int lr_step_size = 100;
    double lr_gamma = 0.1;
    uint64_t seed = 1;

    void validate() const;
};

struct SampledAction {
    int index = 0;
    double log_prob = 0.0;
    double entropy = 0.0;
};

struct StepRecord {
    graph::GraphState g;
    int action_index = 0;
    int action_prbs = 0;
    double log_prob = 0.0;
    double entropy = 0.0;
    double base_reward = 0.0;
    double r_star = 0.0;
    double shaped_reward = 0.0;
    double objective = 0.0;
    nn::ForwardTrace trace;
};

struct Trajectory {
    std::vector<StepRecord> steps;
};

struct TrajectoryStats {
    std::vector<double> returns;
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::vector<double> normalized;
};

struct EpisodeLog {
    int episode = 0;
    double total_reward = 0.0;      // shaped
    double total_base_reward = 0.0;
    double mean_shaped_bonus = 0.0;
    double loss = 0.0;
    double mean_entropy = 0.0;
    double lr = 0.0;
    double wall_clock_s = 0.0;
};

struct StepLog {
    int episode = 0;
    int step = 0;
    int action_prbs = 0;
    double traffic = 0.0;
    double served = 0.0;
    double f = 0.0;
    double reward = 0.0;
    double r_star = 0.0;
};

struct TrainResult {
    nn::PolicyParameters params;
    graph::FeatureScaler scaler;
    std::vector<EpisodeLog> episodes;
    std::vector<StepLog> steps;
};

SampledAction sample_action(const Eigen::VectorXd& log_probs, Rng& rng);

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma);

// Mean-baseline advantages with population-std normalization; a near-zero
// std maps every advantage to 0.
TrajectoryStats normalize_advantage(const std::vector<double>& returns, double eps = 1e-8);

// Loss value only: -sum(log pi * adv_norm) - lambda_H * sum(H).
double policy_loss(const Trajectory& traj, const TrajectoryStats& stats, double entropy_weight);

// Assembles the same loss on each step's recorded tape (advantages as
// constants), backpropagates, and accumulates parameter gradients.
double policy_loss_backward(Trajectory& traj, const TrajectoryStats& stats,
                            double entropy_weight, nn::PolicyParameters& grads);

// Full training loop. rules == nullptr disables the shaping path entirely;
// a non-null (possibly empty) rule base runs the explain-and-shape step
// every cfg.shaping_period steps. Randomness is split into independent
// substreams so shaping with r* = 0 is bit-identical to no shaping.
TrainResult train(env::Environment& environment, const TrainConfig& cfg,
                  const nn::ActivationConfig& act, const reasoner::RuleBase* rules,
                  const explainer::ExplainerConfig& shaping_cfg,
                  bool record_steps = false);

struct EvalStep {
    int trial = 0;
    int step = 0;
    int action_prbs = 0;
    double traffic = 0.0;
    double served = 0.0;
    double f = 0.0;
    double reward = 0.0;
    bool in_band = false;
};

struct EvalResult {
    std::vector<EvalStep> steps;
    double in_band_accuracy = 0.0;
    double over_fraction = 0.0;   // f < delta_over
    double under_fraction = 0.0;  // f > delta_under
};

// Greedy rollouts with N(0, sigma^2) observation noise added to the raw
// state before the agent sees it; rewards and gaps are measured on the true
// state. choose_prbs maps the (noisy) observation to a PRB count.
EvalResult evaluate_policy_fn(const std::function<int(const env::NetworkState&)>& choose_prbs,
                              env::Environment& environment, int n_trials, double noise_sigma,
                              uint64_t noise_seed);

EvalResult evaluate(const nn::PolicyParameters& params, const nn::ActivationConfig& act,
                    const graph::FeatureScaler& scaler, env::Environment& environment,
                    int n_trials, double noise_sigma, uint64_t noise_seed);

double in_band_accuracy(const std::vector<double>& gaps, const env::RewardConfig& cfg);

}  // namespace tango::agent
