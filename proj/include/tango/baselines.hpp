#pragma once

#include <vector>

#include "tango/agent.hpp"
#include "tango/autodiff.hpp"
#include "tango/env.hpp"
#include "tango/graphstate.hpp"
#include "tango/rng.hpp"

namespace tango::baselines {

using Mat = ad::Mat;

// Flat-state MLP: in -> hidden -> hidden -> out, ReLU activations inside.
// The dueling variant replaces the output layer with a value head (-> 1)
// and an advantage head (-> n_actions) on the shared trunk.
struct MlpParams {
    Mat w1, b1, w2, b2, w3, b3;
    // dueling heads (empty for the plain topology)
    Mat vw, vb, aw, ab;
    bool dueling = false;
    int in = 4, hidden = 64, out = 0;

    static MlpParams init(int in, int hidden, int out, bool dueling, Rng& rng);
    static MlpParams zeros_like(const MlpParams& p);
    std::vector<Mat*> blocks();
    std::vector<const Mat*> blocks() const;
};

// Plain forward, X is batch x in. Dueling output is V + A - mean(A).
Mat mlp_forward(const MlpParams& p, const Mat& x);

Eigen::VectorXd dueling_aggregate(double v, const Eigen::VectorXd& a);
double dqn_target(double r, bool done, double gamma, const Eigen::VectorXd& q_target_next);
double double_dqn_target(double r, bool done, double gamma,
                         const Eigen::VectorXd& q_online_next,
                         const Eigen::VectorXd& q_target_next);

struct Transition {
    Eigen::Vector4d s;
    int a = 0;
    double r = 0.0;
    Eigen::Vector4d s2;
    bool done = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}
    void push(Transition t);
    size_t size() const { return data_.size(); }
    size_t capacity() const { return capacity_; }
    // Uniform with replacement.
    std::vector<const Transition*> sample(size_t batch, Rng& rng) const;

private:
    size_t capacity_;
    size_t next_ = 0;
    std::vector<Transition> data_;
};

enum class DqnVariant { Dqn, Double, Dueling };

struct DqnConfig {
    double gamma = 0.99;
    double lr = 1e-3;
    int episodes = 70;
    int hidden = 64;
    int buffer_capacity = 10000;
    int batch_size = 64;
    int target_sync_period = 200;       // environment steps
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_fraction = 0.5;    // fraction of total steps to reach eps_end
    uint64_t seed = 1;

    void validate() const;
};

struct BaselineEpisodeLog {
    int episode = 0;
    double total_reward = 0.0;
    double mean_loss = 0.0;
    double epsilon = 0.0;
    double wall_clock_s = 0.0;
};

struct DqnResult {
    MlpParams params;
    graph::FeatureScaler scaler;
    std::vector<BaselineEpisodeLog> episodes;
};

double epsilon_schedule(int step, int total_steps, const DqnConfig& cfg);

DqnResult train_dqn_family(env::Environment& environment, DqnVariant variant,
                           const DqnConfig& cfg);

struct ReinforceConfig {
    double gamma = 0.99;
    double lr = 1e-3;
    int episodes = 70;
    int hidden = 64;
    uint64_t seed = 1;
};

struct ReinforceResult {
    MlpParams params;  // out = n_actions; log-softmax applied at use sites
    graph::FeatureScaler scaler;
    std::vector<BaselineEpisodeLog> episodes;
};

// Plain policy gradient on the flat state: raw discounted returns weight the
// log-probabilities, no baseline, no entropy bonus.
ReinforceResult train_vanilla_reinforce(env::Environment& environment,
                                        const ReinforceConfig& cfg);

// Greedy evaluation shared with the policy-gradient agents: argmax of the
// Q-values (or policy logits) on the scaled observed state.
agent::EvalResult evaluate_greedy(const MlpParams& params, const graph::FeatureScaler& scaler,
                                  env::Environment& environment, int n_trials,
                                  double noise_sigma, uint64_t noise_seed);

}  // namespace tango::baselines
