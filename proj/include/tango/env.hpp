#pragma once

#include <stdexcept>
#include <vector>

#include "tango/rng.hpp"

namespace tango::env {

struct CellConfig {
    int n_prbs = 52;
    double bandwidth_mhz = 10.0;
    double scs_khz = 15.0;
    double prb_bandwidth_mhz = 0.18;
    double efficiency = 0.75;
    double snr_floor_db = 11.8;
    double snr_ceil_db = 12.2;
    double snr_walk_std_db = 0.2;
    double spectral_eff_cap = 6.0;  // bits/s/Hz

    void validate() const;
};

struct ActionSpace {
    int chunk_size = 5;
    int a_max = 52;
    std::vector<int> actions;  // PRB counts, strictly increasing multiples of chunk_size

    bool contains(int prbs) const;
    int index_of(int prbs) const;  // -1 if absent
};

struct NetworkState {
    double s1_snr = 0.0;       // dB
    double s2_traffic = 0.0;   // Mbps
    double s3_residual = 0.0;  // Mbps
    double s4_gap = 0.0;       // Mbps

    bool finite() const;
};

enum class RewardBaseMode { Literal, Magnitude };

struct RewardConfig {
    double delta_over = -2.0;   // Mbps
    double delta_under = 2.0;   // Mbps
    double bonus = 1.0;
    double p_over = 5.0;
    double p_under = 5.0;
    double lambda_w = 1.0;
    RewardBaseMode base_mode = RewardBaseMode::Magnitude;

    void validate() const;
};

struct TrafficSource {
    double burst_arrival_rate = 0.1;  // bursts/s while eligible to spawn
    double in_burst_rate = 8.192;     // Mbps
    double mean_duration = 10.0;      // s, exponential
    int max_active = 0;               // 0 = unbounded superposition; 1 = MGEN-style on/off
};

struct TrafficModel {
    std::vector<TrafficSource> sources;
    double step_seconds = 1.0;
    // Slow-varying background load (reflected random walk), on top of bursts.
    double background_floor = 0.0;
    double background_ceil = 0.0;
    double background_walk_std = 0.0;

    void validate() const;
    static TrafficModel defaults();
};

struct Burst {
    int source = 0;
    double rate = 0.0;       // Mbps
    double remaining_s = 0.0;
};

struct EnvState {
    NetworkState state;
    std::vector<Burst> active_bursts;
    double background = 0.0;
    int time_step = 0;
    Rng rng{0};
};

struct StepResult {
    NetworkState next;
    double reward = 0.0;
    double objective = 0.0;  // f(a, s)
    double served = 0.0;     // Mbps
    bool done = false;
};

ActionSpace build_action_space(int chunk_size, int a_max);

// Advances burst arrivals/expirations and the background walk; returns the
// total offered traffic in Mbps.
double generate_traffic(const TrafficModel& model, EnvState& env);

double simulate_snr(double prev_db, const CellConfig& cfg, Rng& rng);

double prb_capacity(int n_prbs_allocated, double snr_db, const CellConfig& cfg);

double compute_objective(double traffic_mbps, double served_mbps, double lambda_w);

double compute_reward(double objective, const RewardConfig& cfg);

// Single-cell gNB environment. One instance is single-threaded; independent
// instances may run in parallel.
class Environment {
public:
    Environment(CellConfig cell, RewardConfig reward, TrafficModel traffic,
                ActionSpace actions, int steps_per_episode, uint64_t seed);

    const NetworkState& reset();
    StepResult step(int action_prbs);

    const ActionSpace& actions() const { return actions_; }
    const NetworkState& state() const { return env_.state; }
    const CellConfig& cell() const { return cell_; }
    const RewardConfig& reward_config() const { return reward_; }
    int steps_per_episode() const { return steps_per_episode_; }

private:
    CellConfig cell_;
    RewardConfig reward_;
    TrafficModel traffic_;
    ActionSpace actions_;
    int steps_per_episode_;
    uint64_t seed_;
    int episode_ = -1;
    EnvState env_;
};

}  // namespace tango::env
