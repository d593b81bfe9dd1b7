#include "tango/env.hpp"

#include <algorithm>
#include <cmath>

namespace tango::env {

void CellConfig::validate() const {
    if (n_prbs <= 0) throw std::invalid_argument("cell.n_prbs must be > 0");
    if (prb_bandwidth_mhz <= 0) throw std::invalid_argument("cell.prb_bandwidth_mhz must be > 0");
    if (!(snr_floor_db < snr_ceil_db))
        throw std::invalid_argument("cell.snr_floor_db must be < cell.snr_ceil_db");
    if (efficiency <= 0.0 || efficiency > 1.0)
        throw std::invalid_argument("cell.efficiency must be in (0, 1]");
}

bool ActionSpace::contains(int prbs) const { return index_of(prbs) >= 0; }

int ActionSpace::index_of(int prbs) const {
    if (prbs <= 0 || chunk_size <= 0 || prbs % chunk_size != 0) return -1;
    const int idx = prbs / chunk_size - 1;
    return (idx >= 0 && idx < static_cast<int>(actions.size())) ? idx : -1;
}

bool NetworkState::finite() const {
    return std::isfinite(s1_snr) && std::isfinite(s2_traffic) && std::isfinite(s3_residual) &&
           std::isfinite(s4_gap);
}

void RewardConfig::validate() const {
    if (!(delta_over < delta_under))
        throw std::invalid_argument("reward.delta_over must be < reward.delta_under");
    if (bonus < 0) throw std::invalid_argument("reward.bonus must be >= 0");
    if (p_over < 0 || p_under < 0) throw std::invalid_argument("reward penalties must be >= 0");
}

void TrafficModel::validate() const {
    for (const auto& s : sources) {
        if (s.burst_arrival_rate <= 0 || s.in_burst_rate <= 0 || s.mean_duration <= 0)
            throw std::invalid_argument("traffic source rates and durations must be > 0");
    }
    if (step_seconds <= 0) throw std::invalid_argument("traffic.step_seconds must be > 0");
    if (background_ceil < background_floor)
        throw std::invalid_argument("traffic.background_ceil must be >= background_floor");
}

TrafficModel TrafficModel::defaults() {
    TrafficModel m;
    m.sources.push_back({0.015, 20.4, 5.0, 1});
    m.step_seconds = 1.0;
    m.background_floor = 1.2;
    m.background_ceil = 2.0;
    m.background_walk_std = 0.1;
    return m;
}

ActionSpace build_action_space(int chunk_size, int a_max) {
    if (chunk_size <= 0 || chunk_size > a_max)
        throw std::invalid_argument("action space requires 0 < chunk_size <= a_max");
    ActionSpace space;
    space.chunk_size = chunk_size;
    space.a_max = a_max;
    for (int n = 1; n * chunk_size <= a_max; ++n) space.actions.push_back(n * chunk_size);
    return space;
}

double generate_traffic(const TrafficModel& model, EnvState& env) {
    // Spawn new bursts (Poisson arrivals per source, gated by max_active).
    for (size_t i = 0; i < model.sources.size(); ++i) {
        const auto& src = model.sources[i];
        int active = 0;
        for (const auto& b : env.active_bursts) active += (b.source == static_cast<int>(i));
        if (src.max_active > 0 && active >= src.max_active) continue;
        int arrivals = env.rng.poisson(src.burst_arrival_rate * model.step_seconds);
        if (src.max_active > 0) arrivals = std::min(arrivals, src.max_active - active);
        for (int k = 0; k < arrivals; ++k) {
            env.active_bursts.push_back(
                {static_cast<int>(i), src.in_burst_rate, env.rng.exponential(src.mean_duration)});
        }
    }
    // Decay and expire.
    for (auto& b : env.active_bursts) b.remaining_s -= model.step_seconds;
    std::erase_if(env.active_bursts, [](const Burst& b) { return b.remaining_s <= 0.0; });

    // Background walk, reflected into [floor, ceil].
    if (model.background_walk_std > 0.0 && model.background_ceil > model.background_floor) {
        env.background += env.rng.normal(0.0, model.background_walk_std);
        const double lo = model.background_floor, hi = model.background_ceil;
        double span = hi - lo;
        double x = std::fmod(env.background - lo, 2.0 * span);
        if (x < 0) x += 2.0 * span;
        env.background = lo + (x <= span ? x : 2.0 * span - x);
    } else {
        env.background = std::clamp(env.background, model.background_floor, model.background_ceil);
    }

    double total = env.background;
    for (const auto& b : env.active_bursts) total += b.rate;
    return total;
}

double simulate_snr(double prev_db, const CellConfig& cfg, Rng& rng) {
    const double next = prev_db + rng.normal(0.0, cfg.snr_walk_std_db);
    return std::clamp(next, cfg.snr_floor_db, cfg.snr_ceil_db);
}

double prb_capacity(int n_prbs_allocated, double snr_db, const CellConfig& cfg) {
    if (n_prbs_allocated < 0) throw std::invalid_argument("allocated PRB count must be >= 0");
    const double snr_linear = std::pow(10.0, snr_db / 10.0);
    const double spectral_eff = std::min(std::log2(1.0 + snr_linear), cfg.spectral_eff_cap);
    return n_prbs_allocated * cfg.prb_bandwidth_mhz * cfg.efficiency * spectral_eff;
}

double compute_objective(double traffic_mbps, double served_mbps, double lambda_w) {
    return traffic_mbps - lambda_w * served_mbps;
}

double compute_reward(double f, const RewardConfig& cfg) {
    const double base = cfg.base_mode == RewardBaseMode::Literal ? f : -std::fabs(f);
    if (f >= cfg.delta_over && f <= cfg.delta_under) return base + cfg.bonus;
    if (f < cfg.delta_over) return base - cfg.p_over;
    return base - cfg.p_under;
}

Environment::Environment(CellConfig cell, RewardConfig reward, TrafficModel traffic,
                         ActionSpace actions, int steps_per_episode, uint64_t seed)
    : cell_(std::move(cell)),
      reward_(std::move(reward)),
      traffic_(std::move(traffic)),
      actions_(std::move(actions)),
      steps_per_episode_(steps_per_episode),
      seed_(seed) {
    cell_.validate();
    reward_.validate();
    traffic_.validate();
    reset();
}

const NetworkState& Environment::reset() {
    ++episode_;
    env_ = EnvState{};
    env_.rng = Rng::substream(seed_, 0x1000 + static_cast<uint64_t>(episode_));
    env_.background = 0.5 * (traffic_.background_floor + traffic_.background_ceil);
    const double snr0 = 0.5 * (cell_.snr_floor_db + cell_.snr_ceil_db);
    const double traffic0 = generate_traffic(traffic_, env_);
    env_.state.s1_snr = snr0;
    env_.state.s2_traffic = traffic0;
    env_.state.s3_residual = prb_capacity(cell_.n_prbs, snr0, cell_);
    env_.state.s4_gap = 0.0;
    env_.time_step = 0;
    return env_.state;
}

StepResult Environment::step(int action_prbs) {
    if (!actions_.contains(action_prbs))
        throw std::invalid_argument("action not in action space: " + std::to_string(action_prbs));

    // Reward is computed against the state the agent acted on.
    const double served = prb_capacity(action_prbs, env_.state.s1_snr, cell_);
    const double f = compute_objective(env_.state.s2_traffic, served, reward_.lambda_w);
    const double reward = compute_reward(f, reward_);

    // Advance the world.
    const double traffic_next = generate_traffic(traffic_, env_);
    const double snr_next = simulate_snr(env_.state.s1_snr, cell_, env_.rng);
    const double residual = std::max(0.0, prb_capacity(cell_.n_prbs, snr_next, cell_) - served);

    env_.state = NetworkState{snr_next, traffic_next, residual, f};
    ++env_.time_step;

    StepResult out;
    out.next = env_.state;
    out.reward = reward;
    out.objective = f;
    out.served = served;
    out.done = env_.time_step >= steps_per_episode_;
    return out;
}

}  // namespace tango::env
