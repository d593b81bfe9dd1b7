#include <cmath>
#include <numeric>

#include "doctest.h"
#include "tango/agent.hpp"

using namespace tango;

namespace {

env::Environment tiny_env(uint64_t seed, int steps = 12, int chunk = 13) {
    return env::Environment(env::CellConfig{}, env::RewardConfig{},
                            env::TrafficModel::defaults(), env::build_action_space(chunk, 52),
                            steps, seed);
}

agent::TrainConfig tiny_train_cfg(uint64_t seed) {
    agent::TrainConfig cfg;
    cfg.episodes = 2;
    cfg.hidden = 8;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("sampling from a one-hot distribution always returns that action") {
    Eigen::VectorXd lp = Eigen::VectorXd::Constant(5, -745.0);  // exp underflows to 0
    lp[3] = 0.0;
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        auto s = agent::sample_action(lp, rng);
        CHECK(s.index == 3);
        CHECK(s.log_prob == 0.0);
        CHECK(s.entropy == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("uniform distribution over 10 actions has entropy ln 10") {
    Eigen::VectorXd lp = Eigen::VectorXd::Constant(10, std::log(0.1));
    Rng rng(2);
    auto s = agent::sample_action(lp, rng);
    CHECK(s.entropy == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(s.log_prob == doctest::Approx(std::log(0.1)).epsilon(1e-12));
}

TEST_CASE("sampling frequencies converge to the distribution") {
    Eigen::VectorXd lp(2);
    lp << std::log(0.7), std::log(0.3);
    Rng rng(3);
    int first = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        if (agent::sample_action(lp, rng).index == 0) ++first;
    CHECK(std::abs(first / static_cast<double>(n) - 0.7) < 0.01);
}

TEST_CASE("sampling rejects non-normalized inputs") {
    Eigen::VectorXd lp = Eigen::VectorXd::Constant(4, std::log(0.5));
    Rng rng(4);
    CHECK_THROWS(agent::sample_action(lp, rng));
}

TEST_CASE("discounted returns: myopic identity at gamma 0") {
    std::vector<double> r = {3, -1, 2};
    CHECK(agent::discounted_returns(r, 0.0) == r);
}

TEST_CASE("discounted returns: hand recursion at gamma 0.5") {
    auto g = agent::discounted_returns({1, 1, 1}, 0.5);
    REQUIRE(g.size() == 3);
    CHECK(g[0] == doctest::Approx(1.75));
    CHECK(g[1] == doctest::Approx(1.5));
    CHECK(g[2] == doctest::Approx(1.0));
}

TEST_CASE("discounted returns of zero rewards are zero") {
    auto g = agent::discounted_returns({0, 0, 0, 0}, 0.99);
    for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("advantage normalization zeroes degenerate returns") {
    auto st = agent::normalize_advantage({1, 1, 1});
    for (double v : st.normalized) CHECK(v == 0.0);
}

TEST_CASE("advantage normalization uses the population standard deviation") {
    auto st = agent::normalize_advantage({0, 2});
    REQUIRE(st.normalized.size() == 2);
    CHECK(st.mean == doctest::Approx(1.0));
    CHECK(st.stddev == doctest::Approx(1.0));
    CHECK(st.normalized[0] == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(st.normalized[1] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("normalized advantages are centered with unit spread") {
    Rng rng(5);
    std::vector<double> g(40);
    for (double& v : g) v = rng.uniform(-10, 10);
    auto st = agent::normalize_advantage(g);
    const double mean = std::accumulate(st.normalized.begin(), st.normalized.end(), 0.0) /
                        st.normalized.size();
    CHECK(std::abs(mean) < 1e-9);
    double var = 0.0;
    for (double v : st.normalized) var += (v - mean) * (v - mean);
    var /= st.normalized.size();
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));
}

namespace {
agent::Trajectory fake_trajectory(const std::vector<double>& log_probs,
                                  const std::vector<double>& entropies) {
    agent::Trajectory traj;
    for (size_t i = 0; i < log_probs.size(); ++i) {
        agent::StepRecord s;
        s.log_prob = log_probs[i];
        s.entropy = entropies[i];
        traj.steps.push_back(std::move(s));
    }
    return traj;
}
}  // namespace

TEST_CASE("policy loss is zero for zero advantages without entropy bonus") {
    auto traj = fake_trajectory({-0.5, -1.0, -0.2}, {1.0, 1.0, 1.0});
    agent::TrajectoryStats st;
    st.normalized = {0, 0, 0};
    CHECK(agent::policy_loss(traj, st, 0.0) == 0.0);
}

TEST_CASE("single-step policy loss plugs in directly") {
    auto traj = fake_trajectory({-0.5}, {0.3});
    agent::TrajectoryStats st;
    st.normalized = {1.0};
    CHECK(agent::policy_loss(traj, st, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("entropy term of a uniform policy is -weight * T * ln(n)") {
    const int T = 6, n = 10;
    std::vector<double> lps(T, std::log(1.0 / n));
    std::vector<double> hs(T, std::log(static_cast<double>(n)));
    auto traj = fake_trajectory(lps, hs);
    agent::TrajectoryStats st;
    st.normalized.assign(T, 0.0);
    const double lambda = 0.01;
    CHECK(agent::policy_loss(traj, st, lambda) ==
          doctest::Approx(-lambda * T * std::log(static_cast<double>(n))).epsilon(1e-12));
}

TEST_CASE("episode loss gradients match finite differences") {
    // Collect a short real trajectory, then check the assembled loss gradient
    // against central differences of a re-rolled loss with frozen actions.
    auto environment = tiny_env(7, 6);
    agent::TrainConfig cfg = tiny_train_cfg(7);

    Rng init_rng(Rng::substream(cfg.seed, 1));
    nn::PolicyParameters params = nn::PolicyParameters::init(
        static_cast<int>(environment.actions().actions.size()), cfg.hidden, init_rng);

    graph::FeatureScaler scaler;
    std::vector<graph::GraphState> graphs;
    std::vector<int> actions;
    std::vector<double> rewards;
    Rng act_rng(Rng::substream(cfg.seed, 2));
    env::NetworkState s = environment.reset();
    for (int t = 0; t < 6; ++t) {
        graphs.push_back(graph::state_to_graph(s, scaler));
        Eigen::VectorXd lp = nn::forward_eval(graphs.back(), params, {});
        auto a = agent::sample_action(lp, act_rng);
        actions.push_back(a.index);
        auto r = environment.step(environment.actions().actions[a.index]);
        rewards.push_back(r.reward);
        s = r.next;
    }
    auto stats = agent::normalize_advantage(agent::discounted_returns(rewards, cfg.gamma));
    const double lambda = 0.01;

    auto loss_value = [&](const nn::PolicyParameters& q) {
        double loss = 0.0;
        for (size_t t = 0; t < graphs.size(); ++t) {
            Eigen::VectorXd lp = nn::forward_eval(graphs[t], q, {});
            double h = 0.0;
            for (int i = 0; i < lp.size(); ++i) h -= std::exp(lp[i]) * lp[i];
            loss += -lp[actions[t]] * stats.normalized[t] - lambda * h;
        }
        return loss;
    };

    agent::Trajectory traj;
    for (size_t t = 0; t < graphs.size(); ++t) {
        agent::StepRecord rec;
        rec.g = graphs[t];
        rec.action_index = actions[t];
        Rng unused(0);
        Eigen::VectorXd lp =
            nn::forward(graphs[t], params, {}, nn::Mode::Eval, unused, &rec.trace);
        rec.log_prob = lp[actions[t]];
        traj.steps.push_back(std::move(rec));
    }
    nn::PolicyParameters grads = nn::PolicyParameters::zeros_like(params);
    const double reported = agent::policy_loss_backward(traj, stats, lambda, grads);
    CHECK(reported == doctest::Approx(loss_value(params)).epsilon(1e-10));
    CHECK(nn::finite_diff_check(loss_value, params, grads, 1e-5, 250) < 1e-4);
}

TEST_CASE("training twice with one seed reproduces the log exactly") {
    auto e1 = tiny_env(11);
    auto e2 = tiny_env(11);
    auto cfg = tiny_train_cfg(11);
    auto r1 = agent::train(e1, cfg, {}, nullptr, explainer::ExplainerConfig::light());
    auto r2 = agent::train(e2, cfg, {}, nullptr, explainer::ExplainerConfig::light());
    REQUIRE(r1.episodes.size() == r2.episodes.size());
    for (size_t i = 0; i < r1.episodes.size(); ++i) {
        CHECK(r1.episodes[i].total_reward == r2.episodes[i].total_reward);
        CHECK(r1.episodes[i].loss == r2.episodes[i].loss);
        CHECK(r1.episodes[i].mean_entropy == r2.episodes[i].mean_entropy);
    }
    auto b1 = r1.params.blocks();
    auto b2 = r2.params.blocks();
    for (size_t i = 0; i < b1.size(); ++i)
        CHECK((*b1[i] - *b2[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("an empty rule base reproduces the unshapen run bit-identically") {
    auto e1 = tiny_env(13);
    auto e2 = tiny_env(13);
    auto cfg = tiny_train_cfg(13);
    cfg.shaping_period = 3;
    reasoner::RuleBase empty;
    auto plain = agent::train(e1, cfg, {}, nullptr, explainer::ExplainerConfig::light());
    auto shaped = agent::train(e2, cfg, {}, &empty, explainer::ExplainerConfig::light());
    REQUIRE(plain.episodes.size() == shaped.episodes.size());
    for (size_t i = 0; i < plain.episodes.size(); ++i) {
        CHECK(plain.episodes[i].total_reward == shaped.episodes[i].total_reward);
        CHECK(plain.episodes[i].loss == shaped.episodes[i].loss);
    }
    auto b1 = plain.params.blocks();
    auto b2 = shaped.params.blocks();
    for (size_t i = 0; i < b1.size(); ++i)
        CHECK((*b1[i] - *b2[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shaping period beyond the horizon disables shaping") {
    auto e1 = tiny_env(17);
    auto e2 = tiny_env(17);
    auto cfg = tiny_train_cfg(17);
    cfg.shaping_period = 1000;  // > steps per episode
    reasoner::ReasonerConfig rc;
    reasoner::RuleBase rules = reasoner::default_rules(rc);
    auto plain = agent::train(e1, cfg, {}, nullptr, explainer::ExplainerConfig::light());
    auto shaped = agent::train(e2, cfg, {}, &rules, explainer::ExplainerConfig::light());
    for (size_t i = 0; i < plain.episodes.size(); ++i)
        CHECK(plain.episodes[i].total_reward == shaped.episodes[i].total_reward);
}

TEST_CASE("constant reward shift leaves normalized advantages unchanged") {
    std::vector<double> r = {1.0, -2.0, 0.5, 3.0};
    std::vector<double> shifted;
    for (double v : r) shifted.push_back(v + 7.0);
    auto a = agent::normalize_advantage(agent::discounted_returns(r, 0.0));
    auto b = agent::normalize_advantage(agent::discounted_returns(shifted, 0.0));
    for (size_t i = 0; i < a.normalized.size(); ++i)
        CHECK(a.normalized[i] == doctest::Approx(b.normalized[i]).epsilon(1e-9));
}

TEST_CASE("greedy evaluation repeats identically and respects zero noise") {
    auto environment = tiny_env(19, 8);
    auto cfg = tiny_train_cfg(19);
    auto trained = agent::train(environment, cfg, {}, nullptr,
                                explainer::ExplainerConfig::light());
    auto ev_env1 = tiny_env(19, 8);
    auto ev_env2 = tiny_env(19, 8);
    auto r1 = agent::evaluate(trained.params, {}, trained.scaler, ev_env1, 3, 0.0, 77);
    auto r2 = agent::evaluate(trained.params, {}, trained.scaler, ev_env2, 3, 0.0, 77);
    REQUIRE(r1.steps.size() == r2.steps.size());
    for (size_t i = 0; i < r1.steps.size(); ++i) {
        CHECK(r1.steps[i].action_prbs == r2.steps[i].action_prbs);
        CHECK(r1.steps[i].f == r2.steps[i].f);
    }
    CHECK(r1.in_band_accuracy == r2.in_band_accuracy);
}

TEST_CASE("evaluation accuracy counts gaps inside the band") {
    CHECK(agent::in_band_accuracy({0, 1, 3, -4, 2}, env::RewardConfig{}) ==
          doctest::Approx(0.6));
}

TEST_CASE("evaluation fractions partition the step set") {
    auto environment = tiny_env(23, 10);
    auto cfg = tiny_train_cfg(23);
    auto trained = agent::train(environment, cfg, {}, nullptr,
                                explainer::ExplainerConfig::light());
    auto ev_env = tiny_env(23, 10);
    auto r = agent::evaluate(trained.params, {}, trained.scaler, ev_env, 4, 2.0, 5);
    CHECK(r.in_band_accuracy + r.over_fraction + r.under_fraction == doctest::Approx(1.0));
    CHECK(r.steps.size() == 4u * 10u);
}
