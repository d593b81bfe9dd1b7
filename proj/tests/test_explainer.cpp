#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "tango/explainer.hpp"

using namespace tango;
using ad::Mat;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double softplus_inv(double y) { return std::log(std::expm1(y)); }

graph::GraphState toy_graph(uint64_t seed) {
    Rng rng(seed);
    env::NetworkState s{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    return graph::state_to_graph_raw(s);
}

nn::PolicyParameters toy_policy(uint64_t seed, int n_actions = 5, int hidden = 8) {
    Rng rng(seed);
    return nn::PolicyParameters::init(n_actions, hidden, rng);
}

explainer::ExplainerConfig quick_cfg(uint64_t seed) {
    explainer::ExplainerConfig cfg;
    cfg.mc_samples = 4;
    cfg.grad_steps_per_block = 10;
    cfg.max_outer_iters = 6;
    cfg.tol = 1e-5;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("kl against the standard normal prior") {
    CHECK(explainer::kl_gaussian(0.0, 1.0) == doctest::Approx(0.0));
    CHECK(explainer::kl_gaussian(1.0, 1.0) == doctest::Approx(0.5));
    CHECK(explainer::kl_gaussian(0.0, 2.0) ==
          doctest::Approx((4.0 - 1.0 - std::log(4.0)) / 2.0).epsilon(1e-12));
    CHECK_THROWS(explainer::kl_gaussian(0.0, 0.0));
    CHECK_THROWS(explainer::kl_gaussian(0.0, -1.0));
}

TEST_CASE("softplus is positive and matches log1p(exp(x))") {
    CHECK(explainer::softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(explainer::softplus(-30.0) > 0.0);
    CHECK(explainer::softplus(10.0) == doctest::Approx(std::log1p(std::exp(10.0))));
}

TEST_CASE("near-identity posterior makes the elbo approach logp(target) minus kl") {
    nn::PolicyParameters p = toy_policy(3);
    graph::GraphState g = toy_graph(3);
    Eigen::VectorXd lp = nn::forward_eval(g, p, {});
    int target = 0;
    lp.maxCoeff(&target);

    explainer::MaskPosterior post;
    post.edge_mu = Eigen::VectorXd::Constant(12, 25.0);  // sigmoid ~ 1
    post.edge_rho = Eigen::VectorXd::Constant(12, softplus_inv(1e-4));
    post.feat_mu = Mat::Constant(4, 2, 25.0);
    post.feat_rho = Mat::Constant(4, 2, softplus_inv(1e-4));
    post.mc_samples = 1;
    post.noise = Mat::Zero(1, 20);

    double kl = 0.0;
    for (int i = 0; i < 12; ++i) kl += explainer::kl_gaussian(25.0, 1e-4);
    for (int i = 0; i < 8; ++i) kl += explainer::kl_gaussian(25.0, 1e-4);
    const double e = explainer::elbo(post, p, {}, g, target);
    CHECK(e + kl == doctest::Approx(lp[target]).epsilon(1e-6));
}

TEST_CASE("coordinate ascent produces a non-decreasing elbo trace") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        nn::PolicyParameters p = toy_policy(seed);
        graph::GraphState g = toy_graph(seed + 100);
        auto post = explainer::cavi_fit(p, {}, g, quick_cfg(seed));
        REQUIRE(post.elbo_trace.size() >= 2);
        for (size_t i = 1; i < post.elbo_trace.size(); ++i)
            CHECK(post.elbo_trace[i] >= post.elbo_trace[i - 1] - 1e-8);
    }
}

TEST_CASE("zero outer iterations return the initialization unchanged") {
    explainer::ExplainerConfig cfg = quick_cfg(9);
    cfg.max_outer_iters = 0;
    auto post = explainer::cavi_fit(toy_policy(9), {}, toy_graph(9), cfg);
    for (int i = 0; i < 12; ++i) {
        CHECK(post.edge_mu[i] == cfg.init_mu);
        CHECK(post.edge_sigma()[i] == doctest::Approx(cfg.init_sigma).epsilon(1e-12));
    }
    for (int i = 0; i < 8; ++i) CHECK(post.feat_mu(i) == cfg.init_mu);
}

TEST_CASE("identical seeds fit identical posteriors") {
    auto a = explainer::cavi_fit(toy_policy(7), {}, toy_graph(7), quick_cfg(7));
    auto b = explainer::cavi_fit(toy_policy(7), {}, toy_graph(7), quick_cfg(7));
    CHECK((a.edge_mu - b.edge_mu).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.edge_rho - b.edge_rho).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.feat_mu - b.feat_mu).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(a.elbo_trace.size() == b.elbo_trace.size());
    for (size_t i = 0; i < a.elbo_trace.size(); ++i) CHECK(a.elbo_trace[i] == b.elbo_trace[i]);
}

TEST_CASE("posterior sigma stays strictly positive after fitting") {
    auto post = explainer::cavi_fit(toy_policy(21), {}, toy_graph(22), quick_cfg(21));
    CHECK(post.edge_sigma().minCoeff() > 0.0);
    CHECK(post.feat_sigma().minCoeff() > 0.0);
}

TEST_CASE("importance extraction min-max normalizes each group") {
    explainer::MaskPosterior post;
    post.edge_mu = Eigen::VectorXd::Zero(12);
    // First three raw sigmoids 0.3, 0.9, 0.6 -> normalized 0, 1, 0.5.
    post.edge_mu[0] = logit(0.3);
    post.edge_mu[1] = logit(0.9);
    post.edge_mu[2] = logit(0.6);
    for (int i = 3; i < 12; ++i) post.edge_mu[i] = logit(0.3);
    post.edge_rho = Eigen::VectorXd::Constant(12, softplus_inv(0.25));
    post.feat_mu = Mat::Constant(4, 2, 1.0);
    post.feat_rho = Mat::Constant(4, 2, softplus_inv(0.5));

    auto ex = explainer::extract_explanation(post);
    CHECK(ex.edge_importance[0] == doctest::Approx(0.0));
    CHECK(ex.edge_importance[1] == doctest::Approx(1.0));
    CHECK(ex.edge_importance[2] == doctest::Approx(0.5).epsilon(1e-9));
    // Degenerate feature group collapses to 0.5.
    for (int i = 0; i < 8; ++i) CHECK(ex.node_feature_importance(i) == 0.5);
    // Uncertainties are raw sigmas, no normalization.
    for (int i = 0; i < 12; ++i)
        CHECK(ex.edge_uncertainty[i] == doctest::Approx(0.25).epsilon(1e-12));
    for (int i = 0; i < 8; ++i)
        CHECK(ex.node_feature_uncertainty(i) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fitted explanations have unit-interval importances with exact extremes") {
    auto ex = explainer::explain(toy_policy(31), {}, toy_graph(32), quick_cfg(31));
    CHECK(ex.edge_importance.minCoeff() == doctest::Approx(0.0));
    CHECK(ex.edge_importance.maxCoeff() == doctest::Approx(1.0));
    CHECK(ex.node_feature_importance.minCoeff() == doctest::Approx(0.0));
    CHECK(ex.node_feature_importance.maxCoeff() == doctest::Approx(1.0));
    for (int i = 0; i < 12; ++i) {
        CHECK(ex.edge_importance[i] >= 0.0);
        CHECK(ex.edge_importance[i] <= 1.0);
    }
}

TEST_CASE("explanation json has exactly 4 nodes and 12 edges") {
    auto ex = explainer::explain(toy_policy(41), {}, toy_graph(42), quick_cfg(41));
    auto j = nlohmann::json::parse(explainer::to_json(ex));
    REQUIRE(j["nodes"].size() == 4);
    REQUIRE(j["edges"].size() == 12);
    for (const auto& n : j["nodes"]) {
        REQUIRE(n["feature_importance"].size() == 2);
        REQUIRE(n["feature_uncertainty"].size() == 2);
    }
    for (const auto& e : j["edges"]) {
        CHECK(e.contains("src"));
        CHECK(e.contains("dst"));
        const double imp = e["importance"].get<double>();
        CHECK(imp >= 0.0);
        CHECK(imp <= 1.0);
    }
    CHECK(j["elbo_trace"].size() == ex.elbo_trace.size());
}

TEST_CASE("removing the top edge perturbs the target more than the bottom edge") {
    // Fidelity sanity: over 20 fitted instances the top-importance edge
    // should usually matter at least as much as the bottom-importance edge.
    // One-sided sign test at p < 0.05 over n = 20 requires >= 15 successes.
    int successes = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        nn::PolicyParameters p = toy_policy(seed * 3 + 1);
        graph::GraphState g = toy_graph(seed * 5 + 2);
        auto ex = explainer::explain(p, {}, g, quick_cfg(seed));

        Eigen::VectorXd lp = nn::forward_eval(g, p, {});
        int target = 0;
        lp.maxCoeff(&target);
        const double p0 = std::exp(lp[target]);

        int top = 0, bottom = 0;
        ex.edge_importance.maxCoeff(&top);
        ex.edge_importance.minCoeff(&bottom);
        auto drop_prob = [&](int edge) {
            Eigen::VectorXd mask = Eigen::VectorXd::Ones(12);
            mask[edge] = 0.0;
            Eigen::VectorXd mlp = nn::masked_forward(g, p, {}, mask, Mat::Ones(4, 2));
            return std::abs(std::exp(mlp[target]) - p0);
        };
        if (drop_prob(top) >= drop_prob(bottom)) ++successes;
    }
    CHECK(successes >= 15);
}
