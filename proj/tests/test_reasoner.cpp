#include <cmath>

#include "doctest.h"
#include "tango/reasoner.hpp"

using namespace tango;

namespace {

reasoner::NodeContext make_ctx(double fi0, double fi1, double ei, double fu, double eu,
                               std::vector<double> sims) {
    reasoner::NodeContext ctx;
    ctx.feature_importance << fi0, fi1;
    ctx.feature_uncertainty << fu, fu;
    ctx.incident_edge_importance = ei;
    ctx.incident_edge_uncertainty = eu;
    ctx.neighbor_similarities = std::move(sims);
    return ctx;
}

explainer::Explanation uniform_explanation(double edge_imp, double edge_unc, double feat_imp,
                                           double feat_unc) {
    explainer::Explanation ex;
    ex.edge_importance = Eigen::VectorXd::Constant(12, edge_imp);
    ex.edge_uncertainty = Eigen::VectorXd::Constant(12, edge_unc);
    ex.node_feature_importance = ad::Mat::Constant(4, 2, feat_imp);
    ex.node_feature_uncertainty = ad::Mat::Constant(4, 2, feat_unc);
    return ex;
}

}  // namespace

TEST_CASE("cosine similarity basics") {
    Eigen::VectorXd u(2), v(2);
    u << 3, 4;
    CHECK(reasoner::cosine_similarity(u, u) == doctest::Approx(1.0));
    v << -4, 3;
    CHECK(reasoner::cosine_similarity(u, v) == doctest::Approx(0.0));
    u << 1, 0;
    v << 1, 1;
    CHECK(reasoner::cosine_similarity(u, v) == doctest::Approx(std::sqrt(2.0) / 2.0));
}

TEST_CASE("cosine similarity of a zero vector is defined as zero") {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(2), u(2);
    u << 1, 2;
    CHECK(reasoner::cosine_similarity(z, u) == 0.0);
    CHECK(reasoner::cosine_similarity(z, z) == 0.0);
}

TEST_CASE("positive rescaling of features never changes cosine similarity") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd u(2), v(2);
        u << rng.uniform(-2, 2), rng.uniform(-2, 2);
        v << rng.uniform(-2, 2), rng.uniform(-2, 2);
        const double k = rng.uniform(0.01, 10.0);
        CHECK(reasoner::cosine_similarity(u, v) ==
              doctest::Approx(reasoner::cosine_similarity(k * u, k * v)).epsilon(1e-12));
    }
}

TEST_CASE("node contexts aggregate incident edges and neighbor similarities") {
    env::NetworkState s{0.2, 0.8, 0.5, 0.6};
    graph::GraphState g = graph::state_to_graph_raw(s);
    auto ex = uniform_explanation(0.7, 0.15, 0.4, 0.1);
    auto ctx = reasoner::build_node_contexts(g, ex);
    REQUIRE(ctx.size() == 4);
    for (const auto& c : ctx) {
        CHECK(c.incident_edge_importance == doctest::Approx(0.7));  // 6 incident, all equal
        CHECK(c.incident_edge_uncertainty == doctest::Approx(0.15));
        CHECK(c.neighbor_similarities.size() == 3);  // out-neighbors in the 4-node graph
        CHECK(c.feature_importance[0] == doctest::Approx(0.4));
        CHECK(c.feature_uncertainty[1] == doctest::Approx(0.1));
    }
}

TEST_CASE("identical node features give all-one similarities") {
    env::NetworkState s{3, 3, 3, 3};
    graph::GraphState g = graph::state_to_graph_raw(s);
    auto ctx = reasoner::build_node_contexts(g, uniform_explanation(1, 0, 1, 0));
    for (const auto& c : ctx)
        for (double z : c.neighbor_similarities) CHECK(z == doctest::Approx(1.0));
}

TEST_CASE("consistent salient node earns the bonus") {
    auto rules = reasoner::default_rules({});
    auto ctx = make_ctx(0.9, 0.9, 0.85, 0.1, 0.1, {0.9, 0.85, 0.9});
    double total = 0.0;
    for (const auto& r : rules.rules)
        if (r.condition.eval(ctx)) total += r.action;
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("isolated salient node is penalized") {
    auto rules = reasoner::default_rules({});
    auto ctx = make_ctx(0.9, 0.2, 0.5, 0.5, 0.5, {0.2, 0.1, 0.3});
    double total = 0.0;
    for (const auto& r : rules.rules)
        if (r.condition.eval(ctx)) total += r.action;
    CHECK(total == doctest::Approx(-1.0));
}

TEST_CASE("unimportant node triggers nothing") {
    auto rules = reasoner::default_rules({});
    auto ctx = make_ctx(0.5, 0.5, 0.9, 0.05, 0.05, {0.95, 0.9, 0.9});
    for (const auto& r : rules.rules) CHECK_FALSE(r.condition.eval(ctx));
}

TEST_CASE("default rules are mutually exclusive per node") {
    Rng rng(7);
    auto rules = reasoner::default_rules({});
    REQUIRE(rules.rules.size() == 2);
    for (int i = 0; i < 500; ++i) {
        auto ctx = make_ctx(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(),
                            rng.uniform(), {rng.uniform(), rng.uniform(), rng.uniform()});
        const bool both =
            rules.rules[0].condition.eval(ctx) && rules.rules[1].condition.eval(ctx);
        CHECK_FALSE(both);
    }
}

TEST_CASE("empty rule base evaluates to zero") {
    env::NetworkState s{1, 2, 3, 4};
    auto ctx = reasoner::build_node_contexts(graph::state_to_graph_raw(s),
                                             uniform_explanation(1, 0, 1, 0));
    CHECK(reasoner::evaluate(reasoner::RuleBase{}, ctx) == 0.0);
}

TEST_CASE("bonus firing on every node sums to four") {
    // All-equal features give similarity 1 everywhere; saturated importances
    // and zero uncertainties satisfy the bonus rule on all 4 nodes.
    env::NetworkState s{2, 2, 2, 2};
    auto ctx = reasoner::build_node_contexts(graph::state_to_graph_raw(s),
                                             uniform_explanation(0.95, 0.01, 0.95, 0.01));
    std::vector<reasoner::Firing> fired;
    const double r = reasoner::evaluate(reasoner::default_rules({}), ctx, &fired);
    CHECK(r == doctest::Approx(4.0));
    CHECK(fired.size() == 4);
    for (const auto& f : fired) CHECK(f.value == doctest::Approx(1.0));
}

TEST_CASE("rule evaluation is additive over disjoint rule sets") {
    env::NetworkState s{2, 2, 2, 2};
    auto ctx = reasoner::build_node_contexts(graph::state_to_graph_raw(s),
                                             uniform_explanation(0.95, 0.01, 0.95, 0.01));
    reasoner::RuleBase a, b, both;
    reasoner::add_rule(a, {"r1", reasoner::Condition::parse("max_feature_importance > 0.5"), 2.0});
    reasoner::add_rule(b, {"r2", reasoner::Condition::parse("min_neighbor_similarity > 0.5"),
                           -0.5});
    both = a;
    reasoner::add_rule(both, b.rules[0]);
    CHECK(reasoner::evaluate(both, ctx) ==
          doctest::Approx(reasoner::evaluate(a, ctx) + reasoner::evaluate(b, ctx)));
}

TEST_CASE("always-true extra rule adds its action once per node") {
    env::NetworkState s{1, 2, 3, 4};
    auto ctx = reasoner::build_node_contexts(graph::state_to_graph_raw(s),
                                             uniform_explanation(0.3, 0.2, 0.3, 0.2));
    reasoner::RuleBase base;
    reasoner::add_rule(base,
                       {"always", reasoner::Condition::parse("max_feature_importance >= 0"), 2.0});
    CHECK(reasoner::evaluate(base, ctx) == doctest::Approx(8.0));
}

TEST_CASE("shape reward is plain addition") {
    CHECK(reasoner::shape_reward(2.0, -1.0) == 1.0);
    CHECK(reasoner::shape_reward(-8.0, 2.0) == -6.0);
    CHECK(reasoner::shape_reward(3.25, 0.0) == 3.25);
}

TEST_CASE("duplicate rule names are rejected and leave the base unchanged") {
    reasoner::RuleBase base;
    reasoner::add_rule(base, {"r", reasoner::Condition::parse("max_feature_importance > 0.5"),
                              1.0});
    CHECK_THROWS(reasoner::add_rule(
        base, {"r", reasoner::Condition::parse("min_feature_importance > 0.1"), 2.0}));
    CHECK(base.rules.size() == 1);
    CHECK(base.rules[0].action == 1.0);
}

TEST_CASE("condition grammar supports boolean connectives and parentheses") {
    auto c = reasoner::Condition::parse(
        "(max_feature_importance > 0.8 AND NOT incident_edge_uncertainty >= 0.2) OR "
        "min_neighbor_similarity >= 0.99");
    CHECK(c.eval(make_ctx(0.9, 0.1, 0.5, 0.5, 0.1, {0.0})));           // left conjunct
    CHECK(c.eval(make_ctx(0.1, 0.1, 0.5, 0.5, 0.9, {0.995, 0.999}))); // right disjunct
    CHECK_FALSE(c.eval(make_ctx(0.1, 0.1, 0.5, 0.5, 0.9, {0.5})));
}

TEST_CASE("condition attributes resolve max and min correctly") {
    auto cmax = reasoner::Condition::parse("max_feature_importance > 0.8");
    auto cmin = reasoner::Condition::parse("min_feature_importance > 0.8");
    auto ctx = make_ctx(0.9, 0.2, 0, 0, 0, {0.5});
    CHECK(cmax.eval(ctx));
    CHECK_FALSE(cmin.eval(ctx));
}

TEST_CASE("malformed conditions raise parse errors") {
    CHECK_THROWS(reasoner::Condition::parse(""));
    CHECK_THROWS(reasoner::Condition::parse("bogus_attribute > 0.5"));
    CHECK_THROWS(reasoner::Condition::parse("max_feature_importance >"));
    CHECK_THROWS(reasoner::Condition::parse("max_feature_importance > 0.5 AND"));
    CHECK_THROWS(reasoner::Condition::parse("(max_feature_importance > 0.5"));
}

TEST_CASE("rule evaluation is pure") {
    env::NetworkState s{1, 5, 2, 4};
    auto ctx = reasoner::build_node_contexts(graph::state_to_graph_raw(s),
                                             uniform_explanation(0.9, 0.1, 0.9, 0.1));
    auto rules = reasoner::default_rules({});
    const double a = reasoner::evaluate(rules, ctx);
    const double b = reasoner::evaluate(rules, ctx);
    CHECK(a == b);
}
