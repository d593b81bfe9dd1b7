#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "tango/explainer.hpp"
#include "tango/graphstate.hpp"

namespace tango::reasoner {

struct ReasonerConfig {
    double feature_importance_threshold = 0.8;
    double edge_importance_threshold = 0.8;
    double uncertainty_threshold = 0.2;
    double similarity_threshold = 0.8;
    double bonus = 1.0;
    double penalty = -1.0;

    void validate() const;
};

struct NodeContext {
    int node = 0;
    Eigen::Vector2d feature_importance = Eigen::Vector2d::Zero();
    Eigen::Vector2d feature_uncertainty = Eigen::Vector2d::Zero();
    double incident_edge_importance = 0.0;
    double incident_edge_uncertainty = 0.0;
    std::vector<double> neighbor_similarities;  // cosine, out-neighbors
};

// Boolean expression tree over named NodeContext attributes. Grammar:
//   expr   := term (OR term)*
//   term   := factor (AND factor)*
//   factor := NOT factor | '(' expr ')' | attribute cmp number
//   cmp    := < | <= | > | >=
// Attributes: max/min_feature_importance, max/min_feature_uncertainty,
// incident_edge_importance, incident_edge_uncertainty,
// max/min_neighbor_similarity.
class Condition {
public:
    static Condition parse(const std::string& text);  // throws invalid_argument
    bool eval(const NodeContext& ctx) const;
    const std::string& text() const { return text_; }

    struct Expr;  // exposed for the parser implementation

private:
    std::shared_ptr<const Expr> root_;
    std::string text_;
};

struct SymbolicRule {
    std::string name;
    Condition condition;
    double action = 0.0;  // signed reward adjustment when the condition fires
};

struct RuleBase {
    std::vector<SymbolicRule> rules;
};

struct Firing {
    int node = 0;
    std::string rule;
    double value = 0.0;
};

double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

std::array<NodeContext, graph::kNumNodes> build_node_contexts(const graph::GraphState& g,
                                                              const explainer::Explanation& ex);

// Rule 1 rewards nodes whose features and incident edges are important with
// low uncertainty and at least one strongly similar neighbor; rule 2
// penalizes important nodes with no strongly similar neighbor.
RuleBase default_rules(const ReasonerConfig& cfg);

// Duplicate rule names are rejected; the base is left unchanged.
void add_rule(RuleBase& base, SymbolicRule rule);

double evaluate(const RuleBase& base,
                const std::array<NodeContext, graph::kNumNodes>& contexts,
                std::vector<Firing>* record = nullptr);

double shape_reward(double base_reward, double r_star);

}  // namespace tango::reasoner
