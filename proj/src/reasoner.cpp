#include "tango/reasoner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace tango::reasoner {

void ReasonerConfig::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(feature_importance_threshold) || !in01(edge_importance_threshold) ||
        !in01(uncertainty_threshold) || !in01(similarity_threshold))
        throw std::invalid_argument("reasoner thresholds must lie in [0, 1]");
    if (!(penalty <= 0.0 && bonus >= 0.0))
        throw std::invalid_argument("reasoner requires penalty <= 0 <= bonus");
}

// --- condition expression tree ---------------------------------------------

struct Condition::Expr {
    enum class Kind { Cmp, And, Or, Not } kind = Kind::Cmp;
    enum class CmpOp { Lt, Le, Gt, Ge } op = CmpOp::Lt;
    std::string attr;
    double value = 0.0;
    std::shared_ptr<const Expr> a, b;
};

namespace {

double max_or(const std::vector<double>& v, double fallback) {
    return v.empty() ? fallback : *std::max_element(v.begin(), v.end());
}

double min_or(const std::vector<double>& v, double fallback) {
    return v.empty() ? fallback : *std::min_element(v.begin(), v.end());
}

double attribute_value(const std::string& name, const NodeContext& c) {
    if (name == "max_feature_importance") return c.feature_importance.maxCoeff();
    if (name == "min_feature_importance") return c.feature_importance.minCoeff();
    if (name == "max_feature_uncertainty") return c.feature_uncertainty.maxCoeff();
    if (name == "min_feature_uncertainty") return c.feature_uncertainty.minCoeff();
    if (name == "incident_edge_importance") return c.incident_edge_importance;
    if (name == "incident_edge_uncertainty") return c.incident_edge_uncertainty;
    if (name == "max_neighbor_similarity") return max_or(c.neighbor_similarities, 0.0);
    if (name == "min_neighbor_similarity") return min_or(c.neighbor_similarities, 0.0);
    throw std::invalid_argument("unknown rule attribute: " + name);
}

bool is_known_attribute(const std::string& name) {
    static const NodeContext probe{};
    try {
        attribute_value(name, probe);
        return true;
    } catch (const std::invalid_argument&) {
        return false;
    }
}

class Parser {
public:
    explicit Parser(const std::string& text) : s_(text) {}

    std::shared_ptr<const Condition::Expr> parse() {
        auto e = expr();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing input");
        return e;
    }

private:
    using Expr = Condition::Expr;
    using Ptr = std::shared_ptr<const Expr>;

    [[noreturn]] void fail(const std::string& what) {
        throw std::invalid_argument("rule condition parse error at offset " +
                                    std::to_string(pos_) + ": " + what);
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool consume_word(const char* w) {
        skip_ws();
        size_t n = 0;
        while (w[n]) ++n;
        if (s_.compare(pos_, n, w) != 0) return false;
        const size_t end = pos_ + n;
        if (end < s_.size() &&
            (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
            return false;
        pos_ = end;
        return true;
    }

    Ptr expr() {
        Ptr left = term();
        while (consume_word("OR")) {
            auto node = std::make_shared<Expr>();
            node->kind = Expr::Kind::Or;
            node->a = left;
            node->b = term();
            left = node;
        }
        return left;
    }

    Ptr term() {
        Ptr left = factor();
        while (consume_word("AND")) {
            auto node = std::make_shared<Expr>();
            node->kind = Expr::Kind::And;
            node->a = left;
            node->b = factor();
            left = node;
        }
        return left;
    }

    Ptr factor() {
        if (consume_word("NOT")) {
            auto node = std::make_shared<Expr>();
            node->kind = Expr::Kind::Not;
            node->a = factor();
            return node;
        }
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '(') {
            ++pos_;
            Ptr inner = expr();
            skip_ws();
            if (pos_ >= s_.size() || s_[pos_] != ')') fail("expected ')'");
            ++pos_;
            return inner;
        }
        return atom();
    }

    Ptr atom() {
        skip_ws();
        const size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        if (pos_ == start) fail("expected attribute name");
        auto node = std::make_shared<Expr>();
        node->kind = Expr::Kind::Cmp;
        node->attr = s_.substr(start, pos_ - start);
        if (!is_known_attribute(node->attr)) fail("unknown attribute '" + node->attr + "'");

        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '<') {
            ++pos_;
            node->op = (pos_ < s_.size() && s_[pos_] == '=') ? (++pos_, Expr::CmpOp::Le)
                                                             : Expr::CmpOp::Lt;
        } else if (pos_ < s_.size() && s_[pos_] == '>') {
            ++pos_;
            node->op = (pos_ < s_.size() && s_[pos_] == '=') ? (++pos_, Expr::CmpOp::Ge)
                                                             : Expr::CmpOp::Gt;
        } else {
            fail("expected comparison operator");
        }

        skip_ws();
        size_t used = 0;
        try {
            node->value = std::stod(s_.substr(pos_), &used);
        } catch (const std::exception&) {
            fail("expected numeric threshold");
        }
        pos_ += used;
        return node;
    }

    const std::string& s_;
    size_t pos_ = 0;
};

bool eval_expr(const Condition::Expr& e, const NodeContext& ctx) {
    using Kind = Condition::Expr::Kind;
    using CmpOp = Condition::Expr::CmpOp;
    switch (e.kind) {
        case Kind::And:
            return eval_expr(*e.a, ctx) && eval_expr(*e.b, ctx);
        case Kind::Or:
            return eval_expr(*e.a, ctx) || eval_expr(*e.b, ctx);
        case Kind::Not:
            return !eval_expr(*e.a, ctx);
        case Kind::Cmp: {
            const double v = attribute_value(e.attr, ctx);
            switch (e.op) {
                case CmpOp::Lt:
                    return v < e.value;
                case CmpOp::Le:
                    return v <= e.value;
                case CmpOp::Gt:
                    return v > e.value;
                case CmpOp::Ge:
                    return v >= e.value;
            }
        }
    }
    return false;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Condition Condition::parse(const std::string& text) {
    Condition c;
    c.root_ = Parser(text).parse();
    c.text_ = text;
    return c;
}

bool Condition::eval(const NodeContext& ctx) const {
    if (!root_) throw std::logic_error("evaluating an unparsed condition");
    return eval_expr(*root_, ctx);
}

double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: size mismatch");
    const double nu = u.norm(), nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return u.dot(v) / (nu * nv);
}

std::array<NodeContext, graph::kNumNodes> build_node_contexts(const graph::GraphState& g,
                                                              const explainer::Explanation& ex) {
    if (ex.edge_importance.size() != graph::kNumEdges ||
        ex.node_feature_importance.rows() != graph::kNumNodes)
        throw std::invalid_argument("explanation does not match the graph topology");

    std::array<NodeContext, graph::kNumNodes> out;
    for (int v = 0; v < graph::kNumNodes; ++v) {
        NodeContext& c = out[v];
        c.node = v;
        c.feature_importance = ex.node_feature_importance.row(v).transpose();
        c.feature_uncertainty = ex.node_feature_uncertainty.row(v).transpose();

        double imp = 0.0, unc = 0.0;
        int incident = 0;
        for (int e = 0; e < graph::kNumEdges; ++e) {
            const auto& [src, dst] = g.edge_index[e];
            if (src == v || dst == v) {
                imp += ex.edge_importance(e);
                unc += ex.edge_uncertainty(e);
                ++incident;
            }
            if (src == v) {
                c.neighbor_similarities.push_back(
                    cosine_similarity(g.node_features.row(v).transpose(),
                                      g.node_features.row(dst).transpose()));
            }
        }
        c.incident_edge_importance = incident ? imp / incident : 0.0;
        c.incident_edge_uncertainty = incident ? unc / incident : 0.0;
    }
    return out;
}

RuleBase default_rules(const ReasonerConfig& cfg) {
    cfg.validate();
    RuleBase base;
    const std::string rule1 =
        "max_feature_importance > " + fmt(cfg.feature_importance_threshold) +
        " AND incident_edge_importance > " + fmt(cfg.edge_importance_threshold) +
        " AND max_feature_uncertainty < " + fmt(cfg.uncertainty_threshold) +
        " AND incident_edge_uncertainty < " + fmt(cfg.uncertainty_threshold) +
        " AND max_neighbor_similarity > " + fmt(cfg.similarity_threshold);
    add_rule(base, {"consistent_salient_bonus", Condition::parse(rule1), cfg.bonus});

    const std::string rule2 =
        "max_feature_importance > " + fmt(cfg.feature_importance_threshold) +
        " AND max_neighbor_similarity <= " + fmt(cfg.similarity_threshold);
    add_rule(base, {"isolated_salient_penalty", Condition::parse(rule2), cfg.penalty});
    return base;
}

void add_rule(RuleBase& base, SymbolicRule rule) {
    for (const auto& r : base.rules)
        if (r.name == rule.name)
            throw std::invalid_argument("duplicate rule name: " + rule.name);
    base.rules.push_back(std::move(rule));
}

double evaluate(const RuleBase& base, const std::array<NodeContext, graph::kNumNodes>& contexts,
                std::vector<Firing>* record) {
    double r_star = 0.0;
    for (const auto& ctx : contexts) {
        for (const auto& rule : base.rules) {
            if (rule.condition.eval(ctx)) {
                r_star += rule.action;
                if (record) record->push_back({ctx.node, rule.name, rule.action});
            }
        }
    }
    return r_star;
}

double shape_reward(double base_reward, double r_star) {
    if (!std::isfinite(base_reward) || !std::isfinite(r_star))
        throw std::invalid_argument("shape_reward: non-finite input");
    return base_reward + r_star;
}

}  // namespace tango::reasoner
