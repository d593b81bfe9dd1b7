#include "tango/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tango::explainer {

namespace {

constexpr int kEdgeLatents = graph::kNumEdges;                        // 12
constexpr int kFeatLatents = graph::kNumNodes * graph::kNumFeatures;  // 8

double softplus_inv(double y) {
    if (y <= 0.0) throw std::invalid_argument("softplus_inv: argument must be > 0");
    return y + std::log1p(-std::exp(-y));
}

struct ElboTape {
    ad::Tape t;
    int edge_mu, edge_rho, feat_mu, feat_rho;
    int elbo;
};

// One KL block: sum over latents of (mu^2 + sigma^2 - 1 - ln sigma^2)/2,
// expressed on the tape so gradients flow to mu and rho.
int kl_on_tape(ad::Tape& t, int mu, int sigma, int n_latents) {
    const int sq_sigma = t.square(sigma);
    int body = t.add(t.square(mu), sq_sigma);
    body = t.sub(body, t.log(sq_sigma));
    return t.affine(t.sum_all(body), 0.5, -0.5 * n_latents);
}

ElboTape build_elbo_tape(const MaskPosterior& post, const nn::PolicyParameters& policy,
                         const nn::ActivationConfig& act, const graph::GraphState& g,
                         int target_action) {
    if (post.noise.rows() != post.mc_samples || post.noise.cols() != kEdgeLatents + kFeatLatents)
        throw std::invalid_argument("posterior noise shape inconsistent with mc_samples");
    if (target_action < 0 || target_action >= policy.n_actions)
        throw std::invalid_argument("target action out of range");

    ElboTape et;
    ad::Tape& t = et.t;
    et.edge_mu = t.leaf(Mat(post.edge_mu));
    et.edge_rho = t.leaf(Mat(post.edge_rho));
    et.feat_mu = t.leaf(post.feat_mu);
    et.feat_rho = t.leaf(post.feat_rho);

    const int edge_sigma = t.softplus(et.edge_rho);
    const int feat_sigma = t.softplus(et.feat_rho);

    int like_sum = -1;
    for (int s = 0; s < post.mc_samples; ++s) {
        Mat en(kEdgeLatents, 1);
        for (int e = 0; e < kEdgeLatents; ++e) en(e, 0) = post.noise(s, e);
        Mat fn(graph::kNumNodes, graph::kNumFeatures);
        for (int n = 0; n < graph::kNumNodes; ++n)
            for (int f = 0; f < graph::kNumFeatures; ++f)
                fn(n, f) = post.noise(s, kEdgeLatents + n * graph::kNumFeatures + f);

        const int edge_z = t.add(et.edge_mu, t.cwise_mul(edge_sigma, t.constant(en)));
        const int feat_z = t.add(et.feat_mu, t.cwise_mul(feat_sigma, t.constant(fn)));
        const int logp = nn::masked_forward_on_tape(t, policy, act, g, t.sigmoid(feat_z),
                                                    t.sigmoid(edge_z));
        const int like = t.pick_per_row(logp, {target_action});
        like_sum = (like_sum < 0) ? like : t.add(like_sum, like);
    }
    const int like_mean = t.affine(like_sum, 1.0 / post.mc_samples, 0.0);
    const int kl = t.add(kl_on_tape(t, et.edge_mu, edge_sigma, kEdgeLatents),
                         kl_on_tape(t, et.feat_mu, feat_sigma, kFeatLatents));
    et.elbo = t.sub(like_mean, kl);
    return et;
}

double elbo_value(const MaskPosterior& post, const nn::PolicyParameters& policy,
                  const nn::ActivationConfig& act, const graph::GraphState& g, int target) {
    ElboTape et = build_elbo_tape(post, policy, act, g, target);
    return et.t.value(et.elbo)(0, 0);
}

struct ElboGrads {
    Eigen::VectorXd edge_mu, edge_rho;
    Mat feat_mu, feat_rho;
};

double elbo_with_grad(const MaskPosterior& post, const nn::PolicyParameters& policy,
                      const nn::ActivationConfig& act, const graph::GraphState& g, int target,
                      ElboGrads& grads) {
    ElboTape et = build_elbo_tape(post, policy, act, g, target);
    et.t.backward(et.elbo);
    grads.edge_mu = et.t.gradient(et.edge_mu).col(0);
    grads.edge_rho = et.t.gradient(et.edge_rho).col(0);
    grads.feat_mu = et.t.gradient(et.feat_mu);
    grads.feat_rho = et.t.gradient(et.feat_rho);
    return et.t.value(et.elbo)(0, 0);
}

Eigen::VectorXd minmax_normalize(const Eigen::VectorXd& raw) {
    const double lo = raw.minCoeff(), hi = raw.maxCoeff();
    if (hi - lo < 1e-12) return Eigen::VectorXd::Constant(raw.size(), 0.5);
    return (raw.array() - lo) / (hi - lo);
}

}  // namespace

ExplainerConfig ExplainerConfig::light() {
    ExplainerConfig c;
    c.mc_samples = 4;
    c.grad_steps_per_block = 5;
    c.max_outer_iters = 3;
    c.tol = 1e-3;
    return c;
}

void ExplainerConfig::validate() const {
    if (mc_samples < 1) throw std::invalid_argument("explainer.mc_samples must be >= 1");
    if (grad_steps_per_block < 1)
        throw std::invalid_argument("explainer.grad_steps_per_block must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("explainer.lr must be > 0");
    if (tol < 0.0) throw std::invalid_argument("explainer.tol must be >= 0");
    if (max_outer_iters < 0) throw std::invalid_argument("explainer.max_outer_iters must be >= 0");
    if (init_sigma <= 0.0) throw std::invalid_argument("explainer.init_sigma must be > 0");
}

Eigen::VectorXd MaskPosterior::edge_sigma() const {
    return edge_rho.unaryExpr([](double r) { return softplus(r); });
}

Mat MaskPosterior::feat_sigma() const {
    return feat_rho.unaryExpr([](double r) { return softplus(r); });
}

double softplus(double x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); }

double kl_gaussian(double mu, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("kl_gaussian: sigma must be > 0");
    return 0.5 * (mu * mu + sigma * sigma - 1.0 - std::log(sigma * sigma));
}

double elbo(const MaskPosterior& post, const nn::PolicyParameters& policy,
            const nn::ActivationConfig& act, const graph::GraphState& g, int target_action) {
    return elbo_value(post, policy, act, g, target_action);
}

MaskPosterior cavi_fit(const nn::PolicyParameters& policy, const nn::ActivationConfig& act,
                       const graph::GraphState& g, const ExplainerConfig& cfg) {
    cfg.validate();
    const Eigen::VectorXd base_logp = nn::forward_eval(g, policy, act);
    int target = 0;
    base_logp.maxCoeff(&target);

    MaskPosterior post;
    post.mc_samples = cfg.mc_samples;
    post.edge_mu = Eigen::VectorXd::Constant(kEdgeLatents, cfg.init_mu);
    post.edge_rho = Eigen::VectorXd::Constant(kEdgeLatents, softplus_inv(cfg.init_sigma));
    post.feat_mu = Mat::Constant(graph::kNumNodes, graph::kNumFeatures, cfg.init_mu);
    post.feat_rho =
        Mat::Constant(graph::kNumNodes, graph::kNumFeatures, softplus_inv(cfg.init_sigma));
    Rng rng = Rng::substream(cfg.seed, 0xE);
    post.noise.resize(cfg.mc_samples, kEdgeLatents + kFeatLatents);
    for (Eigen::Index r = 0; r < post.noise.rows(); ++r)
        for (Eigen::Index c = 0; c < post.noise.cols(); ++c) post.noise(r, c) = rng.normal();

    double current = elbo_value(post, policy, act, g, target);
    post.elbo_trace.push_back(current);

    ElboGrads grads;
    for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
        for (int block = 0; block < 2; ++block) {  // 0: edges, 1: features
            for (int step = 0; step < cfg.grad_steps_per_block; ++step) {
                const double e0 = elbo_with_grad(post, policy, act, g, target, grads);
                // Ascent with backtracking: never accept a step that lowers
                // the (deterministic, fixed-noise) objective.
                double lr = cfg.lr;
                bool moved = false;
                for (int attempt = 0; attempt < 20; ++attempt) {
                    MaskPosterior cand = post;
                    if (block == 0) {
                        cand.edge_mu += lr * grads.edge_mu;
                        cand.edge_rho += lr * grads.edge_rho;
                    } else {
                        cand.feat_mu += lr * grads.feat_mu;
                        cand.feat_rho += lr * grads.feat_rho;
                    }
                    const double e1 = elbo_value(cand, policy, act, g, target);
                    if (std::isfinite(e1) && e1 >= e0) {
                        post = std::move(cand);
                        current = e1;
                        moved = true;
                        break;
                    }
                    lr *= 0.5;
                }
                if (!moved) break;  // block stationary under this noise
            }
        }
        if (!std::isfinite(current)) {
            std::ostringstream msg;
            msg << "cavi_fit: non-finite ELBO after " << post.elbo_trace.size()
                << " recorded iterations; last finite value "
                << (post.elbo_trace.empty() ? 0.0 : post.elbo_trace.back());
            throw std::runtime_error(msg.str());
        }
        const double prev = post.elbo_trace.back();
        post.elbo_trace.push_back(current);
        if (current - prev < cfg.tol) break;
    }
    return post;
}

Explanation extract_explanation(const MaskPosterior& post) {
    Explanation ex;
    Eigen::VectorXd edge_raw =
        post.edge_mu.unaryExpr([](double m) { return 1.0 / (1.0 + std::exp(-m)); });
    ex.edge_importance = minmax_normalize(edge_raw);
    ex.edge_uncertainty = post.edge_sigma();

    Eigen::VectorXd feat_raw(kFeatLatents);
    for (int n = 0; n < graph::kNumNodes; ++n)
        for (int f = 0; f < graph::kNumFeatures; ++f)
            feat_raw(n * graph::kNumFeatures + f) =
                1.0 / (1.0 + std::exp(-post.feat_mu(n, f)));
    const Eigen::VectorXd feat_norm = minmax_normalize(feat_raw);
    ex.node_feature_importance.resize(graph::kNumNodes, graph::kNumFeatures);
    for (int n = 0; n < graph::kNumNodes; ++n)
        for (int f = 0; f < graph::kNumFeatures; ++f)
            ex.node_feature_importance(n, f) = feat_norm(n * graph::kNumFeatures + f);
    ex.node_feature_uncertainty = post.feat_sigma();
    ex.elbo_trace = post.elbo_trace;
    return ex;
}

Explanation explain(const nn::PolicyParameters& policy, const nn::ActivationConfig& act,
                    const graph::GraphState& g, const ExplainerConfig& cfg) {
    return extract_explanation(cavi_fit(policy, act, g, cfg));
}

std::string to_json(const Explanation& ex) {
    nlohmann::json doc;
    doc["nodes"] = nlohmann::json::array();
    for (int n = 0; n < graph::kNumNodes; ++n) {
        doc["nodes"].push_back(
            {{"index", n},
             {"feature_importance",
              {ex.node_feature_importance(n, 0), ex.node_feature_importance(n, 1)}},
             {"feature_uncertainty",
              {ex.node_feature_uncertainty(n, 0), ex.node_feature_uncertainty(n, 1)}}});
    }
    doc["edges"] = nlohmann::json::array();
    const auto& edges = graph::full_edge_list();
    for (int e = 0; e < graph::kNumEdges; ++e) {
        doc["edges"].push_back({{"src", edges[e].first},
                                {"dst", edges[e].second},
                                {"importance", ex.edge_importance(e)},
                                {"uncertainty", ex.edge_uncertainty(e)}});
    }
    doc["elbo_trace"] = ex.elbo_trace;
    return doc.dump(2);
}

}  // namespace tango::explainer
