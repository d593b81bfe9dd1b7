#pragma once

#include <string>
#include <vector>

#include "tango/policy.hpp"

namespace tango::explainer {

using Mat = ad::Mat;

struct ExplainerConfig {
    int mc_samples = 8;
    int grad_steps_per_block = 25;
    double lr = 0.05;
    double tol = 1e-4;
    int max_outer_iters = 50;
    double init_mu = 1.0;     // sigmoid(1) ~ 0.73, near-identity start
    double init_sigma = 0.1;
    uint64_t seed = 0;

    // Reduced budget used when explanations are fitted inside the training
    // loop every shaping period.
    static ExplainerConfig light();
    void validate() const;
};

// Mean-field Gaussian posterior over 12 edge-mask and 4x2 feature-mask
// latents. sigma = softplus(rho); mask = sigmoid(latent). Noise draws are
// fixed at fit time so the objective is deterministic during optimization.
struct MaskPosterior {
    Eigen::VectorXd edge_mu, edge_rho;  // 12
    Mat feat_mu, feat_rho;              // 4 x 2
    int mc_samples = 8;
    Mat noise;  // mc_samples x 20: columns 0..11 edges, 12..19 features row-major
    std::vector<double> elbo_trace;

    Eigen::VectorXd edge_sigma() const;
    Mat feat_sigma() const;
};

struct Explanation {
    Mat node_feature_importance;   // 4 x 2, min-max normalized within group
    Mat node_feature_uncertainty;  // 4 x 2, raw sigma
    Eigen::VectorXd edge_importance;   // 12, min-max normalized within group
    Eigen::VectorXd edge_uncertainty;  // 12, raw sigma
    std::vector<double> elbo_trace;
};

double softplus(double x);
double kl_gaussian(double mu, double sigma);  // vs N(0,1); sigma <= 0 throws

// ELBO = E_q[log p(target | masked graph)] - KL(q || N(0,1)), Monte-Carlo
// over the posterior's fixed noise. target_action must be the unmasked
// eval-mode argmax.
double elbo(const MaskPosterior& post, const nn::PolicyParameters& policy,
            const nn::ActivationConfig& act, const graph::GraphState& g, int target_action);

// Block coordinate ascent (edges, then features) with per-step backtracking;
// the recorded elbo_trace is non-decreasing by construction.
MaskPosterior cavi_fit(const nn::PolicyParameters& policy, const nn::ActivationConfig& act,
                       const graph::GraphState& g, const ExplainerConfig& cfg);

Explanation extract_explanation(const MaskPosterior& post);

Explanation explain(const nn::PolicyParameters& policy, const nn::ActivationConfig& act,
                    const graph::GraphState& g, const ExplainerConfig& cfg);

std::string to_json(const Explanation& ex);

}  // namespace tango::explainer
