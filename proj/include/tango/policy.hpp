#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tango/autodiff.hpp"
#include "tango/graphstate.hpp"
#include "tango/rng.hpp"

namespace tango::nn {

using Mat = ad::Mat;

struct ActivationConfig {
    double selu_lambda = 1.0507009873554805;
    double selu_alpha = 1.6732632423543772;
    double alpha_dropout_p = 0.1;
};

// Two GCN layers (no bias, per-row layernorm with learnable gain/bias inside
// the propagation), global add pool, then a two-layer head with SELU and
// alpha dropout, ending in log-softmax over actions.
struct PolicyParameters {
    Mat gcn_w0;             // in_features x hidden
    Mat gcn_w1;             // hidden x hidden
    Mat ln0_gain, ln0_bias; // 1 x hidden
    Mat ln1_gain, ln1_bias; // 1 x hidden
    Mat head1_w;            // hidden x hidden
    Mat head1_b;            // 1 x hidden
    Mat head2_w;            // hidden x n_actions
    Mat head2_b;            // 1 x n_actions
    int hidden = 64;
    int n_actions = 0;

    static PolicyParameters init(int n_actions, int hidden, Rng& rng);
    static PolicyParameters zeros_like(const PolicyParameters& p);

    std::vector<Mat*> blocks();
    std::vector<const Mat*> blocks() const;
    static const std::vector<std::string>& block_names();

    void validate() const;  // throws on shape inconsistency / non-finite
};

enum class Mode { Train, Eval };

// Symmetric-normalized adjacency with self-loops. Degrees are row sums of
// A + I where A(dst, src) = 1 for each directed edge.
Mat normalized_adjacency(const std::vector<std::pair<int, int>>& edges, int n_nodes);

// Plain (non-recording) reference operations. The tape forward must agree
// with compositions of these.
Mat gcn_layer(const Mat& h, const Mat& adj_norm, const Mat& w, const Mat& ln_gain,
              const Mat& ln_bias, double eps = 1e-5);
Mat global_add_pool(const Mat& h);  // 1 x d
double selu(double x, const ActivationConfig& cfg = {});
Mat selu(const Mat& x, const ActivationConfig& cfg = {});

// Dropout coefficients for y = C .* x + D. Eval or p = 0 gives identity.
// Train mode draws one Bernoulli keep decision per element from rng.
void alpha_dropout_coeffs(int rows, int cols, double p, const ActivationConfig& cfg, Mode mode,
                          Rng& rng, Mat& C, Mat& D);
Mat alpha_dropout(const Mat& x, double p, Rng& rng, Mode mode, const ActivationConfig& cfg = {});

// Tape plumbing. put_params registers every block either as a leaf
// (trainable) or a constant (frozen, e.g. during explanation).
struct ParamIds {
    int gcn_w0, gcn_w1, ln0_gain, ln0_bias, ln1_gain, ln1_bias;
    int head1_w, head1_b, head2_w, head2_b;
};

ParamIds put_params(ad::Tape& t, const PolicyParameters& p, bool trainable);

// Records the full forward pass; x_id is the n x in_features node-feature
// node, adj_id the n x n mixing matrix node. Returns the log-prob node
// (1 x n_actions). dropout_C/D are the precomputed affine coefficients.
int forward_on_tape(ad::Tape& t, const ParamIds& ids, int x_id, int adj_id,
                    const ActivationConfig& cfg, const Mat& dropout_C, const Mat& dropout_D);

struct ForwardTrace {
    ad::Tape tape;
    ParamIds ids{};
    int logp_id = -1;
    Mode mode = Mode::Eval;
};

// Standard forward on a graph state. Train mode consumes rng for dropout;
// eval mode consumes nothing and is a pure function.
Eigen::VectorXd forward(const graph::GraphState& g, const PolicyParameters& p,
                        const ActivationConfig& cfg, Mode mode, Rng& rng, ForwardTrace* trace);
Eigen::VectorXd forward_eval(const graph::GraphState& g, const PolicyParameters& p,
                             const ActivationConfig& cfg);

// Runs backward from a scalar loss node and accumulates parameter gradients.
void accumulate_gradients(ForwardTrace& trace, int loss_id, PolicyParameters& grads);

// Masked forward for explanations: node features are element-wise scaled by
// the feature-mask node (n x in_features) and each directed edge's entry in
// the fixed normalized adjacency is scaled by the edge-mask node (12 x 1).
// Self-loops stay unmasked; parameters are frozen constants.
int masked_forward_on_tape(ad::Tape& t, const PolicyParameters& p, const ActivationConfig& cfg,
                           const graph::GraphState& g, int feature_mask_id, int edge_mask_id);
Eigen::VectorXd masked_forward(const graph::GraphState& g, const PolicyParameters& p,
                               const ActivationConfig& cfg, const Eigen::VectorXd& edge_mask,
                               const Mat& feature_mask);

void sgd_update(PolicyParameters& params, const PolicyParameters& grads, double lr);
double lr_schedule(int step_count, double base_lr, int step_size = 100, double gamma = 0.1);

// Max relative error between analytic gradients and central finite
// differences of loss(params). max_entries > 0 subsamples that many scalar
// coordinates (deterministically from seed); 0 checks everything.
double finite_diff_check(const std::function<double(const PolicyParameters&)>& loss,
                         const PolicyParameters& params, const PolicyParameters& analytic,
                         double eps, int max_entries = 0, uint64_t seed = 12345);

// Hexfloat text checkpoint; load reproduces every bit.
void save_checkpoint(const PolicyParameters& p, const std::string& path);
PolicyParameters load_checkpoint(const std::string& path);

}  // namespace tango::nn
