#include "tango/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tango::nn {

namespace {

Mat uniform_init(int rows, int cols, Rng& rng) {
    const double bound = std::sqrt(1.0 / rows);  // fan_in = rows
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    return m;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

PolicyParameters PolicyParameters::init(int n_actions, int hidden, Rng& rng) {
    require(n_actions >= 1 && hidden >= 1, "policy init: n_actions and hidden must be >= 1");
    PolicyParameters p;
    p.hidden = hidden;
    p.n_actions = n_actions;
    p.gcn_w0 = uniform_init(graph::kNumFeatures, hidden, rng);
    p.gcn_w1 = uniform_init(hidden, hidden, rng);
    p.ln0_gain = Mat::Ones(1, hidden);
    p.ln0_bias = Mat::Zero(1, hidden);
    p.ln1_gain = Mat::Ones(1, hidden);
    p.ln1_bias = Mat::Zero(1, hidden);
    p.head1_w = uniform_init(hidden, hidden, rng);
    p.head1_b = Mat::Zero(1, hidden);
    p.head2_w = uniform_init(hidden, n_actions, rng);
    p.head2_b = Mat::Zero(1, n_actions);
    return p;
}

PolicyParameters PolicyParameters::zeros_like(const PolicyParameters& p) {
    PolicyParameters z = p;
    for (Mat* m : z.blocks()) m->setZero();
    return z;
}

std::vector<Mat*> PolicyParameters::blocks() {
    return {&gcn_w0, &gcn_w1, &ln0_gain, &ln0_bias, &ln1_gain, &ln1_bias,
            &head1_w, &head1_b, &head2_w, &head2_b};
}

std::vector<const Mat*> PolicyParameters::blocks() const {
    return {&gcn_w0, &gcn_w1, &ln0_gain, &ln0_bias, &ln1_gain, &ln1_bias,
            &head1_w, &head1_b, &head2_w, &head2_b};
}

const std::vector<std::string>& PolicyParameters::block_names() {
    static const std::vector<std::string> names = {
        "gcn_w0", "gcn_w1", "ln0_gain", "ln0_bias", "ln1_gain",
        "ln1_bias", "head1_w", "head1_b", "head2_w", "head2_b"};
    return names;
}

void PolicyParameters::validate() const {
    require(hidden >= 1 && n_actions >= 1, "policy: bad dimensions");
    require(gcn_w0.cols() == hidden && gcn_w1.rows() == hidden && gcn_w1.cols() == hidden,
            "policy: gcn weight shape mismatch");
    for (const Mat* m : {&ln0_gain, &ln0_bias, &ln1_gain, &ln1_bias, &head1_b})
        require(m->rows() == 1 && m->cols() == hidden, "policy: 1 x hidden block shape mismatch");
    require(head1_w.rows() == hidden && head1_w.cols() == hidden, "policy: head1_w shape mismatch");
    require(head2_w.rows() == hidden && head2_w.cols() == n_actions,
            "policy: head2_w shape mismatch");
    require(head2_b.rows() == 1 && head2_b.cols() == n_actions, "policy: head2_b shape mismatch");
    for (const Mat* m : blocks()) require(m->allFinite(), "policy: non-finite parameter");
}

Mat normalized_adjacency(const std::vector<std::pair<int, int>>& edges, int n_nodes) {
    require(n_nodes >= 1, "normalized_adjacency: n_nodes must be >= 1");
    Mat a = Mat::Identity(n_nodes, n_nodes);  // self-loops
    for (const auto& [src, dst] : edges) {
        require(src >= 0 && src < n_nodes && dst >= 0 && dst < n_nodes,
                "normalized_adjacency: node index out of range");
        a(dst, src) = 1.0;
    }
    const Eigen::VectorXd deg = a.rowwise().sum();
    Mat out(n_nodes, n_nodes);
    for (int i = 0; i < n_nodes; ++i)
        for (int j = 0; j < n_nodes; ++j) out(i, j) = a(i, j) / std::sqrt(deg(i) * deg(j));
    return out;
}

Mat gcn_layer(const Mat& h, const Mat& adj_norm, const Mat& w, const Mat& ln_gain,
              const Mat& ln_bias, double eps) {
    require(h.cols() == w.rows(), "gcn_layer: feature/weight shape mismatch");
    require(adj_norm.rows() == h.rows() && adj_norm.cols() == h.rows(),
            "gcn_layer: adjacency shape mismatch");
    require(ln_gain.cols() == w.cols() && ln_bias.cols() == w.cols(),
            "gcn_layer: layernorm shape mismatch");
    Mat z = h * w;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mu = z.row(r).mean();
        const double var = (z.row(r).array() - mu).square().mean();
        z.row(r) = ((z.row(r).array() - mu) / std::sqrt(var + eps)) * ln_gain.row(0).array() +
                   ln_bias.row(0).array();
    }
    return (adj_norm * z).cwiseMax(0.0);
}

Mat global_add_pool(const Mat& h) { return h.colwise().sum(); }

double selu(double x, const ActivationConfig& cfg) {
    return x > 0.0 ? cfg.selu_lambda * x : cfg.selu_lambda * cfg.selu_alpha * (std::exp(x) - 1.0);
}

Mat selu(const Mat& x, const ActivationConfig& cfg) {
    return x.unaryExpr([&](double v) { return selu(v, cfg); });
}

void alpha_dropout_coeffs(int rows, int cols, double p, const ActivationConfig& cfg, Mode mode,
                          Rng& rng, Mat& C, Mat& D) {
    require(p >= 0.0 && p < 1.0, "alpha_dropout: p must be in [0, 1)");
    if (mode == Mode::Eval || p == 0.0) {
        C = Mat::Ones(rows, cols);
        D = Mat::Zero(rows, cols);
        return;
    }
    // Dropped units saturate at -lambda*alpha; the affine correction keeps
    // mean and variance of a self-normalized input unchanged in expectation.
    const double alpha_prime = -cfg.selu_lambda * cfg.selu_alpha;
    const double a = std::pow((1.0 - p) * (1.0 + alpha_prime * alpha_prime * p), -0.5);
    const double b = -a * p * alpha_prime;
    C.resize(rows, cols);
    D.resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const bool keep = rng.uniform() >= p;
            C(r, c) = keep ? a : 0.0;
            D(r, c) = keep ? b : a * alpha_prime + b;
        }
    }
}

Mat alpha_dropout(const Mat& x, double p, Rng& rng, Mode mode, const ActivationConfig& cfg) {
    Mat C, D;
    alpha_dropout_coeffs(static_cast<int>(x.rows()), static_cast<int>(x.cols()), p, cfg, mode, rng,
                         C, D);
    return C.cwiseProduct(x) + D;
}

ParamIds put_params(ad::Tape& t, const PolicyParameters& p, bool trainable) {
    auto put = [&](const Mat& m) { return trainable ? t.leaf(m) : t.constant(m); };
    ParamIds ids;
    ids.gcn_w0 = put(p.gcn_w0);
    ids.gcn_w1 = put(p.gcn_w1);
    ids.ln0_gain = put(p.ln0_gain);
    ids.ln0_bias = put(p.ln0_bias);
    ids.ln1_gain = put(p.ln1_gain);
    ids.ln1_bias = put(p.ln1_bias);
    ids.head1_w = put(p.head1_w);
    ids.head1_b = put(p.head1_b);
    ids.head2_w = put(p.head2_w);
    ids.head2_b = put(p.head2_b);
    return ids;
}

int forward_on_tape(ad::Tape& t, const ParamIds& ids, int x_id, int adj_id,
                    const ActivationConfig& cfg, const Mat& dropout_C, const Mat& dropout_D) {
    auto layer = [&](int h, int w, int gain, int bias) {
        int z = t.row_layernorm(t.matmul(h, w));
        z = t.add_row_broadcast(t.mul_row_broadcast(z, gain), bias);
        return t.relu(t.matmul(adj_id, z));
    };
    int h = layer(x_id, ids.gcn_w0, ids.ln0_gain, ids.ln0_bias);
    h = layer(h, ids.gcn_w1, ids.ln1_gain, ids.ln1_bias);
    int pooled = t.col_sum(h);  // 1 x hidden
    int pre = t.selu(t.add(t.matmul(pooled, ids.head1_w), ids.head1_b), cfg.selu_lambda,
                     cfg.selu_alpha);
    int dropped = t.cwise_affine(pre, dropout_C, dropout_D);
    int logits = t.add(t.matmul(dropped, ids.head2_w), ids.head2_b);
    return t.log_softmax_rows(logits);
}

Eigen::VectorXd forward(const graph::GraphState& g, const PolicyParameters& p,
                        const ActivationConfig& cfg, Mode mode, Rng& rng, ForwardTrace* trace) {
    p.validate();
    require(p.gcn_w0.rows() == graph::kNumFeatures, "forward: input feature width mismatch");

    Mat dc, dd;
    alpha_dropout_coeffs(1, p.hidden, cfg.alpha_dropout_p, cfg, mode, rng, dc, dd);

    std::vector<std::pair<int, int>> edges(g.edge_index.begin(), g.edge_index.end());
    const Mat adj = normalized_adjacency(edges, graph::kNumNodes);

    ForwardTrace local;
    ForwardTrace& tr = trace ? *trace : local;
    tr = ForwardTrace{};
    tr.mode = mode;
    tr.ids = put_params(tr.tape, p, /*trainable=*/true);
    const int x_id = tr.tape.constant(Mat(g.node_features));
    const int a_id = tr.tape.constant(adj);
    tr.logp_id = forward_on_tape(tr.tape, tr.ids, x_id, a_id, cfg, dc, dd);
    return tr.tape.value(tr.logp_id).row(0).transpose();
}

Eigen::VectorXd forward_eval(const graph::GraphState& g, const PolicyParameters& p,
                             const ActivationConfig& cfg) {
    Rng unused(0);
    return forward(g, p, cfg, Mode::Eval, unused, nullptr);
}

void accumulate_gradients(ForwardTrace& trace, int loss_id, PolicyParameters& grads) {
    trace.tape.backward(loss_id);
    const int ids[] = {trace.ids.gcn_w0,   trace.ids.gcn_w1,   trace.ids.ln0_gain,
                       trace.ids.ln0_bias, trace.ids.ln1_gain, trace.ids.ln1_bias,
                       trace.ids.head1_w,  trace.ids.head1_b,  trace.ids.head2_w,
                       trace.ids.head2_b};
    auto blocks = grads.blocks();
    for (size_t i = 0; i < blocks.size(); ++i) *blocks[i] += trace.tape.gradient(ids[i]);
}

int masked_forward_on_tape(ad::Tape& t, const PolicyParameters& p, const ActivationConfig& cfg,
                           const graph::GraphState& g, int feature_mask_id, int edge_mask_id) {
    p.validate();
    std::vector<std::pair<int, int>> edges(g.edge_index.begin(), g.edge_index.end());
    const Mat adj = normalized_adjacency(edges, graph::kNumNodes);

    const ParamIds ids = put_params(t, p, /*trainable=*/false);
    const int x_id = t.cwise_mul(t.constant(Mat(g.node_features)), feature_mask_id);
    const int a_id =
        t.cwise_mul(t.constant(adj), t.edge_scatter(edge_mask_id, edges, graph::kNumNodes));
    const Mat ones = Mat::Ones(1, p.hidden);
    const Mat zeros = Mat::Zero(1, p.hidden);
    return forward_on_tape(t, ids, x_id, a_id, cfg, ones, zeros);
}

Eigen::VectorXd masked_forward(const graph::GraphState& g, const PolicyParameters& p,
                               const ActivationConfig& cfg, const Eigen::VectorXd& edge_mask,
                               const Mat& feature_mask) {
    require(edge_mask.size() == graph::kNumEdges, "masked_forward: edge mask size mismatch");
    require(feature_mask.rows() == graph::kNumNodes && feature_mask.cols() == graph::kNumFeatures,
            "masked_forward: feature mask shape mismatch");
    require(edge_mask.minCoeff() >= 0.0 && edge_mask.maxCoeff() <= 1.0 &&
                feature_mask.minCoeff() >= 0.0 && feature_mask.maxCoeff() <= 1.0,
            "masked_forward: masks must lie in [0, 1]");
    ad::Tape t;
    const int fm = t.constant(feature_mask);
    const int em = t.constant(Mat(edge_mask));
    const int logp = masked_forward_on_tape(t, p, cfg, g, fm, em);
    return t.value(logp).row(0).transpose();
}

void sgd_update(PolicyParameters& params, const PolicyParameters& grads, double lr) {
    require(lr > 0.0, "sgd_update: lr must be > 0");
    auto pb = params.blocks();
    auto gb = grads.blocks();
    for (size_t i = 0; i < pb.size(); ++i) *pb[i] -= lr * (*gb[i]);
}

double lr_schedule(int step_count, double base_lr, int step_size, double gamma) {
    require(base_lr > 0.0 && step_size >= 1, "lr_schedule: bad arguments");
    return base_lr * std::pow(gamma, step_count / step_size);
}

double finite_diff_check(const std::function<double(const PolicyParameters&)>& loss,
                         const PolicyParameters& params, const PolicyParameters& analytic,
                         double eps, int max_entries, uint64_t seed) {
    require(eps > 0.0, "finite_diff_check: eps must be > 0");
    PolicyParameters work = params;
    auto wb = work.blocks();
    auto ab = analytic.blocks();

    std::vector<std::pair<size_t, Eigen::Index>> coords;
    for (size_t b = 0; b < wb.size(); ++b)
        for (Eigen::Index i = 0; i < wb[b]->size(); ++i) coords.emplace_back(b, i);
    if (max_entries > 0 && static_cast<size_t>(max_entries) < coords.size()) {
        Rng rng(seed);
        for (size_t i = 0; i < static_cast<size_t>(max_entries); ++i) {
            const size_t j = i + rng.below(coords.size() - i);
            std::swap(coords[i], coords[j]);
        }
        coords.resize(max_entries);
    }

    double max_rel = 0.0;
    for (const auto& [b, i] : coords) {
        double* slot = wb[b]->data() + i;
        const double orig = *slot;
        *slot = orig + eps;
        const double up = loss(work);
        *slot = orig - eps;
        const double down = loss(work);
        *slot = orig;
        const double numeric = (up - down) / (2.0 * eps);
        const double exact = ab[b]->data()[i];
        const double denom = std::max(std::fabs(numeric) + std::fabs(exact), 1e-6);
        max_rel = std::max(max_rel, std::fabs(numeric - exact) / denom);
    }
    return max_rel;
}

void save_checkpoint(const PolicyParameters& p, const std::string& path) {
    p.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out << "policy-checkpoint v1\n";
    out << "hidden " << p.hidden << "\n";
    out << "n_actions " << p.n_actions << "\n";
    const auto& names = PolicyParameters::block_names();
    auto blocks = p.blocks();
    char buf[64];
    for (size_t b = 0; b < blocks.size(); ++b) {
        const Mat& m = *blocks[b];
        out << "block " << names[b] << " " << m.rows() << " " << m.cols() << "\n";
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                std::snprintf(buf, sizeof(buf), "%a", m(r, c));  // hexfloat: bit-exact
                out << buf << (c + 1 < m.cols() ? " " : "\n");
            }
        }
    }
    out << "end\n";
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

PolicyParameters load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string magic, version;
    in >> magic >> version;
    if (magic != "policy-checkpoint" || version != "v1")
        throw std::runtime_error("unrecognized checkpoint header in " + path);
    PolicyParameters p;
    std::string key;
    in >> key >> p.hidden;
    if (key != "hidden") throw std::runtime_error("malformed checkpoint: expected hidden");
    in >> key >> p.n_actions;
    if (key != "n_actions") throw std::runtime_error("malformed checkpoint: expected n_actions");

    const auto& names = PolicyParameters::block_names();
    auto blocks = p.blocks();
    for (size_t b = 0; b < blocks.size(); ++b) {
        std::string tag, name;
        Eigen::Index rows = 0, cols = 0;
        in >> tag >> name >> rows >> cols;
        if (tag != "block" || name != names[b])
            throw std::runtime_error("malformed checkpoint: expected block " + names[b]);
        blocks[b]->resize(rows, cols);
        std::string tok;
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (!(in >> tok)) throw std::runtime_error("truncated checkpoint: " + path);
                char* endp = nullptr;
                (*blocks[b])(r, c) = std::strtod(tok.c_str(), &endp);
                if (endp == tok.c_str())
                    throw std::runtime_error("malformed checkpoint value: " + tok);
            }
        }
    }
    std::string tail;
    in >> tail;
    if (tail != "end") throw std::runtime_error("malformed checkpoint: missing end marker");
    p.validate();
    return p;
}

}  // namespace tango::nn
