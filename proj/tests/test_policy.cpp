#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "tango/policy.hpp"

using namespace tango;
using ad::Mat;

namespace {

graph::GraphState test_graph(double a = 0.9, double b = 0.1, double c = 0.4, double d = 0.7) {
    env::NetworkState s{a, b, c, d};
    return graph::state_to_graph_raw(s);
}

nn::PolicyParameters small_params(int n_actions, int hidden, uint64_t seed) {
    Rng rng(seed);
    return nn::PolicyParameters::init(n_actions, hidden, rng);
}

}  // namespace

TEST_CASE("normalized adjacency of the full directed 4-node graph is constant 0.25") {
    const auto& edges = graph::full_edge_list();
    Mat n = nn::normalized_adjacency({edges.begin(), edges.end()}, 4);
    REQUIRE(n.rows() == 4);
    REQUIRE(n.cols() == 4);
    for (int i = 0; i < 16; ++i) CHECK(n(i) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("normalized adjacency of an isolated node is the 1x1 identity") {
    Mat n = nn::normalized_adjacency({}, 1);
    REQUIRE(n.size() == 1);
    CHECK(n(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("normalized adjacency of a bidirectional pair is all 0.5") {
    Mat n = nn::normalized_adjacency({{0, 1}, {1, 0}}, 2);
    for (int i = 0; i < 4; ++i) CHECK(n(i) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("normalized adjacency rejects out-of-range node indices") {
    CHECK_THROWS(nn::normalized_adjacency({{0, 5}}, 2));
}

TEST_CASE("gcn layer with zero weights produces constant rows") {
    Mat h = Mat::Random(4, 3);
    Mat adj = nn::normalized_adjacency({{0, 1}, {1, 0}, {2, 3}, {3, 2}}, 4);
    Mat w = Mat::Zero(3, 5);
    Mat gain = Mat::Ones(1, 5), bias = Mat::Constant(1, 5, 0.3);
    Mat out = nn::gcn_layer(h, adj, w, gain, bias);
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c) CHECK(out(r, c) == doctest::Approx(0.3));
}

TEST_CASE("gcn layer matches a dense hand recomputation") {
    Mat h(2, 2);
    h << 1.0, -0.5, 0.25, 2.0;
    Mat adj = nn::normalized_adjacency({{0, 1}, {1, 0}}, 2);
    Mat w(2, 3);
    w << 0.2, -0.4, 0.6, 0.8, 0.1, -0.3;
    Mat gain = Mat::Constant(1, 3, 1.5), bias = Mat::Constant(1, 3, -0.1);
    const double eps = 1e-5;

    Mat pre = h * w;
    Mat ln(2, 3);
    for (int r = 0; r < 2; ++r) {
        const double mu = pre.row(r).mean();
        const double var = (pre.row(r).array() - mu).square().mean();
        ln.row(r) = (pre.row(r).array() - mu) / std::sqrt(var + eps);
    }
    Mat expect = (adj * ((ln.array().rowwise() * gain.row(0).array()).rowwise() +
                         bias.row(0).array())
                             .matrix())
                     .cwiseMax(0.0);
    Mat got = nn::gcn_layer(h, adj, w, gain, bias, eps);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("global add pool sums columns and ignores node order") {
    Mat h(2, 2);
    h << 1, 2, 3, 4;
    Mat p = nn::global_add_pool(h);
    CHECK(p(0, 0) == 4.0);
    CHECK(p(0, 1) == 6.0);
    Mat h2(2, 2);
    h2 << 3, 4, 1, 2;
    CHECK((nn::global_add_pool(h2) - p).cwiseAbs().maxCoeff() == 0.0);
    Mat single(1, 3);
    single << 5, 6, 7;
    CHECK((nn::global_add_pool(single) - single).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("selu fixed points and limit") {
    CHECK(nn::selu(0.0) == 0.0);
    CHECK(nn::selu(1.0) == doctest::Approx(1.0507009873554805).epsilon(1e-12));
    CHECK(nn::selu(-40.0) ==
          doctest::Approx(-1.0507009873554805 * 1.6732632423543772).epsilon(1e-6));
}

TEST_CASE("alpha dropout is the identity for p=0 and in eval mode") {
    Rng rng(3);
    Mat x = Mat::Random(4, 6);
    CHECK((nn::alpha_dropout(x, 0.0, rng, nn::Mode::Train) - x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((nn::alpha_dropout(x, 0.5, rng, nn::Mode::Eval) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("alpha dropout preserves mean and variance of standard normal inputs") {
    Rng data_rng(17), drop_rng(18);
    const int n = 100000;
    Mat x(1, n);
    for (int i = 0; i < n; ++i) x(0, i) = data_rng.normal();
    Mat y = nn::alpha_dropout(x, 0.1, drop_rng, nn::Mode::Train);
    const double mean = y.mean();
    const double var = (y.array() - mean).square().mean();
    CHECK(mean > -0.05);
    CHECK(mean < 0.05);
    CHECK(var > 0.9);
    CHECK(var < 1.1);
}

TEST_CASE("forward with all-zero weights is uniform over actions") {
    nn::PolicyParameters p = small_params(10, 8, 1);
    for (Mat* b : p.blocks()) b->setZero();
    Eigen::VectorXd lp = nn::forward_eval(test_graph(), p, {});
    for (int i = 0; i < 10; ++i) CHECK(lp[i] == doctest::Approx(-std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("forward log-probabilities exponentiate to a distribution") {
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        nn::PolicyParameters p = small_params(7, 12, seed);
        Eigen::VectorXd lp = nn::forward_eval(test_graph(0.1 * seed, 0.3, 0.9, 0.2), p, {});
        CHECK(lp.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((lp.array() <= 0.0).all());
    }
}

TEST_CASE("eval forward is deterministic and consumes no randomness") {
    nn::PolicyParameters p = small_params(6, 10, 5);
    graph::GraphState g = test_graph();
    Eigen::VectorXd a = nn::forward_eval(g, p, {});
    Eigen::VectorXd b = nn::forward_eval(g, p, {});
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    Rng r1(99), r2(99);
    nn::ForwardTrace tr;
    Eigen::VectorXd c = nn::forward(g, p, {}, nn::Mode::Eval, r1, &tr);
    CHECK(r1.uniform() == r2.uniform());  // rng untouched in eval mode
    CHECK((a - c).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward equals an independent dense recomputation") {
    nn::PolicyParameters p = small_params(5, 6, 7);
    graph::GraphState g = test_graph(0.3, 0.8, 0.1, 0.6);
    const nn::ActivationConfig act;

    // Oracle assembled from raw Eigen arithmetic only.
    Mat x = g.node_features;
    Mat adj = Mat::Constant(4, 4, 0.25);
    auto layer = [&](const Mat& h, const Mat& w, const Mat& gain, const Mat& bias) {
        Mat pre = h * w;
        Mat ln(pre.rows(), pre.cols());
        for (int r = 0; r < pre.rows(); ++r) {
            const double mu = pre.row(r).mean();
            const double var = (pre.row(r).array() - mu).square().mean();
            ln.row(r) = (pre.row(r).array() - mu) / std::sqrt(var + 1e-5);
        }
        Mat affined =
            ((ln.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array());
        return Mat((adj * affined.matrix()).cwiseMax(0.0));
    };
    Mat h = layer(x, p.gcn_w0, p.ln0_gain, p.ln0_bias);
    h = layer(h, p.gcn_w1, p.ln1_gain, p.ln1_bias);
    Mat pooled = h.colwise().sum();
    Mat z = pooled * p.head1_w + p.head1_b;
    for (int i = 0; i < z.size(); ++i)
        z(i) = z(i) > 0 ? act.selu_lambda * z(i)
                        : act.selu_lambda * act.selu_alpha * (std::exp(z(i)) - 1.0);
    Mat logits = z * p.head2_w + p.head2_b;
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    Eigen::VectorXd expect = (logits.array() - lse).transpose();

    Eigen::VectorXd got = nn::forward_eval(g, p, act);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("composed policy gradients match finite differences") {
    nn::PolicyParameters p = small_params(5, 6, 11);
    graph::GraphState g = test_graph(0.2, 0.9, 0.5, 0.3);
    const nn::ActivationConfig act;

    // Loss: negative log-probability of action 2 plus an entropy term, the
    // same structure the training loss uses per step.
    auto loss_value = [&](const nn::PolicyParameters& q) {
        Eigen::VectorXd lp = nn::forward_eval(g, q, act);
        double h = 0.0;
        for (int i = 0; i < lp.size(); ++i) h -= std::exp(lp[i]) * lp[i];
        return -lp[2] - 0.01 * h;
    };

    nn::ForwardTrace tr;
    Rng rng(0);
    nn::forward(g, p, act, nn::Mode::Eval, rng, &tr);
    ad::Tape& t = tr.tape;
    const int picked = t.pick_per_row(tr.logp_id, {2});
    const int entropy = t.entropy_from_logp(tr.logp_id);
    const int loss = t.sub(t.affine(picked, -1.0, 0.0), t.affine(entropy, 0.01, 0.0));
    nn::PolicyParameters grads = nn::PolicyParameters::zeros_like(p);
    nn::accumulate_gradients(tr, t.sum_all(loss), grads);

    CHECK(nn::finite_diff_check(loss_value, p, grads, 1e-5, 300) < 1e-4);
}

TEST_CASE("finite difference harness on a quadratic toy loss") {
    nn::PolicyParameters p = small_params(4, 5, 13);
    auto loss = [](const nn::PolicyParameters& q) {
        double s = 0.0;
        for (const Mat* b : q.blocks()) s += b->array().square().sum();
        return s;
    };
    nn::PolicyParameters analytic = nn::PolicyParameters::zeros_like(p);
    auto pb = p.blocks();
    auto ab = analytic.blocks();
    for (size_t i = 0; i < pb.size(); ++i) *ab[i] = 2.0 * (*pb[i]);
    CHECK(nn::finite_diff_check(loss, p, analytic, 1e-5) < 1e-8);
}

TEST_CASE("masked forward with identity masks equals the plain forward") {
    nn::PolicyParameters p = small_params(6, 8, 19);
    graph::GraphState g = test_graph(0.7, 0.2, 0.8, 0.4);
    Eigen::VectorXd plain = nn::forward_eval(g, p, {});
    Eigen::VectorXd masked = nn::masked_forward(g, p, {}, Eigen::VectorXd::Ones(12),
                                                Mat::Ones(4, 2));
    CHECK((plain - masked).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("all-zero feature mask behaves like a zero-feature graph") {
    nn::PolicyParameters p = small_params(6, 8, 23);
    graph::GraphState g = test_graph(0.7, 0.2, 0.8, 0.4);
    graph::GraphState zeroed = g;
    zeroed.node_features.setZero();
    Eigen::VectorXd masked = nn::masked_forward(g, p, {}, Eigen::VectorXd::Ones(12),
                                                Mat::Zero(4, 2));
    Eigen::VectorXd expect = nn::forward_eval(zeroed, p, {});
    CHECK((masked - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("masked forward rejects out-of-range masks") {
    nn::PolicyParameters p = small_params(6, 8, 23);
    CHECK_THROWS(nn::masked_forward(test_graph(), p, {}, Eigen::VectorXd::Constant(12, 1.5),
                                    Mat::Ones(4, 2)));
}

TEST_CASE("learning-rate schedule steps down by gamma every step_size updates") {
    for (int s = 0; s < 100; ++s) CHECK(nn::lr_schedule(s, 1e-3) == doctest::Approx(1e-3));
    CHECK(nn::lr_schedule(100, 1e-3) == doctest::Approx(1e-4));
    CHECK(nn::lr_schedule(199, 1e-3) == doctest::Approx(1e-4));
    CHECK(nn::lr_schedule(200, 1e-3) == doctest::Approx(1e-5));
}

TEST_CASE("sgd with zero gradients leaves parameters unchanged") {
    nn::PolicyParameters p = small_params(5, 6, 29);
    nn::PolicyParameters copy = p;
    nn::sgd_update(p, nn::PolicyParameters::zeros_like(p), 0.1);
    auto a = p.blocks();
    auto b = copy.blocks();
    for (size_t i = 0; i < a.size(); ++i) CHECK((*a[i] - *b[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sgd subtracts lr-scaled gradients") {
    nn::PolicyParameters p = small_params(5, 6, 31);
    nn::PolicyParameters g = nn::PolicyParameters::zeros_like(p);
    g.head2_b.setConstant(2.0);
    const Mat before = p.head2_b;
    nn::sgd_update(p, g, 0.25);
    CHECK((p.head2_b - (before.array() - 0.5).matrix()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("checkpoint round trip is bit exact") {
    nn::PolicyParameters p = small_params(10, 16, 37);
    const std::string path =
        (std::filesystem::temp_directory_path() / "policy_roundtrip_test.txt").string();
    nn::save_checkpoint(p, path);
    nn::PolicyParameters q = nn::load_checkpoint(path);
    std::remove(path.c_str());
    auto a = p.blocks();
    auto b = q.blocks();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i]->rows() == b[i]->rows());
        REQUIRE(a[i]->cols() == b[i]->cols());
        for (int j = 0; j < a[i]->size(); ++j) CHECK((*a[i])(j) == (*b[i])(j));
    }
    CHECK(p.hidden == q.hidden);
    CHECK(p.n_actions == q.n_actions);
}

TEST_CASE("train-mode dropout is reproducible from the rng seed") {
    nn::PolicyParameters p = small_params(8, 10, 41);
    graph::GraphState g = test_graph();
    Rng r1(7), r2(7);
    Eigen::VectorXd a = nn::forward(g, p, {}, nn::Mode::Train, r1, nullptr);
    Eigen::VectorXd b = nn::forward(g, p, {}, nn::Mode::Train, r2, nullptr);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}
