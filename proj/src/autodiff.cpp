#include "tango/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace tango::ad {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

Mat stable_softplus(const Mat& x) {
    return x.unaryExpr([](double v) { return std::log1p(std::exp(-std::fabs(v))) + std::max(v, 0.0); });
}

Mat logistic(const Mat& x) {
    return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

int Tape::push(Node n) {
    if (n.op != Op::Leaf && n.op != Op::Const) {
        n.needs_grad = (n.a >= 0 && nodes_[n.a].needs_grad) || (n.b >= 0 && nodes_[n.b].needs_grad);
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(const Mat& value) {
    Node n;
    n.op = Op::Leaf;
    n.val = value;
    n.needs_grad = true;
    return push(std::move(n));
}

int Tape::constant(const Mat& value) {
    Node n;
    n.op = Op::Const;
    n.val = value;
    return push(std::move(n));
}

int Tape::constant(double value) {
    Mat m(1, 1);
    m(0, 0) = value;
    return constant(m);
}

int Tape::matmul(int a, int b) {
    require(nodes_[a].val.cols() == nodes_[b].val.rows(), "matmul shape mismatch");
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.val = nodes_[a].val * nodes_[b].val;
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    require(nodes_[a].val.rows() == nodes_[b].val.rows() &&
                nodes_[a].val.cols() == nodes_[b].val.cols(),
            "add shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.val = nodes_[a].val + nodes_[b].val;
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    require(nodes_[a].val.rows() == nodes_[b].val.rows() &&
                nodes_[a].val.cols() == nodes_[b].val.cols(),
            "sub shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.val = nodes_[a].val - nodes_[b].val;
    return push(std::move(n));
}

int Tape::cwise_mul(int a, int b) {
    require(nodes_[a].val.rows() == nodes_[b].val.rows() &&
                nodes_[a].val.cols() == nodes_[b].val.cols(),
            "cwise_mul shape mismatch");
    Node n;
    n.op = Op::CwiseMul;
    n.a = a;
    n.b = b;
    n.val = nodes_[a].val.cwiseProduct(nodes_[b].val);
    return push(std::move(n));
}

int Tape::add_row_broadcast(int m, int r) {
    require(nodes_[r].val.rows() == 1 && nodes_[r].val.cols() == nodes_[m].val.cols(),
            "add_row_broadcast shape mismatch");
    Node n;
    n.op = Op::AddRow;
    n.a = m;
    n.b = r;
    n.val = nodes_[m].val.rowwise() + nodes_[r].val.row(0);
    return push(std::move(n));
}

int Tape::mul_row_broadcast(int m, int r) {
    require(nodes_[r].val.rows() == 1 && nodes_[r].val.cols() == nodes_[m].val.cols(),
            "mul_row_broadcast shape mismatch");
    Node n;
    n.op = Op::MulRow;
    n.a = m;
    n.b = r;
    n.val = nodes_[m].val.array().rowwise() * nodes_[r].val.row(0).array();
    return push(std::move(n));
}

int Tape::add_col_broadcast(int m, int c) {
    require(nodes_[c].val.cols() == 1 && nodes_[c].val.rows() == nodes_[m].val.rows(),
            "add_col_broadcast shape mismatch");
    Node n;
    n.op = Op::AddCol;
    n.a = m;
    n.b = c;
    n.val = nodes_[m].val.colwise() + nodes_[c].val.col(0);
    return push(std::move(n));
}

int Tape::sub_col_broadcast(int m, int c) {
    require(nodes_[c].val.cols() == 1 && nodes_[c].val.rows() == nodes_[m].val.rows(),
            "sub_col_broadcast shape mismatch");
    Node n;
    n.op = Op::SubCol;
    n.a = m;
    n.b = c;
    n.val = nodes_[m].val.colwise() - nodes_[c].val.col(0);
    return push(std::move(n));
}

int Tape::affine(int a, double k, double m) {
    Node n;
    n.op = Op::Affine;
    n.a = a;
    n.k = k;
    n.m = m;
    n.val = (k * nodes_[a].val.array() + m).matrix();
    return push(std::move(n));
}

int Tape::cwise_affine(int a, const Mat& C, const Mat& D) {
    require(C.rows() == nodes_[a].val.rows() && C.cols() == nodes_[a].val.cols(),
            "cwise_affine shape mismatch");
    Node n;
    n.op = Op::CwiseAffine;
    n.a = a;
    n.C = C;
    n.D = D;
    n.val = C.cwiseProduct(nodes_[a].val) + D;
    return push(std::move(n));
}

int Tape::relu(int a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.val = nodes_[a].val.cwiseMax(0.0);
    return push(std::move(n));
}

int Tape::selu(int a, double lambda, double alpha) {
    Node n;
    n.op = Op::Selu;
    n.a = a;
    n.k = lambda;
    n.m = alpha;
    n.val = nodes_[a].val.unaryExpr([lambda, alpha](double x) {
        return x > 0.0 ? lambda * x : lambda * alpha * (std::exp(x) - 1.0);
    });
    return push(std::move(n));
}

int Tape::sigmoid(int a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.val = logistic(nodes_[a].val);
    return push(std::move(n));
}

int Tape::softplus(int a) {
    Node n;
    n.op = Op::Softplus;
    n.a = a;
    n.val = stable_softplus(nodes_[a].val);
    return push(std::move(n));
}

int Tape::log(int a) {
    Node n;
    n.op = Op::Log;
    n.a = a;
    n.val = nodes_[a].val.array().log().matrix();
    return push(std::move(n));
}

int Tape::square(int a) {
    Node n;
    n.op = Op::Square;
    n.a = a;
    n.val = nodes_[a].val.cwiseProduct(nodes_[a].val);
    return push(std::move(n));
}

int Tape::row_layernorm(int a, double eps) {
    const Mat& x = nodes_[a].val;
    Node n;
    n.op = Op::RowLayerNorm;
    n.a = a;
    n.val.resize(x.rows(), x.cols());
    n.D.resize(x.rows(), 1);  // 1/std per row
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + eps);
        n.val.row(r) = ((x.row(r).array() - mu) * inv).matrix();
        n.D(r, 0) = inv;
    }
    n.C = n.val;  // cache x-hat for backward
    return push(std::move(n));
}

int Tape::log_softmax_rows(int a) {
    const Mat& x = nodes_[a].val;
    Node n;
    n.op = Op::LogSoftmax;
    n.a = a;
    n.val.resize(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
        n.val.row(r) = (x.row(r).array() - lse).matrix();
    }
    return push(std::move(n));
}

int Tape::entropy_from_logp(int a) {
    const Mat& l = nodes_[a].val;
    Node n;
    n.op = Op::EntropyLogp;
    n.a = a;
    n.val.resize(l.rows(), 1);
    for (Eigen::Index r = 0; r < l.rows(); ++r)
        n.val(r, 0) = -(l.row(r).array().exp() * l.row(r).array()).sum();
    return push(std::move(n));
}

int Tape::col_sum(int a) {
    Node n;
    n.op = Op::ColSum;
    n.a = a;
    n.val = nodes_[a].val.colwise().sum();
    return push(std::move(n));
}

int Tape::row_mean(int a) {
    Node n;
    n.op = Op::RowMean;
    n.a = a;
    n.val = nodes_[a].val.rowwise().mean();
    return push(std::move(n));
}

int Tape::sum_all(int a) {
    Node n;
    n.op = Op::SumAll;
    n.a = a;
    n.val.resize(1, 1);
    n.val(0, 0) = nodes_[a].val.sum();
    return push(std::move(n));
}

int Tape::pick_per_row(int a, const std::vector<int>& indices) {
    const Mat& x = nodes_[a].val;
    require(static_cast<Eigen::Index>(indices.size()) == x.rows(), "pick_per_row index count");
    Node n;
    n.op = Op::PickPerRow;
    n.a = a;
    n.idx = indices;
    n.val.resize(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        require(indices[r] >= 0 && indices[r] < x.cols(), "pick_per_row index out of range");
        n.val(r, 0) = x(r, indices[r]);
    }
    return push(std::move(n));
}

int Tape::edge_scatter(int mask, const std::vector<std::pair<int, int>>& edges, int n_nodes) {
    const Mat& m = nodes_[mask].val;
    require(m.cols() == 1 && m.rows() == static_cast<Eigen::Index>(edges.size()),
            "edge_scatter mask shape");
    Node n;
    n.op = Op::EdgeScatter;
    n.a = mask;
    n.edges = edges;
    n.val = Mat::Ones(n_nodes, n_nodes);
    for (size_t k = 0; k < edges.size(); ++k) {
        const auto [src, dst] = edges[k];
        require(src >= 0 && src < n_nodes && dst >= 0 && dst < n_nodes, "edge index out of range");
        n.val(dst, src) = m(static_cast<Eigen::Index>(k), 0);
    }
    return push(std::move(n));
}

void Tape::backward(int root) {
    require(root >= 0 && root < static_cast<int>(nodes_.size()), "backward: bad root");
    require(nodes_[root].val.rows() == 1 && nodes_[root].val.cols() == 1,
            "backward: root must be scalar");
    for (auto& n : nodes_)
        if (n.needs_grad) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    if (!nodes_[root].needs_grad) return;
    nodes_[root].grad(0, 0) = 1.0;

    auto acc = [&](int id, const Mat& g) {
        if (id >= 0 && nodes_[id].needs_grad) nodes_[id].grad += g;
    };

    for (int i = root; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.op == Op::Leaf || n.op == Op::Const) continue;
        const Mat& g = n.grad;
        switch (n.op) {
            case Op::MatMul:
                acc(n.a, g * nodes_[n.b].val.transpose());
                acc(n.b, nodes_[n.a].val.transpose() * g);
                break;
            case Op::Add:
                acc(n.a, g);
                acc(n.b, g);
                break;
            case Op::Sub:
                acc(n.a, g);
                acc(n.b, -g);
                break;
            case Op::CwiseMul:
                acc(n.a, g.cwiseProduct(nodes_[n.b].val));
                acc(n.b, g.cwiseProduct(nodes_[n.a].val));
                break;
            case Op::AddRow:
                acc(n.a, g);
                acc(n.b, g.colwise().sum());
                break;
            case Op::MulRow:
                acc(n.a, (g.array().rowwise() * nodes_[n.b].val.row(0).array()).matrix());
                acc(n.b, g.cwiseProduct(nodes_[n.a].val).colwise().sum());
                break;
            case Op::AddCol:
                acc(n.a, g);
                acc(n.b, g.rowwise().sum());
                break;
            case Op::SubCol:
                acc(n.a, g);
                acc(n.b, -g.rowwise().sum());
                break;
            case Op::Affine:
                acc(n.a, n.k * g);
                break;
            case Op::CwiseAffine:
                acc(n.a, g.cwiseProduct(n.C));
                break;
            case Op::Relu:
                acc(n.a, g.cwiseProduct(
                             (nodes_[n.a].val.array() > 0.0).cast<double>().matrix()));
                break;
            case Op::Selu: {
                const double lambda = n.k, alpha = n.m;
                Mat d = nodes_[n.a].val.unaryExpr([lambda, alpha](double x) {
                    return x > 0.0 ? lambda : lambda * alpha * std::exp(x);
                });
                acc(n.a, g.cwiseProduct(d));
                break;
            }
            case Op::Sigmoid:
                acc(n.a, g.cwiseProduct(
                             (n.val.array() * (1.0 - n.val.array())).matrix()));
                break;
            case Op::Softplus:
                acc(n.a, g.cwiseProduct(logistic(nodes_[n.a].val)));
                break;
            case Op::Log:
                acc(n.a, g.cwiseQuotient(nodes_[n.a].val));
                break;
            case Op::Square:
                acc(n.a, 2.0 * g.cwiseProduct(nodes_[n.a].val));
                break;
            case Op::RowLayerNorm: {
                Mat dx(g.rows(), g.cols());
                const double c = static_cast<double>(g.cols());
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const double gm = g.row(r).sum() / c;
                    const double gx = g.row(r).cwiseProduct(n.C.row(r)).sum() / c;
                    dx.row(r) = n.D(r, 0) *
                                (g.row(r).array() - gm - n.C.row(r).array() * gx).matrix();
                }
                acc(n.a, dx);
                break;
            }
            case Op::LogSoftmax: {
                Mat dx(g.rows(), g.cols());
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const double gs = g.row(r).sum();
                    dx.row(r) = g.row(r) - (n.val.row(r).array().exp() * gs).matrix();
                }
                acc(n.a, dx);
                break;
            }
            case Op::EntropyLogp: {
                const Mat& l = nodes_[n.a].val;
                Mat dx(l.rows(), l.cols());
                for (Eigen::Index r = 0; r < l.rows(); ++r)
                    dx.row(r) = (-g(r, 0)) *
                                (l.row(r).array().exp() * (l.row(r).array() + 1.0)).matrix();
                acc(n.a, dx);
                break;
            }
            case Op::ColSum:
                acc(n.a, g.replicate(nodes_[n.a].val.rows(), 1));
                break;
            case Op::RowMean:
                acc(n.a, (g.replicate(1, nodes_[n.a].val.cols()).array() /
                          static_cast<double>(nodes_[n.a].val.cols()))
                             .matrix());
                break;
            case Op::SumAll:
                acc(n.a, Mat::Constant(nodes_[n.a].val.rows(), nodes_[n.a].val.cols(), g(0, 0)));
                break;
            case Op::PickPerRow: {
                Mat dx = Mat::Zero(nodes_[n.a].val.rows(), nodes_[n.a].val.cols());
                for (Eigen::Index r = 0; r < dx.rows(); ++r) dx(r, n.idx[r]) += g(r, 0);
                acc(n.a, dx);
                break;
            }
            case Op::EdgeScatter: {
                Mat dm = Mat::Zero(nodes_[n.a].val.rows(), 1);
                for (size_t k = 0; k < n.edges.size(); ++k)
                    dm(static_cast<Eigen::Index>(k), 0) += g(n.edges[k].second, n.edges[k].first);
                acc(n.a, dm);
                break;
            }
            case Op::Leaf:
            case Op::Const:
                break;
        }
    }
}

}  // namespace tango::ad
