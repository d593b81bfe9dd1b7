#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace tango::ad {

using Mat = Eigen::MatrixXd;

// A tape-based reverse-mode engine over dense matrices. A forward pass
// records every intermediate value; backward() fills exact analytic
// gradients for all differentiable leaves. Tapes are cheap, per-evaluation
// objects: parameters are re-registered as leaves on each fresh tape and
// their gradients read back after backward().
class Tape {
public:
    int leaf(const Mat& value);      // differentiable input
    int constant(const Mat& value);  // no gradient tracked
    int constant(double value);      // 1x1

    int matmul(int a, int b);
    int add(int a, int b);                // same shape
    int sub(int a, int b);                // same shape
    int cwise_mul(int a, int b);          // same shape
    int add_row_broadcast(int m, int r);  // m: RxC, r: 1xC
    int mul_row_broadcast(int m, int r);  // m: RxC, r: 1xC
    int add_col_broadcast(int m, int c);  // m: RxC, c: Rx1
    int sub_col_broadcast(int m, int c);  // m: RxC, c: Rx1
    int affine(int a, double k, double m);  // k*a + m elementwise
    // C .* a + D with constant coefficient matrices (dropout, masking).
    int cwise_affine(int a, const Mat& C, const Mat& D);

    int relu(int a);
    int selu(int a, double lambda, double alpha);
    int sigmoid(int a);
    int softplus(int a);
    int log(int a);
    int square(int a);

    // Per-row normalization to mean 0 / population variance 1 (eps inside
    // the sqrt); gain and bias are applied by the caller via broadcasts.
    int row_layernorm(int a, double eps = 1e-5);
    int log_softmax_rows(int a);
    int entropy_from_logp(int a);  // per row: -sum(exp(l) .* l), Rx1

    int col_sum(int a);   // 1xC
    int row_mean(int a);  // Rx1
    int sum_all(int a);   // 1x1

    int pick_per_row(int a, const std::vector<int>& indices);  // Rx1

    // Scatters a Kx1 mask into an NxN matrix: entry (dst, src) of edge k
    // takes mask[k]; every other entry is 1. Multiply cwise with a constant
    // adjacency to mask edge contributions.
    int edge_scatter(int mask, const std::vector<std::pair<int, int>>& edges, int n);

    const Mat& value(int id) const { return nodes_[id].val; }
    const Mat& gradient(int id) const { return nodes_[id].grad; }

    // Seeds d(root)/d(root) = 1 (root must be 1x1) and backpropagates.
    void backward(int root);

    size_t size() const { return nodes_.size(); }

private:
    enum class Op : uint8_t {
        Leaf, Const, MatMul, Add, Sub, CwiseMul, AddRow, MulRow, AddCol, SubCol,
        Affine, CwiseAffine, Relu, Selu, Sigmoid, Softplus, Log, Square,
        RowLayerNorm, LogSoftmax, EntropyLogp, ColSum, RowMean, SumAll,
        PickPerRow, EdgeScatter,
    };

    struct Node {
        Op op;
        int a = -1, b = -1;
        Mat val;
        Mat grad;
        bool needs_grad = false;
        // op-specific payloads
        double k = 0.0, m = 0.0;
        Mat C, D;                 // CwiseAffine; RowLayerNorm caches x-hat in C
        std::vector<int> idx;     // PickPerRow
        std::vector<std::pair<int, int>> edges;  // EdgeScatter
    };

    int push(Node n);
    std::vector<Node> nodes_;
};

}  // namespace tango::ad
