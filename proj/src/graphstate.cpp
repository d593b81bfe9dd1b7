#include "tango/graphstate.hpp"

#include <stdexcept>

namespace tango::graph {

const EdgeList& full_edge_list() {
    static const EdgeList edges = [] {
        EdgeList e{};
        int k = 0;
        for (int i = 0; i < kNumNodes; ++i)
            for (int j = 0; j < kNumNodes; ++j)
                if (i != j) e[k++] = {i, j};
        return e;
    }();
    return edges;
}

Eigen::Vector4d FeatureScaler::apply(const Eigen::Vector4d& x) const {
    Eigen::Vector4d out;
    for (int i = 0; i < 4; ++i) {
        const double lo = min_[i], hi = max_[i];
        if (hi - lo <= 0.0) {
            out[i] = 0.5;  // degenerate dimension
        } else {
            out[i] = std::clamp((x[i] - lo) / (hi - lo), 0.0, 1.0);
        }
    }
    return out;
}

Eigen::Vector4d FeatureScaler::scale(const env::NetworkState& s) {
    const Eigen::Vector4d x(s.s1_snr, s.s2_traffic, s.s3_residual, s.s4_gap);
    if (!initialized_) {
        min_ = x;
        max_ = x;
        initialized_ = true;
    } else {
        min_ = min_.cwiseMin(x);
        max_ = max_.cwiseMax(x);
    }
    return apply(x);
}

Eigen::Vector4d FeatureScaler::scale_frozen(const env::NetworkState& s) const {
    const Eigen::Vector4d x(s.s1_snr, s.s2_traffic, s.s3_residual, s.s4_gap);
    if (!initialized_) return Eigen::Vector4d::Constant(0.5);
    return apply(x);
}

void FeatureScaler::set_range(const Eigen::Vector4d& mins, const Eigen::Vector4d& maxs) {
    for (int i = 0; i < 4; ++i)
        if (mins[i] > maxs[i]) throw std::invalid_argument("scaler min > max");
    min_ = mins;
    max_ = maxs;
    initialized_ = true;
}

namespace {

GraphState assemble(const env::NetworkState& s, const Eigen::Vector4d& v) {
    GraphState g;
    g.raw_state = s;
    g.edge_index = full_edge_list();
    g.node_features << v[0], v[1],   // node 0: (s1, s2)
        v[2], v[3],                  // node 1: (s3, s4)
        v[0], v[3],                  // node 2: (s1, s4)
        v[1], v[2];                  // node 3: (s2, s3)
    return g;
}

void check_finite(const env::NetworkState& s) {
    if (!s.finite()) throw std::invalid_argument("non-finite network state");
}

}  // namespace

GraphState state_to_graph_raw(const env::NetworkState& s) {
    check_finite(s);
    return assemble(s, Eigen::Vector4d(s.s1_snr, s.s2_traffic, s.s3_residual, s.s4_gap));
}

GraphState state_to_graph(const env::NetworkState& s, FeatureScaler& scaler) {
    check_finite(s);
    return assemble(s, scaler.scale(s));
}

GraphState state_to_graph_frozen(const env::NetworkState& s, const FeatureScaler& scaler) {
    check_finite(s);
    return assemble(s, scaler.scale_frozen(s));
}

}  // namespace tango::graph
