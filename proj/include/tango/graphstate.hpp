#pragma once

#include <Eigen/Core>
#include <array>
#include <utility>

#include "tango/env.hpp"

namespace tango::graph {

inline constexpr int kNumNodes = 4;
inline constexpr int kNumFeatures = 2;
inline constexpr int kNumEdges = 12;

using EdgeList = std::array<std::pair<int, int>, kNumEdges>;  // (src, dst)

// All ordered pairs (i, j), i != j, of the fixed 4-node topology.
const EdgeList& full_edge_list();

struct GraphState {
    Eigen::Matrix<double, kNumNodes, kNumFeatures> node_features;
    EdgeList edge_index;
    env::NetworkState raw_state;
};

// Running per-dimension min/max scaler over (s1..s4). Single-writer.
class FeatureScaler {
public:
    // Updates the running ranges with s, then returns the scaled 4-vector.
    Eigen::Vector4d scale(const env::NetworkState& s);
    // Scales without updating the ranges (evaluation / frozen use).
    Eigen::Vector4d scale_frozen(const env::NetworkState& s) const;

    bool initialized() const { return initialized_; }
    Eigen::Vector4d mins() const { return min_; }
    Eigen::Vector4d maxs() const { return max_; }
    void set_range(const Eigen::Vector4d& mins, const Eigen::Vector4d& maxs);

private:
    Eigen::Vector4d apply(const Eigen::Vector4d& x) const;
    bool initialized_ = false;
    Eigen::Vector4d min_ = Eigen::Vector4d::Zero();
    Eigen::Vector4d max_ = Eigen::Vector4d::Zero();
};

// Identity scaler helper: a FeatureScaler whose ranges are wide enough that
// scaling becomes clamping-free pass-through is not representable; tests use
// this to bypass scaling instead.
GraphState state_to_graph_raw(const env::NetworkState& s);

// Table-driven transform: node 0 = (s1, s2), node 1 = (s3, s4),
// node 2 = (s1, s4), node 3 = (s2, s3); edges = full directed K4.
GraphState state_to_graph(const env::NetworkState& s, FeatureScaler& scaler);
GraphState state_to_graph_frozen(const env::NetworkState& s, const FeatureScaler& scaler);

}  // namespace tango::graph
