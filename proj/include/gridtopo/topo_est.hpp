#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/info_core.hpp"

namespace gridtopo {

/// Unordered edge stored with u < v.
struct WeightedEdge {
    int u = 0;
    int v = 0;
    double weight = 0.0;
};

struct EdgeSetEstimate {
    /// Tree edges among non-slack buses, sorted by (u, v). After attach_root
    /// the slack edge (0, root) is included.
    std::vector<WeightedEdge> edges;
    std::vector<WeightedEdge> chords;
    Frame frame = Frame::Phase;
    Source source = Source::Complex;
    int root = -1;  // bus attached to the slack; -1 while unrooted
    bool root_from_substation = false;

    bool rooted() const { return root >= 0; }
    /// (u, v) pairs of edges and chords; slack edges only when asked.
    std::vector<std::pair<int, int>> pairs(bool include_slack = false) const;
};

/// Kruskal over nodes first..n-1 of a symmetric weight matrix. Pairs sorted by
/// weight descending, ties by (min id, max id); non-finite weights are
/// unusable. Throws IncompleteTreeError when the usable pairs do not span.
EdgeSetEstimate max_weight_spanning_tree(const Eigen::MatrixXd& weights, int first = 1);
EdgeSetEstimate max_weight_spanning_tree(const MIMatrix& mi);

double total_weight(const std::vector<WeightedEdge>& edges);

/// Adds the slack edge. Uses the substation MI column when the matrix has
/// one, otherwise `declared_root`. Returns false (estimate left unrooted)
/// when neither is available.
bool attach_root(EdgeSetEstimate& estimate, const MIMatrix& mi, std::optional<int> declared_root = std::nullopt);

struct WeakMeshOptions {
    int max_chords = 1;
    /// Price of one pair (a, b) newly brought within distance two by a
    /// chord. Defaults to zero.
    std::function<double(int a, int b)> pair_penalty;
};

/// Tree plus at most one chord from conditional dependence. `partial` holds
/// I(a; b | every other bus) (partial_mi_matrix). Radial increments have a
/// precision supported on pairs within graph distance two, so their partial
/// MI vanishes beyond it. The tree is the maximum spanning tree of `partial`.
/// A chord (u, v) is admissible when the pairs it brings within distance two
/// carry more partial MI than their penalties; among admissible chords the
/// one with the largest partial MI of its own wins, ties to the smaller
/// (u, v). Edge weights are copied from `mi`.
EdgeSetEstimate weak_mesh_search(const MIMatrix& mi, const Eigen::MatrixXd& partial, const WeakMeshOptions& options = {});

/// (dim a)(dim b) ln(n) / (2 n) nats: the BIC price of one precision block.
std::function<double(int, int)> bic_pair_penalty(const GaussianModel& model, int samples);

struct EstimateOptions {
    bool mesh = false;
    /// Bus attached to the slack when the substation was not measured.
    std::optional<int> declared_root;
    WeakMeshOptions mesh_options;
};

struct EstimateResult {
    MIMatrix mi;
    EdgeSetEstimate estimate;
};

/// Features, covariance, MI matrix, tree (or weak mesh search with a BIC
/// pair penalty unless one is given), root attachment.
EstimateResult estimate_topology(const IncrementPanel& panel, Frame frame, Source source, const EstimateOptions& options = {});

}  // namespace gridtopo
