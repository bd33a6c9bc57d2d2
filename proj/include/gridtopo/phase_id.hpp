#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/grid_model.hpp"
#include "gridtopo/synth_lab.hpp"
#include "gridtopo/topo_est.hpp"

namespace gridtopo {

inline constexpr int kMinCorrelationSamples = 30;

/// Pearson correlations, parent columns x child columns. Entries involving a
/// zero-variance column are NaN (flagged). Throws InputError for fewer than
/// kMinCorrelationSamples rows or misaligned inputs.
Eigen::MatrixXd channel_correlation(const Eigen::MatrixXd& parent, const Eigen::MatrixXd& child);

struct PhaseAssignment {
    /// Per bus: channel -> physical phase. Unresolved buses keep their claimed map.
    std::vector<ChannelMap> map;
    /// Best minus second-best total correlation; NaN when only one candidate
    /// exists or the bus is unresolved or the slack.
    std::vector<double> margin;
    std::vector<bool> resolved;
    std::vector<PhaseMask> masks;
    std::vector<std::string> warnings;

    bool all_resolved() const;
};

struct PhaseIdOptions {
    /// Correlate raw magnitudes instead of magnitude increments.
    bool raw_magnitude = false;
};

/// Walks the rooted estimate breadth-first from the slack and, per edge,
/// picks the injective map from the child's channels to the parent's
/// resolved phases with the largest total correlation. Slack labels are
/// trusted. When the slack has no variance the root bus's labels are
/// trusted instead and a warning is recorded.
PhaseAssignment assign_phases(const EdgeSetEstimate& tree, const VoltagePanel& panel, const PhaseIdOptions& options = {});

/// Resolved buses whose recovered map differs from the claimed one on any
/// present channel, in id order. Unresolved buses are skipped.
std::vector<int> diagnose_labels(const PhaseAssignment& assignment, const std::vector<ChannelMap>& claimed);

/// Fraction of non-slack buses whose map equals `truth` on every present channel.
double phase_accuracy(const PhaseAssignment& assignment, const std::vector<ChannelMap>& truth);

/// Warning text when some line's x/r exceeds `limit` (the correlation match
/// assumes resistance dominates).
std::optional<std::string> x_over_r_warning(const GridTopology& topology, double limit = 1.0);

}  // namespace gridtopo
