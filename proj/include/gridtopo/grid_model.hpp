#pragma once

#include <array>
#include <complex>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "gridtopo/phase.hpp"

namespace gridtopo {

using cplx = std::complex<double>;
using Matrix3c = Eigen::Matrix<cplx, 3, 3>;
using Vector3c = Eigen::Matrix<cplx, 3, 1>;

// Carson geometry defaults. With r_per_mile above ~1.1 ohm/mile the line
// stays resistance-dominant, which the phase identification relies on.
inline constexpr double kDefaultHSelf = 8.0;
inline constexpr double kDefaultHMutual = 5.0;
inline constexpr double kCarsonEarthResistance = 0.095;  // ohm/mile
inline constexpr double kCarsonReactanceFactor = 0.121;  // ohm/mile per unit H

/// Overhead line parameters in the modified-Carson form. Shunt admittance is
/// always zero in this model and is not stored.
struct LineModel {
    double length_miles = 0.0;
    double r_per_mile = 0.0;
    std::array<double, 3> h_self{kDefaultHSelf, kDefaultHSelf, kDefaultHSelf};
    /// Mutual geometry constants in the order ab, bc, ac.
    std::array<double, 3> h_mut{kDefaultHMutual, kDefaultHMutual, kDefaultHMutual};

    double h_mutual(Phase p, Phase q) const;
    /// Self reactance over resistance (per mile, including the earth-return term).
    double x_over_r() const;
};

/// Phase impedance matrix of a line in ohms. Rows and columns of phases
/// absent from `mask` are exactly zero. Throws InvalidLineError when the
/// length or resistance is not positive.
Matrix3c carson_impedance(const LineModel& line, PhaseMask mask);

/// Inverts the present-phase submatrix of `z` and pads absent phases with
/// zeros. Throws SingularLineError with a condition estimate.
Matrix3c branch_admittance(const Matrix3c& z, PhaseMask mask);

struct Bus {
    int id = 0;
    PhaseMask mask;
    bool is_slack = false;
};

struct Branch {
    int parent = 0;
    int child = 0;
    PhaseMask mask;
    LineModel line;
    Matrix3c y_block = Matrix3c::Zero();  // siemens
};

/// Builds a branch and its admittance block from line data.
Branch make_branch(int parent, int child, PhaseMask mask, const LineModel& line);

/// Rooted multi-phase feeder. Bus 0 is the slack; every other bus has exactly
/// one parent branch; chords (if any) close one extra loop each.
/// Immutable after construction.
class GridTopology {
  public:
    /// Bus masks are taken from each bus's parent branch; the slack is "abc".
    /// Throws TopologyError when the branches do not form a spanning tree over
    /// contiguous ids 0..M, or a mask is not nested in its parent's.
    explicit GridTopology(std::vector<Branch> branches, std::vector<Branch> chords = {});

    int num_buses() const { return static_cast<int>(buses_.size()); }
    int num_non_slack() const { return num_buses() - 1; }
    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Branch>& branches() const { return branches_; }
    const std::vector<Branch>& chords() const { return chords_; }
    PhaseMask mask(int bus) const { return buses_.at(bus).mask; }

    /// -1 for the slack bus.
    int parent_of(int bus) const { return parent_.at(bus); }
    const std::vector<int>& children_of(int bus) const { return children_.at(bus); }
    std::vector<int> siblings_of(int bus) const;
    /// All buses strictly below `bus`.
    std::vector<int> descendants_of(int bus) const;
    /// Tree edges as (parent, child); chords excluded.
    std::vector<std::pair<int, int>> tree_edges() const;
    /// Tree edges plus chords, each as an unordered (min, max) pair.
    std::vector<std::pair<int, int>> all_edges() const;
    /// Largest x/r over all lines (tree and chords).
    double max_x_over_r() const;

  private:
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::vector<Branch> chords_;
    std::vector<int> parent_;
    std::vector<std::vector<int>> children_;
};

struct PerUnitBase {
    double v_ll_kv = 4.16;
    double s_mva = 1.0;
    double z_base_ohm() const { return v_ll_kv * v_ll_kv / s_mva; }
};

/// Enumerates the present phases of non-slack buses; this is the row order of
/// every reduced (present-phase) matrix and vector in the library.
class PhaseIndex {
  public:
    PhaseIndex() = default;
    explicit PhaseIndex(const GridTopology& topology);

    int size() const { return static_cast<int>(slots_.size()); }
    /// Reduced row of (bus, phase); -1 when absent or for the slack.
    int operator()(int bus, Phase p) const { return index_.at(3 * bus + index_of(p)); }
    const std::vector<std::pair<int, Phase>>& slots() const { return slots_; }

  private:
    std::vector<int> index_;
    std::vector<std::pair<int, Phase>> slots_;
};

/// Nodal admittance over non-slack buses in per-unit. Block (i, k), with
/// i, k >= 1 mapped to rows 3(i-1)..3(i-1)+2, holds the nodal entry: the
/// negated branch admittance for a branch i-k and, on the diagonal, the sum
/// of the branch admittances at i including the branch to the slack. Hence
/// every diagonal block equals minus the sum of its row's off-diagonal blocks
/// plus the slack coupling.
struct AdmittanceMatrix {
    Eigen::MatrixXcd blocks;          // 3M x 3M
    Eigen::MatrixXcd slack_coupling;  // 3M x 3, nodal entries toward bus 0
    PhaseIndex index;

    Eigen::MatrixXcd reduced() const;
    Eigen::MatrixXcd reduced_slack_coupling() const;
    Eigen::SparseMatrix<cplx> reduced_sparse() const;
};

/// Throws AssemblyError when the present-phase system is singular.
AdmittanceMatrix assemble_admittance(const GridTopology& topology, const PerUnitBase& base = {});

}  // namespace gridtopo
