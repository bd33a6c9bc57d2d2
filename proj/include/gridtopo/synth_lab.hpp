#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/grid_model.hpp"
#include "gridtopo/phase.hpp"

namespace gridtopo {

/// Standard deviation of each phase's current-injection increment, per-unit.
inline constexpr double kDefaultInjectionScale = 0.05;
/// Largest per-phase voltage-increment standard deviation, per-unit, used to
/// normalize injections. Voltages are a random walk of the increments, so
/// this keeps |v| within roughly 0.9 to 1.3 pu over 8760 steps.
inline constexpr double kDefaultIncrementScale = 0.002;
inline constexpr double kDefaultSamplePeriod = 3600.0;  // hourly

/// 64-bit mixer used to derive independent seeds (replicates, time chunks).
std::uint64_t splitmix64(std::uint64_t x);

/// Per-bus covariance of the complex current-injection increments.
struct InjectionSpec {
    /// Indexed by bus id; entry 0 (slack) is ignored. Rows and columns of
    /// absent phases must be zero.
    std::vector<Matrix3c> covariance;
    /// Covariance of the substation voltage increments. Zero means a stiff
    /// substation (bus 0 constant).
    Matrix3c substation = Matrix3c::Zero();
    std::uint64_t seed = 0;
};

/// Diagonal covariances scale^2 * u with u ~ U(0.5, 1.5) per present phase,
/// drawn from `seed`. The substation gets substation_scale^2 * I.
InjectionSpec default_injection(const GridTopology& topology, std::uint64_t seed,
                                double scale = kDefaultInjectionScale, double substation_scale = 0.0);

/// Multiplies the covariance of `buses` by `factor` (DER emulation).
void scale_injection(InjectionSpec& spec, const std::vector<int>& buses, double factor);

/// Largest per-phase standard deviation of the voltage increments implied by
/// the bus injections of `spec` (substation term excluded).
double max_increment_std(const GridTopology& topology, const InjectionSpec& spec, const PerUnitBase& base = {});

/// Rescales every bus covariance so max_increment_std equals `target`.
/// Throws GenerationError when all injections are zero.
void normalize_injection(InjectionSpec& spec, const GridTopology& topology, double target, const PerUnitBase& base = {});

/// Validates Hermitian PSD covariances with structurally zero absent phases.
/// Throws GenerationError.
void validate_injection(const GridTopology& topology, const InjectionSpec& spec);

/// Time series over all buses (slack included). Column 3*bus + c holds
/// channel c of `bus`; channel c carries physical phase labels[bus][c].
/// Absent channels are zero. Magnitude-only panels keep magnitudes in the
/// real part and have no angle information.
struct VoltagePanel {
    double sample_period = kDefaultSamplePeriod;
    Eigen::MatrixXcd values;
    bool magnitude_only = false;
    std::vector<PhaseMask> masks;
    std::vector<ChannelMap> labels;

    int num_samples() const { return static_cast<int>(values.rows()); }
    int num_buses() const { return static_cast<int>(masks.size()); }
    static int column(int bus, Phase channel) { return 3 * bus + index_of(channel); }
    double magnitude(int t, int bus, Phase channel) const;
    /// Radians; NaN for magnitude-only panels.
    double angle(int t, int bus, Phase channel) const;
};

/// Empty panel shaped for `topology` with identity labels.
VoltagePanel make_panel(const GridTopology& topology, int samples);

/// Draws T rows of voltage increments; row 0 is zero (first-sample
/// convention), rows 1..T-1 solve Y dV = dI - Y_s dV_0 for independent
/// circular Gaussian dI. Work is split in fixed 256-row chunks with seeds
/// derived from spec.seed, so the output does not depend on thread count.
VoltagePanel generate_increments(const GridTopology& topology, const InjectionSpec& spec, int samples,
                                 const PerUnitBase& base = {});
/// Same draws, dense LU solve, no threading. Reference for tests/benchmarks.
VoltagePanel generate_increments_serial(const GridTopology& topology, const InjectionSpec& spec, int samples,
                                        const PerUnitBase& base = {});

/// Exact covariance of the stacked present-phase increment vector.
struct AnalyticCovariance {
    Eigen::MatrixXcd sigma;
    std::vector<std::pair<int, Phase>> slots;  // (bus, phase) per row
};

/// Sigma_V = Y^-1 Sigma_I Y^-H (plus the substation term). With
/// include_slack the three slack phases come first.
AnalyticCovariance analytic_cov(const GridTopology& topology, const InjectionSpec& spec, bool include_slack = false,
                                const PerUnitBase& base = {});

/// Balanced 1 pu set (a at 0, b at -120, c at +120 degrees) on present phases.
Eigen::VectorXcd flat_start(const GridTopology& topology);

/// v[0] = v0 + dV[0], v[n] = v[n-1] + dV[n].
VoltagePanel integrate_voltages(const VoltagePanel& increments, const Eigen::VectorXcd& v0);

enum class NoiseDistribution { Uniform, TruncatedGaussian };

struct NoiseSpec {
    double bound = 0.0;  // relative magnitude error bound
    NoiseDistribution distribution = NoiseDistribution::Uniform;
};

/// Multiplies each present value by (1 + eps), |eps| <= bound; angles are
/// untouched. The truncated Gaussian has sigma = bound / 2.
VoltagePanel apply_noise(const VoltagePanel& panel, const NoiseSpec& spec, std::uint64_t seed);

/// Keeps |v| only.
VoltagePanel to_magnitude_only(const VoltagePanel& panel);

/// Every k-th sample starting at 0.
VoltagePanel subsample(const VoltagePanel& panel, int step);

/// Number of buses corrupt_labels will permute.
int corruption_count(const VoltagePanel& panel, double fraction);

/// Applies a random non-identity channel permutation to min(ceil(fraction*M),
/// #multi-phase buses) non-slack multi-phase buses. The permutation is
/// folded into panel.labels, which therefore remain the ground truth.
VoltagePanel corrupt_labels(const VoltagePanel& panel, double fraction, std::uint64_t seed);

}  // namespace gridtopo
