#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/grid_model.hpp"
#include "gridtopo/synth_lab.hpp"

namespace gridtopo {

enum class Frame { Phase, Sequence };
enum class Source { Complex, Magnitude };

std::string to_string(Frame f);
std::string to_string(Source s);
Frame frame_from_string(std::string_view s);
Source source_from_string(std::string_view s);

/// First differences of a voltage panel: T-1 rows, sample n holding
/// v[n+1] - v[n]. The complex part is empty for magnitude-only input;
/// delta_magnitude is always the increment of |v|. Angle increments are
/// filled only when asked for and the panel has angles.
struct IncrementPanel {
    double sample_period = kDefaultSamplePeriod;
    Eigen::MatrixXcd delta;
    Eigen::MatrixXd delta_magnitude;
    Eigen::MatrixXd delta_angle;  // wrapped to (-pi, pi]; empty unless requested
    bool magnitude_only = false;
    std::vector<PhaseMask> masks;
    std::vector<ChannelMap> labels;

    int num_samples() const { return static_cast<int>(delta_magnitude.rows()); }
    int num_buses() const { return static_cast<int>(masks.size()); }
};

IncrementPanel difference(const VoltagePanel& panel, bool angle_increments = false);

struct SequenceVector {
    cplx p{0.0, 0.0};
    cplx n{0.0, 0.0};
    cplx z{0.0, 0.0};
};

/// H with h = exp(j 2 pi / 3); columns map (p, n, z) to phases (a, b, c).
Matrix3c sequence_matrix();
/// (1/3) H^H.
Matrix3c inverse_sequence_matrix();
SequenceVector to_sequence(const Vector3c& phases);
SequenceVector to_sequence(const Eigen::Vector3d& magnitudes);
Vector3c from_sequence(const SequenceVector& s);

/// Real linear map from one bus's raw coordinates to its features. Raw
/// coordinates are (Re x_c..., Im x_c...) over present channels for complex
/// data and (x_c...) for magnitudes. In the sequence frame the rows are the
/// real and imaginary parts of H^-1 x, kept greedily in the order
/// Re p, Im p, Re n, Im n, Re z, Im z while they add rank, so the map stays
/// invertible and the feature dimension equals the raw dimension.
Eigen::MatrixXd bus_feature_map(PhaseMask mask, Frame frame, Source source);

/// Real feature samples with per-bus column groups (indexed by bus id, empty
/// for excluded buses).
struct FeatureSet {
    Eigen::MatrixXd samples;
    std::vector<std::vector<int>> columns;
};

/// True when every present slack channel varies, i.e. the substation was measured.
bool slack_has_variance(const IncrementPanel& panel);

/// Slack bus columns are produced only with include_slack.
FeatureSet features(const IncrementPanel& panel, Frame frame, Source source, bool include_slack = false);

/// Sample covariance with mean removal and 1/(n-1) normalization. Tiles of
/// the output are computed independently in parallel; results do not depend
/// on the thread count.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples);
/// Single product, no threading. Reference implementation.
Eigen::MatrixXd sample_covariance_serial(const Eigen::MatrixXd& samples);

/// Entropy in nats of a Gaussian fitted to the rows of `samples`.
/// Throws SingularCovarianceError.
double gaussian_entropy(const Eigen::MatrixXd& samples);
double gaussian_entropy_from_covariance(const Eigen::MatrixXd& covariance);
/// H(a) + H(b) - H(a, b) on aligned samples.
double mutual_information(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Gaussian with a fixed covariance and named groups of coordinates (one per
/// bus id). All information quantities come from this one covariance, so
/// chain-rule identities hold to rounding.
class GaussianModel {
  public:
    GaussianModel(Eigen::MatrixXd covariance, std::vector<std::vector<int>> groups);

    int num_groups() const { return static_cast<int>(groups_.size()); }
    bool has(int g) const { return g >= 0 && g < num_groups() && !groups_[g].empty(); }
    int dimension(int g) const { return static_cast<int>(groups_.at(g).size()); }
    /// Covariance rows of group g.
    const std::vector<int>& group(int g) const { return groups_.at(g); }
    const Eigen::MatrixXd& covariance() const { return cov_; }

    /// Joint entropy of the union of the groups. Empty set gives 0.
    double entropy(const std::vector<int>& groups) const;
    double mi(int g, int h) const;
    /// I(g; union of hs).
    double joint_mi(int g, const std::vector<int>& hs) const;
    /// I(a; b | given) with each argument a union of groups.
    double conditional_mi(const std::vector<int>& a, const std::vector<int>& b, const std::vector<int>& given) const;

  private:
    double log_det(const std::vector<int>& groups) const;

    Eigen::MatrixXd cov_;
    std::vector<std::vector<int>> groups_;
};

/// Model over sample features: covariance via sample_covariance.
GaussianModel sample_model(const FeatureSet& features);

/// Exact model of the features that `features(..., frame, Source::Complex)`
/// would produce from data drawn with this covariance (identity labels).
GaussianModel analytic_model(const AnalyticCovariance& cov, const std::vector<PhaseMask>& masks, Frame frame);

/// Pairwise MI by bus id. values(i, k) for 1 <= i != k holds I(i; k); row and
/// column 0 hold MI with the substation when it was measured, NaN otherwise.
/// The diagonal is zero.
struct MIMatrix {
    Eigen::MatrixXd values;
    Frame frame = Frame::Phase;
    Source source = Source::Complex;
    bool has_substation = false;

    int num_buses() const { return static_cast<int>(values.rows()); }
};

/// Fills an MIMatrix from a model over bus groups. Pairs run in parallel;
/// each entry is computed independently.
MIMatrix mi_matrix(const GaussianModel& model, Frame frame, Source source);
/// I(g; h | every other group) for every pair of present groups, from one
/// inverse of the full covariance: with P the precision,
/// 0.5 (log det P_gg + log det P_hh - log det P_{gh,gh}). Zero exactly when
/// the precision block (g, h) vanishes. Absent groups give NaN; the diagonal
/// is zero. Throws SingularCovarianceError when the covariance is singular.
Eigen::MatrixXd partial_mi_matrix(const GaussianModel& model);
/// Sample path: features, covariance, pair loop. The slack is included when
/// its increments have variance.
MIMatrix mi_matrix(const IncrementPanel& panel, Frame frame, Source source);
/// Every pair from scratch with mutual_information on the raw columns.
MIMatrix mi_matrix_serial(const IncrementPanel& panel, Frame frame, Source source);

/// Chain-rule split of I((m_i, th_i); (m_k, th_k)) over increment magnitudes
/// m and angle increments th: A = I(m_i; m_k), B = I(th_i; m_k | m_i),
/// C = I(m_i, th_i; th_k | m_k). Constant coordinates are dropped.
struct MIBreakdown {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double total = 0.0;
};
/// Needs angle increments unless the panel is magnitude-only.
MIBreakdown mi_breakdown(const IncrementPanel& panel, int bus_i, int bus_k);

}  // namespace gridtopo
