#include "gridtopo/info_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "gridtopo/error.hpp"

namespace gridtopo {

namespace {

const double kHalfLog2PiE = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
constexpr double kSingularRatio = 1e-12;
constexpr int kTile = 64;

std::vector<int> buses_of_groups(const std::vector<int>& groups) {
    std::vector<int> out(groups.begin(), groups.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// log det of a covariance block; throws when a pivot collapses relative to
// its variance.
double checked_log_det(const Eigen::MatrixXd& sub, const std::vector<int>& buses) {
    if (sub.rows() == 0) return 0.0;
    auto fail = [&](const std::string& why) {
        std::string names;
        for (int b : buses) names += (names.empty() ? "" : ",") + std::to_string(b);
        throw SingularCovarianceError("singular covariance over buses {" + names + "}: " + why, buses);
    };
    for (Eigen::Index i = 0; i < sub.rows(); ++i)
        if (!(sub(i, i) > 0.0)) fail("dimension " + std::to_string(i) + " has zero variance");
    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    if (llt.info() != Eigen::Success) fail("not positive definite");
    const auto& l = llt.matrixLLT();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < sub.rows(); ++i) {
        const double pivot = l(i, i) * l(i, i);
        if (!(pivot > kSingularRatio * sub(i, i))) fail("dimension " + std::to_string(i) + " is linearly dependent");
        sum += std::log(pivot);
    }
    return sum;
}

Eigen::MatrixXd centered(const Eigen::MatrixXd& x) {
    if (x.rows() < 2) throw InputError("need at least two samples for a covariance");
    Eigen::RowVectorXd mean = x.colwise().mean();
    return x.rowwise() - mean;
}

MIMatrix empty_matrix(int n, Frame frame, Source source) {
    MIMatrix mi;
    mi.values = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    mi.values.diagonal().setZero();
    mi.frame = frame;
    mi.source = source;
    return mi;
}

std::vector<std::pair<int, int>> pair_list(const std::vector<int>& ids) {
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t a = 0; a < ids.size(); ++a)
        for (std::size_t b = a + 1; b < ids.size(); ++b) pairs.emplace_back(ids[a], ids[b]);
    return pairs;
}

[[noreturn]] void throw_pair_failures(const std::vector<std::pair<int, int>>& pairs, const std::vector<std::string>& errors) {
    std::string msg;
    std::set<int> buses;
    int shown = 0;
    int failed = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (errors[p].empty()) continue;
        ++failed;
        buses.insert(pairs[p].first);
        buses.insert(pairs[p].second);
        if (shown++ < 5) msg += "\n  pair (" + std::to_string(pairs[p].first) + "," + std::to_string(pairs[p].second) + "): " + errors[p];
    }
    throw SingularCovarianceError("mutual information failed for " + std::to_string(failed) + " pair(s)" + msg,
                                  std::vector<int>(buses.begin(), buses.end()));
}

}  // namespace

bool slack_has_variance(const IncrementPanel& panel) {
    if (panel.num_samples() < 2 || panel.num_buses() == 0) return false;
    for (Phase p : panel.masks[0].phases()) {
        const auto col = panel.delta_magnitude.col(index_of(p));
        if (col.maxCoeff() == col.minCoeff()) return false;
        if (!panel.magnitude_only) {
            const auto z = panel.delta.col(index_of(p));
            if (z.real().maxCoeff() == z.real().minCoeff() || z.imag().maxCoeff() == z.imag().minCoeff()) return false;
        }
    }
    return true;
}

std::string to_string(Frame f) { return f == Frame::Phase ? "phase" : "sequence"; }
std::string to_string(Source s) { return s == Source::Complex ? "complex" : "magnitude"; }

Frame frame_from_string(std::string_view s) {
    if (s == "phase") return Frame::Phase;
    if (s == "sequence") return Frame::Sequence;
    throw InputError("unknown frame '" + std::string(s) + "' (expected phase or sequence)");
}

Source source_from_string(std::string_view s) {
    if (s == "complex") return Source::Complex;
    if (s == "magnitude") return Source::Magnitude;
    throw InputError("unknown source '" + std::string(s) + "' (expected complex or magnitude)");
}

IncrementPanel difference(const VoltagePanel& panel, bool angle_increments) {
    IncrementPanel out;
    out.sample_period = panel.sample_period;
    out.magnitude_only = panel.magnitude_only;
    out.masks = panel.masks;
    out.labels = panel.labels;
    const Eigen::Index t = std::max<Eigen::Index>(panel.values.rows() - 1, 0);
    const Eigen::Index w = panel.values.cols();
    const auto& v = panel.values;
    if (panel.magnitude_only) {
        out.delta_magnitude = v.real().bottomRows(t) - v.real().topRows(t);
        return out;
    }
    out.delta = v.bottomRows(t) - v.topRows(t);
    // sqrt(|v|^2) rather than hypot: the values are O(1), so no overflow.
    const Eigen::MatrixXd mag = v.cwiseAbs2().cwiseSqrt();
    out.delta_magnitude = mag.bottomRows(t) - mag.topRows(t);
    if (!angle_increments) return out;
    out.delta_angle.resize(t, w);
    for (Eigen::Index c = 0; c < w; ++c)
        for (Eigen::Index n = 0; n < t; ++n) out.delta_angle(n, c) = std::arg(v(n + 1, c) * std::conj(v(n, c)));
    return out;
}

Matrix3c sequence_matrix() {
    const cplx h = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    Matrix3c m;
    m << 1.0, 1.0, 1.0,
         h * h, h, 1.0,
         h, h * h, 1.0;
    return m;
}

Matrix3c inverse_sequence_matrix() { return sequence_matrix().adjoint() / 3.0; }

SequenceVector to_sequence(const Vector3c& phases) {
    Vector3c s = inverse_sequence_matrix() * phases;
    return {s(0), s(1), s(2)};
}

SequenceVector to_sequence(const Eigen::Vector3d& magnitudes) { return to_sequence(Vector3c(magnitudes.cast<cplx>())); }

Vector3c from_sequence(const SequenceVector& s) { return sequence_matrix() * Vector3c(s.p, s.n, s.z); }

Eigen::MatrixXd bus_feature_map(PhaseMask mask, Frame frame, Source source) {
    const auto phases = mask.phases();
    const int k = static_cast<int>(phases.size());
    const int raw = source == Source::Complex ? 2 * k : k;
    if (frame == Frame::Phase) return Eigen::MatrixXd::Identity(raw, raw);

    const Matrix3c hinv = inverse_sequence_matrix();
    Eigen::MatrixXd candidates(6, raw);
    for (int s = 0; s < 3; ++s) {
        for (int j = 0; j < k; ++j) {
            const cplx h = hinv(s, index_of(phases[j]));
            if (source == Source::Complex) {
                candidates(2 * s, j) = h.real();
                candidates(2 * s, k + j) = -h.imag();
                candidates(2 * s + 1, j) = h.imag();
                candidates(2 * s + 1, k + j) = h.real();
            } else {
                candidates(2 * s, j) = h.real();
                candidates(2 * s + 1, j) = h.imag();
            }
        }
    }
    Eigen::MatrixXd kept(0, raw);
    for (int r = 0; r < 6 && kept.rows() < raw; ++r) {
        Eigen::MatrixXd trial(kept.rows() + 1, raw);
        trial << kept, candidates.row(r);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(trial);
        lu.setThreshold(1e-10);
        if (lu.rank() == trial.rows()) kept = trial;
    }
    return kept;
}

namespace {

// Channels of a bus ordered by their data rather than by their labels. A
// relabeled bus then yields bit-identical features, so MI does not move even
// by rounding. Columns with equal data may come in either order.
std::vector<Phase> canonical_channels(const IncrementPanel& panel, int bus) {
    std::vector<Phase> channels = panel.masks[bus].phases();
    const bool complex = !panel.magnitude_only && panel.delta.size() > 0;
    auto less = [&](Phase x, Phase y) {
        const Eigen::Index cx = VoltagePanel::column(bus, x);
        const Eigen::Index cy = VoltagePanel::column(bus, y);
        for (Eigen::Index n = 0; n < panel.num_samples(); ++n) {
            const double mx = panel.delta_magnitude(n, cx), my = panel.delta_magnitude(n, cy);
            if (mx != my) return mx < my;
            if (complex) {
                const cplx dx = panel.delta(n, cx), dy = panel.delta(n, cy);
                if (dx.real() != dy.real()) return dx.real() < dy.real();
                if (dx.imag() != dy.imag()) return dx.imag() < dy.imag();
            }
        }
        return false;
    };
    std::stable_sort(channels.begin(), channels.end(), less);
    return channels;
}

}  // namespace

FeatureSet features(const IncrementPanel& panel, Frame frame, Source source, bool include_slack) {
    if (source == Source::Complex && panel.magnitude_only)
        throw InputError("complex source requested but the measurements are magnitude-only");
    FeatureSet fs;
    fs.columns.assign(panel.num_buses(), {});
    std::vector<Eigen::MatrixXd> maps(panel.num_buses());
    int total = 0;
    for (int b = include_slack ? 0 : 1; b < panel.num_buses(); ++b) {
        maps[b] = bus_feature_map(panel.masks[b], frame, source);
        for (Eigen::Index r = 0; r < maps[b].rows(); ++r) fs.columns[b].push_back(total++);
    }
    const Eigen::Index n = panel.num_samples();
    fs.samples.resize(n, total);
    for (int b = 0; b < panel.num_buses(); ++b) {
        if (fs.columns[b].empty()) continue;
        const auto channels = canonical_channels(panel, b);
        const auto k = static_cast<Eigen::Index>(channels.size());
        Eigen::MatrixXd raw(n, source == Source::Complex ? 2 * k : k);
        for (Eigen::Index j = 0; j < k; ++j) {
            const int col = VoltagePanel::column(b, channels[j]);
            if (source == Source::Complex) {
                raw.col(j) = panel.delta.col(col).real();
                raw.col(k + j) = panel.delta.col(col).imag();
            } else {
                raw.col(j) = panel.delta_magnitude.col(col);
            }
        }
        fs.samples.middleCols(fs.columns[b].front(), maps[b].rows()).noalias() = raw * maps[b].transpose();
    }
    return fs;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples) {
    const Eigen::MatrixXd xc = centered(samples);
    const Eigen::Index d = xc.cols();
    const double scale = 1.0 / static_cast<double>(xc.rows() - 1);
    Eigen::MatrixXd cov(d, d);
    const int tiles = static_cast<int>((d + kTile - 1) / kTile);
    std::vector<std::pair<int, int>> work;
    for (int i = 0; i < tiles; ++i)
        for (int j = 0; j <= i; ++j) work.emplace_back(i, j);
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t w = 0; w < work.size(); ++w) {
        const Eigen::Index r0 = work[w].first * kTile;
        const Eigen::Index c0 = work[w].second * kTile;
        const Eigen::Index rn = std::min<Eigen::Index>(kTile, d - r0);
        const Eigen::Index cn = std::min<Eigen::Index>(kTile, d - c0);
        Eigen::MatrixXd block = (xc.middleCols(r0, rn).transpose() * xc.middleCols(c0, cn)) * scale;
        cov.block(r0, c0, rn, cn) = block;
        if (r0 != c0) cov.block(c0, r0, cn, rn) = block.transpose();
    }
    // Diagonal tiles are symmetric up to rounding; make them exact.
    cov = (0.5 * (cov + cov.transpose())).eval();
    return cov;
}

Eigen::MatrixXd sample_covariance_serial(const Eigen::MatrixXd& samples) {
    const Eigen::MatrixXd xc = centered(samples);
    Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(xc.rows() - 1);
    return 0.5 * (cov + cov.transpose());
}

double gaussian_entropy_from_covariance(const Eigen::MatrixXd& covariance) {
    return kHalfLog2PiE * static_cast<double>(covariance.rows()) + 0.5 * checked_log_det(covariance, {});
}

double gaussian_entropy(const Eigen::MatrixXd& samples) {
    if (samples.rows() < samples.cols() + 1)
        throw InputError("need at least " + std::to_string(samples.cols() + 1) + " samples for a " +
                         std::to_string(samples.cols()) + "-dimensional entropy");
    return gaussian_entropy_from_covariance(sample_covariance_serial(samples));
}

double mutual_information(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) throw InputError("mutual information needs aligned samples");
    Eigen::MatrixXd joint(a.rows(), a.cols() + b.cols());
    joint << a, b;
    return gaussian_entropy(a) + gaussian_entropy(b) - gaussian_entropy(joint);
}

GaussianModel::GaussianModel(Eigen::MatrixXd covariance, std::vector<std::vector<int>> groups)
    : cov_(std::move(covariance)), groups_(std::move(groups)) {
    if (cov_.rows() != cov_.cols()) throw InputError("covariance must be square");
    for (const auto& g : groups_)
        for (int c : g)
            if (c < 0 || c >= cov_.rows()) throw InputError("group column out of range");
}

double GaussianModel::log_det(const std::vector<int>& groups) const {
    std::vector<int> dims;
    for (int g : groups) {
        if (g < 0 || g >= num_groups()) throw InputError("unknown group " + std::to_string(g));
        dims.insert(dims.end(), groups_[g].begin(), groups_[g].end());
    }
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    Eigen::MatrixXd sub(dims.size(), dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i)
        for (std::size_t j = 0; j < dims.size(); ++j) sub(i, j) = cov_(dims[i], dims[j]);
    return checked_log_det(sub, buses_of_groups(groups));
}

double GaussianModel::entropy(const std::vector<int>& groups) const {
    std::vector<int> unique = buses_of_groups(groups);
    int r = 0;
    for (int g : unique) r += dimension(g);
    return kHalfLog2PiE * r + 0.5 * log_det(unique);
}

double GaussianModel::mi(int g, int h) const { return entropy({g}) + entropy({h}) - entropy({g, h}); }

double GaussianModel::joint_mi(int g, const std::vector<int>& hs) const {
    std::vector<int> all = hs;
    all.push_back(g);
    return entropy({g}) + entropy(hs) - entropy(all);
}

double GaussianModel::conditional_mi(const std::vector<int>& a, const std::vector<int>& b, const std::vector<int>& given) const {
    auto join = [](std::vector<int> x, const std::vector<int>& y) {
        x.insert(x.end(), y.begin(), y.end());
        return x;
    };
    auto width = [this](const std::vector<int>& gs) {
        std::size_t w = 0;
        for (int g : gs) w += groups_.at(g).size();
        return w;
    };
    if (width(a) == 0 || width(b) == 0) return 0.0;  // exact, not a rounding residue
    return entropy(join(a, given)) + entropy(join(b, given)) - entropy(join(join(a, b), given)) - entropy(given);
}

GaussianModel sample_model(const FeatureSet& fs) { return GaussianModel(sample_covariance(fs.samples), fs.columns); }

GaussianModel analytic_model(const AnalyticCovariance& cov, const std::vector<PhaseMask>& masks, Frame frame) {
    const auto n = static_cast<Eigen::Index>(cov.slots.size());
    // Real composite covariance of (Re x, Im x) for circular complex x.
    Eigen::MatrixXd real(2 * n, 2 * n);
    real << cov.sigma.real(), -cov.sigma.imag(), cov.sigma.imag(), cov.sigma.real();
    real *= 0.5;

    std::vector<std::vector<int>> slots_of(masks.size());
    for (Eigen::Index s = 0; s < n; ++s) slots_of.at(cov.slots[s].first).push_back(static_cast<int>(s));

    std::vector<std::vector<int>> groups(masks.size());
    std::vector<Eigen::MatrixXd> maps(masks.size());
    int total = 0;
    for (std::size_t b = 0; b < masks.size(); ++b) {
        if (slots_of[b].empty()) continue;
        if (static_cast<int>(slots_of[b].size()) != masks[b].count())
            throw InputError("analytic covariance does not cover bus " + std::to_string(b) + "'s phases");
        maps[b] = bus_feature_map(masks[b], frame, Source::Complex);
        for (Eigen::Index r = 0; r < maps[b].rows(); ++r) groups[b].push_back(total++);
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(total, 2 * n);
    for (std::size_t b = 0; b < masks.size(); ++b) {
        if (groups[b].empty()) continue;
        const auto k = static_cast<Eigen::Index>(slots_of[b].size());
        for (Eigen::Index r = 0; r < maps[b].rows(); ++r) {
            for (Eigen::Index j = 0; j < k; ++j) {
                a(groups[b][r], slots_of[b][j]) = maps[b](r, j);
                a(groups[b][r], n + slots_of[b][j]) = maps[b](r, k + j);
            }
        }
    }
    Eigen::MatrixXd feat = a * real * a.transpose();
    return GaussianModel(0.5 * (feat + feat.transpose()), std::move(groups));
}

MIMatrix mi_matrix(const GaussianModel& model, Frame frame, Source source) {
    const int n = model.num_groups();
    MIMatrix mi = empty_matrix(n, frame, source);
    mi.has_substation = model.has(0);
    std::vector<int> ids;
    for (int g = 0; g < n; ++g)
        if (model.has(g)) ids.push_back(g);

    std::vector<double> single(n, 0.0);
    for (int g : ids) single[g] = model.entropy({g});

    const auto pairs = pair_list(ids);
    std::vector<std::string> errors(pairs.size());
    bool any = false;
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 64)
#endif
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, k] = pairs[p];
        try {
            const double v = single[i] + single[k] - model.entropy({i, k});
            mi.values(i, k) = v;
            mi.values(k, i) = v;
        } catch (const Error& e) {
            errors[p] = e.what();
#if defined(_OPENMP)
#pragma omp atomic write
#endif
            any = true;
        }
    }
    if (any) throw_pair_failures(pairs, errors);
    return mi;
}

Eigen::MatrixXd partial_mi_matrix(const GaussianModel& model) {
    const int n = model.num_groups();
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    std::vector<int> ids, dims;
    for (int g = 0; g < n; ++g) {
        if (!model.has(g)) continue;
        ids.push_back(g);
        out(g, g) = 0.0;
        dims.insert(dims.end(), model.group(g).begin(), model.group(g).end());
    }
    if (ids.size() < 2) return out;
    const Eigen::MatrixXd sub = model.covariance()(dims, dims);
    checked_log_det(sub, ids);
    const Eigen::MatrixXd full_precision = sub.llt().solve(Eigen::MatrixXd::Identity(sub.rows(), sub.cols()));
    // Rows of each group inside the reduced precision.
    std::vector<std::vector<int>> rows(n);
    for (int g = 0, next = 0; g < n; ++g)
        if (model.has(g))
            for (std::size_t i = 0; i < model.group(g).size(); ++i) rows[g].push_back(next++);

    auto log_det = [&](const std::vector<int>& r) {
        const Eigen::MatrixXd block = full_precision(r, r);
        return 2.0 * block.llt().matrixLLT().diagonal().array().log().sum();
    };
    std::vector<double> single(n, 0.0);
    for (int g : ids) single[g] = log_det(rows[g]);
    const auto pairs = pair_list(ids);
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 64)
#endif
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, k] = pairs[p];
        std::vector<int> both = rows[i];
        both.insert(both.end(), rows[k].begin(), rows[k].end());
        const double v = 0.5 * (single[i] + single[k] - log_det(both));
        out(i, k) = v;
        out(k, i) = v;
    }
    return out;
}

MIMatrix mi_matrix(const IncrementPanel& panel, Frame frame, Source source) {
    const FeatureSet fs = features(panel, frame, source, slack_has_variance(panel));
    int widest = 0;
    for (const auto& c : fs.columns) widest = std::max(widest, static_cast<int>(c.size()));
    if (panel.num_samples() < 2 * widest + 1)
        throw InputError("need at least " + std::to_string(2 * widest + 1) + " increments for pairwise mutual information, got " +
                         std::to_string(panel.num_samples()));
    return mi_matrix(sample_model(fs), frame, source);
}

MIMatrix mi_matrix_serial(const IncrementPanel& panel, Frame frame, Source source) {
    const FeatureSet fs = features(panel, frame, source, slack_has_variance(panel));
    const int n = panel.num_buses();
    MIMatrix mi = empty_matrix(n, frame, source);
    std::vector<int> ids;
    for (int b = 0; b < n; ++b)
        if (!fs.columns[b].empty()) ids.push_back(b);
    mi.has_substation = !fs.columns[0].empty();
    const auto pairs = pair_list(ids);
    std::vector<std::string> errors(pairs.size());
    bool any = false;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, k] = pairs[p];
        try {
            const double v = mutual_information(fs.samples(Eigen::all, fs.columns[i]), fs.samples(Eigen::all, fs.columns[k]));
            mi.values(i, k) = v;
            mi.values(k, i) = v;
        } catch (const Error& e) {
            errors[p] = e.what();
            any = true;
        }
    }
    if (any) throw_pair_failures(pairs, errors);
    return mi;
}

MIBreakdown mi_breakdown(const IncrementPanel& panel, int bus_i, int bus_k) {
    if (bus_i < 0 || bus_k < 0 || bus_i >= panel.num_buses() || bus_k >= panel.num_buses() || bus_i == bus_k)
        throw InputError("mi_breakdown needs two distinct buses of the panel");
    if (!panel.magnitude_only && panel.delta_angle.size() == 0)
        throw InputError("mi_breakdown needs angle increments; difference the panel with angle_increments set");
    std::vector<Eigen::VectorXd> cols;
    std::vector<std::vector<int>> groups(4);
    auto add = [&](int group, const Eigen::MatrixXd& source, int bus) {
        if (source.size() == 0) return;  // magnitude-only panel: no angle increments
        for (Phase p : panel.masks[bus].phases()) {
            Eigen::VectorXd c = source.col(VoltagePanel::column(bus, p));
            if (c.size() == 0 || c.maxCoeff() == c.minCoeff()) continue;
            groups[group].push_back(static_cast<int>(cols.size()));
            cols.push_back(std::move(c));
        }
    };
    add(0, panel.delta_magnitude, bus_i);
    add(1, panel.delta_angle, bus_i);
    add(2, panel.delta_magnitude, bus_k);
    add(3, panel.delta_angle, bus_k);
    Eigen::MatrixXd samples(panel.num_samples(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) samples.col(static_cast<Eigen::Index>(c)) = cols[c];
    if (samples.rows() < samples.cols() + 1) throw InputError("too few increments for mi_breakdown");
    GaussianModel model(sample_covariance_serial(samples), groups);
    MIBreakdown out;
    out.a = model.conditional_mi({0}, {2}, {});
    out.b = model.conditional_mi({1}, {2}, {0});
    out.c = model.conditional_mi({0, 1}, {3}, {2});
    out.total = model.conditional_mi({0, 1}, {2, 3}, {});
    return out;
}

}  // namespace gridtopo
