// Serial reference vs parallel kernels on the 123-bus feeder. Prints wall
// times and the largest deviation between the two paths.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <functional>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "gridtopo/feeders.hpp"
#include "gridtopo/info_core.hpp"
#include "gridtopo/synth_lab.hpp"
#include "gridtopo/topo_est.hpp"

using namespace gridtopo;

namespace {

double seconds(const std::function<void()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    int samples = 8760;
    if (argc > 1) {
        char* end = nullptr;
        const long n = std::strtol(argv[1], &end, 10);
        if (argc > 2 || *end != '\0' || n < 2 || n > 10000000) {
            std::fprintf(stderr, "usage: bench_kernels [samples >= 2]\n");
            return 2;
        }
        samples = static_cast<int>(n);
    }
    int threads = 1;
#if defined(_OPENMP)
    threads = omp_get_max_threads();
#endif
    std::printf("threads %d, samples %d\n", threads, samples);

    const GridTopology topo = feeder123();
    const InjectionSpec spec = default_injection(topo, 7);

    VoltagePanel par, ser;
    const double t_gen = seconds([&] { par = generate_increments(topo, spec, samples); });
    const double t_gen_ref = seconds([&] { ser = generate_increments_serial(topo, spec, samples); });
    std::printf("generate     parallel %8.3f s  serial %8.3f s  max diff %.3e\n", t_gen, t_gen_ref,
                (par.values - ser.values).cwiseAbs().maxCoeff());

    const VoltagePanel v = integrate_voltages(par, flat_start(topo));
    const IncrementPanel inc = difference(v);
    const FeatureSet fs = features(inc, Frame::Sequence, Source::Complex);

    Eigen::MatrixXd c_par, c_ser;
    const double t_cov = seconds([&] { c_par = sample_covariance(fs.samples); });
    const double t_cov_ref = seconds([&] { c_ser = sample_covariance_serial(fs.samples); });
    std::printf("covariance   parallel %8.3f s  serial %8.3f s  max diff %.3e\n", t_cov, t_cov_ref,
                (c_par - c_ser).cwiseAbs().maxCoeff());

    MIMatrix m_par, m_ser;
    const double t_mi = seconds([&] { m_par = mi_matrix(inc, Frame::Sequence, Source::Complex); });
    const double t_mi_ref = seconds([&] { m_ser = mi_matrix_serial(inc, Frame::Sequence, Source::Complex); });
    const Eigen::MatrixXd d = (m_par.values - m_ser.values).unaryExpr([](double x) { return std::isnan(x) ? 0.0 : x; });
    std::printf("mi matrix    parallel %8.3f s  serial %8.3f s  max diff %.3e\n", t_mi, t_mi_ref, d.cwiseAbs().maxCoeff());

    EdgeSetEstimate tree;
    const double t_mst = seconds([&] { tree = max_weight_spanning_tree(m_par); });
    std::printf("spanning tree %7.3f s  (%zu edges)\n", t_mst, tree.edges.size());
    return 0;
}
