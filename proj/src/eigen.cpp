#include <invdiff/eigen.hpp>

#include <invdiff/discretization.hpp>

#include <cmath>
// the pchip header calls isnan unqualified
using std::isnan;
#include <boost/math/interpolators/pchip.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace invdiff {

namespace {

void require_unit_interval(const SampledField& f, const char* who) {
    if (std::fabs(f.grid.length - 1.0) > 1e-12)
        throw std::invalid_argument(std::string(who) + ": field must live on the unit interval");
}

}  // namespace

EigenSystem solve_eigen(const Grid& grid, const SampledField& a, const SampledField& q,
                        const BoundaryCondition& bc_left, const BoundaryCondition& bc_right,
                        int n_modes) {
    if (n_modes < 1) throw std::invalid_argument("solve_eigen: need n_modes >= 1");
    if (n_modes > grid.n_nodes / 8)
        throw std::invalid_argument("solve_eigen: requested modes under-resolved on this grid");
    const auto op = assemble_operator(grid, a, q, bc_left, bc_right);

    const int n = grid.n_nodes;
    const int i0 = op.dirichlet_left ? 1 : 0;
    const int i1 = n - 1 - (op.dirichlet_right ? 1 : 0);
    const int m = i1 - i0 + 1;

    // similarity transform B = M^{1/2} K M^{-1/2} is symmetric tridiagonal
    Eigen::VectorXd dv(m), ev(std::max(m - 1, 0));
    for (int k = 0; k < m; ++k) dv(k) = op.diag[i0 + k];
    for (int k = 0; k + 1 < m; ++k)
        ev(k) = op.upper[i0 + k] * std::sqrt(op.mass[i0 + k] / op.mass[i0 + k + 1]);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(dv, ev, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw std::runtime_error("solve_eigen: eigensolve failed");

    EigenSystem out;
    out.grid = grid;
    for (int mode = 0; mode < n_modes; ++mode) {
        const double lambda = es.eigenvalues()(mode);
        std::vector<double> phi(n, 0.0);
        for (int k = 0; k < m; ++k)
            phi[i0 + k] = es.eigenvectors()(k, mode) / std::sqrt(op.mass[i0 + k]);
        SampledField f(grid, std::move(phi));

        const double scale = op.dirichlet_left ? differentiate(f)[0] : f[0];
        if (std::fabs(scale) < 1e-12 * (1.0 + norm_sup(f)))
            throw std::runtime_error("solve_eigen: degenerate normalization at x=0");
        std::vector<double> paper(n), orth(n);
        const double flip = scale < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) {
            paper[i] = f[i] / scale;
            orth[i] = flip * f[i];
        }
        out.eigenvalues.push_back(lambda);
        out.eigenfunctions.emplace_back(grid, std::move(paper));
        out.orthonormal.emplace_back(grid, std::move(orth));
    }
    return out;
}

CanonicalForm liouville_transform(const SampledField& a, const SampledField& q) {
    if (a.grid != q.grid) throw std::invalid_argument("liouville_transform: grid mismatch");
    const int n = a.size();
    if (n < 4) throw std::invalid_argument("liouville_transform: need at least 4 nodes");
    for (double ai : a.v)
        if (!(ai > 0.0)) throw std::invalid_argument("liouville_transform: a must be positive");

    std::vector<double> ainvsqrt(n), am4(n);
    for (int i = 0; i < n; ++i) {
        ainvsqrt[i] = 1.0 / std::sqrt(a[i]);
        am4[i] = std::pow(a[i], -0.25);
    }
    const auto ell = integrate_cumulative(SampledField(a.grid, std::move(ainvsqrt)));
    const double L = ell[n - 1];

    // Q(x) = q - a^{1/4} (a (a^{-1/4})')'
    const auto t1 = differentiate(SampledField(a.grid, std::move(am4)));
    std::vector<double> inner(n);
    for (int i = 0; i < n; ++i) inner[i] = a[i] * t1[i];
    const auto t2 = differentiate(SampledField(a.grid, std::move(inner)));
    std::vector<double> qx(n);
    for (int i = 0; i < n; ++i) qx[i] = q[i] - std::pow(a[i], 0.25) * t2[i];

    const Grid ygrid = Grid::uniform(n, L);
    auto clamped = [&](double y) { return std::min(std::max(y, ell[0]), ell[n - 1]); };
    auto xspline = boost::math::interpolators::pchip(std::vector<double>(ell.v),
                                                     a.grid.nodes());
    std::vector<double> x_of_y(n);
    for (int i = 0; i < n; ++i) x_of_y[i] = xspline(clamped(ygrid.x(i)));

    auto qspline = boost::math::interpolators::pchip(a.grid.nodes(), std::move(qx));
    std::vector<double> qy(n);
    for (int i = 0; i < n; ++i) qy[i] = qspline(x_of_y[i]);

    CanonicalForm out;
    out.L = L;
    out.Q = SampledField(ygrid, std::move(qy));
    out.ell = ell;
    out.ell_inverse = SampledField(ygrid, std::move(x_of_y));
    return out;
}

std::vector<double> eigenvalue_asymptotics_check(const SampledField& Q,
                                                 const EigenSystem& es) {
    require_unit_interval(Q, "eigenvalue_asymptotics_check");
    const double mean = integrate(Q);
    const int N = std::min<int>(10, static_cast<int>(es.eigenvalues.size()));
    std::vector<double> r(N);
    for (int k = 1; k <= N; ++k) {
        const auto cosq = SampledField::sample(
            Q.grid, [&](double t) { return std::cos(2.0 * k * M_PI * t); });
        std::vector<double> prod(Q.size());
        for (int i = 0; i < Q.size(); ++i) prod[i] = Q[i] * cosq[i];
        const double cosmom = integrate(SampledField(Q.grid, std::move(prod)));
        r[k - 1] = es.eigenvalues[k - 1] - k * k * M_PI * M_PI - mean + cosmom;
    }
    return r;
}

double GLKernel::at(int i_xi, int j_eta) const {
    if (j_eta > i_xi) {
        if (!impedance) throw std::out_of_range("GLKernel::at: below-diagonal lookup");
        std::swap(i_xi, j_eta);
    }
    return u[static_cast<size_t>(i_xi) * grid.n_nodes + j_eta];
}

GLKernel gl_kernel(const SampledField& Q, const SampledField& P,
                   std::optional<double> boundary_h) {
    if (Q.grid != P.grid) throw std::invalid_argument("gl_kernel: grid mismatch");
    require_unit_interval(Q, "gl_kernel");
    const int n = Q.grid.n_nodes;
    const double h = Q.grid.h();
    const bool imp = boundary_h.has_value();
    const double hval = boundary_h.value_or(0.0);

    std::vector<double> halfdiff(n);
    for (int i = 0; i < n; ++i) halfdiff[i] = 0.5 * (Q[i] - P[i]);
    auto G = integrate_cumulative(SampledField(Q.grid, std::move(halfdiff))).v;
    if (imp)
        for (auto& g : G) g += hval;

    auto idx = [n](int i, int j) { return static_cast<size_t>(i) * n + j; };
    const size_t nn = static_cast<size_t>(n) * n;
    std::vector<double> U(nn, 0.0), W(nn, 0.0), F(nn, 0.0), Unew(nn, 0.0);

    // start from the pure data term
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i && i + j <= n - 1; ++j)
            U[idx(i, j)] = imp ? G[i] + G[j] - hval : G[i] - G[j];

    GLKernel out;
    out.grid = Q.grid;
    out.Q = Q;
    out.P = P;
    out.impedance = imp;
    out.boundary_h = hval;

    double diff = std::numeric_limits<double>::infinity();
    const double quarter = 0.25 * h * h;
    for (int sweep = 1; sweep <= 200; ++sweep) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; i + j <= n - 1; ++j) {
                if (j <= i)
                    W[idx(i, j)] = (Q[i + j] - P[i - j]) * U[idx(i, j)];
                else
                    W[idx(i, j)] = imp ? (Q[i + j] - P[j - i]) * U[idx(j, i)] : 0.0;
            }
        }
        // cumulative trapezoid F(i,j) = int_0^{xi_i} int_0^{eta_j} W
        for (int i = 1; i < n; ++i) {
            for (int j = 1; i + j <= n - 1; ++j) {
                F[idx(i, j)] = F[idx(i - 1, j)] + F[idx(i, j - 1)] - F[idx(i - 1, j - 1)] +
                               quarter * (W[idx(i, j)] + W[idx(i - 1, j)] + W[idx(i, j - 1)] +
                                          W[idx(i - 1, j - 1)]);
            }
        }
        diff = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j <= i && i + j <= n - 1; ++j) {
                const double val = imp ? G[i] + G[j] - hval + F[idx(i, j)]
                                       : G[i] - G[j] + F[idx(i, j)] - F[idx(j, j)];
                diff = std::max(diff, std::fabs(val - U[idx(i, j)]));
                Unew[idx(i, j)] = val;
            }
        }
        std::swap(U, Unew);
        out.sweeps = sweep;
        out.residual = diff;
        if (diff <= 1e-10) break;
    }
    if (diff > 1e-10) {
        std::ostringstream msg;
        msg << "gl_kernel: no convergence after 200 sweeps, residual " << diff;
        throw std::runtime_error(msg.str());
    }
    out.u = std::move(U);
    return out;
}

LipschitzDiagnostics lipschitz_diagnostics(const SampledField& Q1, const SampledField& Q2) {
    if (Q1.grid != Q2.grid) throw std::invalid_argument("lipschitz_diagnostics: grid mismatch");
    require_unit_interval(Q1, "lipschitz_diagnostics");
    LipschitzDiagnostics out;
    const double d = dist_l2(Q1, Q2);
    if (d == 0.0) {
        out.skipped = true;
        out.eig_gap_ratio = out.kernel_gap_ratio = out.efunc_gap_ratio =
            std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    const Grid& g = Q1.grid;
    const SampledField one(g, 1.0);
    const auto bc = BoundaryCondition::dirichlet(0.0);
    const int N = 10;
    const auto es1 = solve_eigen(g, one, Q1, bc, bc, N);
    const auto es2 = solve_eigen(g, one, Q2, bc, bc, N);

    double eig_gap = 0.0, efunc_gap = 0.0;
    for (int k = 0; k < N; ++k) {
        eig_gap = std::max(eig_gap, std::fabs(es1.eigenvalues[k] - es2.eigenvalues[k]));
        efunc_gap = std::max(efunc_gap, dist_sup(es1.eigenfunctions[k], es2.eigenfunctions[k]));
    }

    const SampledField zero(g, 0.0);
    const auto K1 = gl_kernel(Q1, zero);
    const auto K2 = gl_kernel(Q2, zero);
    double kernel_gap = 0.0;
    for (int i = 0; i < g.n_nodes; ++i)
        for (int j = 0; j <= i && i + j <= g.n_nodes - 1; ++j)
            kernel_gap = std::max(kernel_gap, std::fabs(K1.at(i, j) - K2.at(i, j)));

    out.eig_gap_ratio = eig_gap / d;
    out.kernel_gap_ratio = kernel_gap / d;
    out.efunc_gap_ratio = efunc_gap / d;
    return out;
}

}  // namespace invdiff
