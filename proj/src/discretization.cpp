#include <invdiff/discretization.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace invdiff {

std::vector<double> EllipticOperator::apply(const std::vector<double>& w) const {
    const int n = grid.n_nodes;
    if (static_cast<int>(w.size()) != n)
        throw std::invalid_argument("EllipticOperator::apply: size mismatch");
    std::vector<double> y(n);
    y[0] = diag[0] * w[0] + upper[0] * w[1];
    for (int i = 1; i < n - 1; ++i)
        y[i] = lower[i] * w[i - 1] + diag[i] * w[i] + upper[i] * w[i + 1];
    y[n - 1] = lower[n - 1] * w[n - 2] + diag[n - 1] * w[n - 1];
    return y;
}

void EllipticOperator::add_boundary_rhs(double t, std::vector<double>& rhs) const {
    const int n = grid.n_nodes;
    const double h = grid.h();
    if (dirichlet_left)
        rhs[0] = bc_left.data(t);
    else
        rhs[0] += 2.0 * bc_left.data(t) / h;
    if (dirichlet_right)
        rhs[n - 1] = bc_right.data(t);
    else
        rhs[n - 1] += 2.0 * bc_right.data(t) / h;
}

EllipticOperator assemble_operator(const Grid& grid, const SampledField& a,
                                   const SampledField& q,
                                   const BoundaryCondition& bc_left,
                                   const BoundaryCondition& bc_right) {
    if (a.grid != grid || q.grid != grid)
        throw std::invalid_argument("assemble_operator: fields on a different grid");
    const int n = grid.n_nodes;
    if (n < 3) throw std::invalid_argument("assemble_operator: need at least 3 nodes");
    for (double ai : a.v)
        if (!(ai > 0.0)) throw std::invalid_argument("assemble_operator: a must be positive");

    const double h = grid.h();
    const double h2 = h * h;
    std::vector<double> ah(n - 1);
    for (int i = 0; i < n - 1; ++i) ah[i] = 0.5 * (a[i] + a[i + 1]);

    EllipticOperator op;
    op.grid = grid;
    op.bc_left = bc_left;
    op.bc_right = bc_right;
    op.lower.assign(n, 0.0);
    op.diag.assign(n, 0.0);
    op.upper.assign(n, 0.0);
    op.mass.assign(n, h);
    op.mass[0] = op.mass[n - 1] = 0.5 * h;

    for (int i = 1; i < n - 1; ++i) {
        op.lower[i] = -ah[i - 1] / h2;
        op.upper[i] = -ah[i] / h2;
        op.diag[i] = (ah[i - 1] + ah[i]) / h2 + q[i];
    }

    if (bc_left.kind == BcKind::dirichlet) {
        op.dirichlet_left = true;
        op.diag[0] = 1.0;
    } else {
        op.diag[0] = 2.0 * ah[0] / h2 + 2.0 * bc_left.gamma / h + q[0];
        op.upper[0] = -2.0 * ah[0] / h2;
    }
    if (bc_right.kind == BcKind::dirichlet) {
        op.dirichlet_right = true;
        op.diag[n - 1] = 1.0;
    } else {
        op.diag[n - 1] = 2.0 * ah[n - 2] / h2 + 2.0 * bc_right.gamma / h + q[n - 1];
        op.lower[n - 1] = -2.0 * ah[n - 2] / h2;
    }
    return op;
}

SampledField differentiate(const SampledField& field) {
    const int n = field.size();
    if (n < 3) throw std::invalid_argument("differentiate: need at least 3 nodes");
    const double h = field.grid.h();
    std::vector<double> d(n);
    for (int i = 1; i < n - 1; ++i) d[i] = (field[i + 1] - field[i - 1]) / (2.0 * h);
    if (n >= 4) {
        // cubic-exact one-sided stencils keep the endpoint error below the
        // interior h^2 f'''/6 bound
        d[0] = (-11.0 * field[0] + 18.0 * field[1] - 9.0 * field[2] + 2.0 * field[3]) / (6.0 * h);
        d[n - 1] = (11.0 * field[n - 1] - 18.0 * field[n - 2] + 9.0 * field[n - 3] -
                    2.0 * field[n - 4]) / (6.0 * h);
    } else {
        d[0] = (-3.0 * field[0] + 4.0 * field[1] - field[2]) / (2.0 * h);
        d[n - 1] = (3.0 * field[n - 1] - 4.0 * field[n - 2] + field[n - 3]) / (2.0 * h);
    }
    return SampledField(field.grid, std::move(d));
}

SampledField integrate_cumulative(const SampledField& field) {
    const int n = field.size();
    const double h = field.grid.h();
    std::vector<double> s(n);
    s[0] = 0.0;
    for (int i = 1; i < n; ++i) s[i] = s[i - 1] + 0.5 * h * (field[i - 1] + field[i]);
    return SampledField(field.grid, std::move(s));
}

std::vector<double> weighted_whittaker(const std::vector<double>& y,
                                       const std::vector<double>& w, double lambda) {
    const int n = static_cast<int>(y.size());
    if (n < 5) return y;
    const int m = n - 1;
    std::vector<double> d(n), c(n), e(n), z(n);

    d[0] = w[0] + lambda;
    c[0] = -2.0 * lambda / d[0];
    e[0] = lambda / d[0];
    z[0] = w[0] * y[0];
    d[1] = w[1] + 5.0 * lambda - d[0] * c[0] * c[0];
    c[1] = (-4.0 * lambda - d[0] * c[0] * e[0]) / d[1];
    e[1] = lambda / d[1];
    z[1] = w[1] * y[1] - c[0] * z[0];
    for (int i = 2; i < m - 1; ++i) {
        d[i] = w[i] + 6.0 * lambda - c[i - 1] * c[i - 1] * d[i - 1] - e[i - 2] * e[i - 2] * d[i - 2];
        c[i] = (-4.0 * lambda - d[i - 1] * c[i - 1] * e[i - 1]) / d[i];
        e[i] = lambda / d[i];
        z[i] = w[i] * y[i] - c[i - 1] * z[i - 1] - e[i - 2] * z[i - 2];
    }
    d[m - 1] = w[m - 1] + 5.0 * lambda - c[m - 2] * c[m - 2] * d[m - 2] - e[m - 3] * e[m - 3] * d[m - 3];
    c[m - 1] = (-2.0 * lambda - d[m - 2] * c[m - 2] * e[m - 2]) / d[m - 1];
    z[m - 1] = w[m - 1] * y[m - 1] - c[m - 2] * z[m - 2] - e[m - 3] * z[m - 3];
    d[m] = w[m] + lambda - c[m - 1] * c[m - 1] * d[m - 1] - e[m - 2] * e[m - 2] * d[m - 2];
    z[m] = (w[m] * y[m] - c[m - 1] * z[m - 1] - e[m - 2] * z[m - 2]) / d[m];
    z[m - 1] = z[m - 1] / d[m - 1] - c[m - 1] * z[m];
    for (int i = m - 2; i >= 0; --i) z[i] = z[i] / d[i] - c[i] * z[i + 1] - e[i] * z[i + 2];
    return z;
}

SampledField smooth_to_h2(const SampledField& noisy, double noise_level) {
    if (noise_level < 0.0) throw std::invalid_argument("smooth_to_h2: negative noise level");
    if (noise_level == 0.0) return noisy;
    const int n = noisy.size();
    const double target = noise_level * norm_sup(noisy);
    if (target == 0.0) return noisy;

    const std::vector<double> w(n, 1.0);
    auto residual_at = [&](double lnp) {
        auto s = weighted_whittaker(noisy.v, w, std::exp(lnp));
        double r = 0.0;
        for (int i = 0; i < n; ++i) r = std::max(r, std::fabs(s[i] - noisy.v[i]));
        return r;
    };

    // residual grows with the penalty; bisect on ln(lambda).  The upper end
    // stays small enough that the fidelity term survives double rounding.
    double lo = -40.0, hi = 23.0;
    if (residual_at(hi) <= target)
        return SampledField(noisy.grid, weighted_whittaker(noisy.v, w, std::exp(hi)));
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (residual_at(mid) < target ? lo : hi) = mid;
    }
    return SampledField(noisy.grid,
                        weighted_whittaker(noisy.v, w, std::exp(0.5 * (lo + hi))));
}

SampledField excise_and_interpolate(const SampledField& field,
                                    const std::vector<std::pair<int, int>>& holes,
                                    const std::vector<int>& pinned_zeros) {
    const int n = field.size();
    auto sorted = holes;
    std::sort(sorted.begin(), sorted.end());
    int covered = 0;
    for (size_t k = 0; k < sorted.size(); ++k) {
        const auto& [lo, hi] = sorted[k];
        if (lo > hi || lo < 1 || hi > n - 2)
            throw std::invalid_argument("excise_and_interpolate: hole not strictly interior");
        if (k > 0 && lo <= sorted[k - 1].second)
            throw std::invalid_argument("excise_and_interpolate: holes overlap");
        covered += hi - lo + 1;
    }
    if (4 * covered > n)
        throw std::invalid_argument("excise_and_interpolate: holes cover more than 25% of nodes");
    for (int p : pinned_zeros)
        if (p < 0 || p >= n)
            throw std::invalid_argument("excise_and_interpolate: pinned index out of range");
    if (holes.empty() && pinned_zeros.empty()) return field;

    std::vector<double> w(n, 1.0), y = field.v;
    for (const auto& [lo, hi] : sorted)
        for (int i = lo; i <= hi; ++i) w[i] = 0.0;
    for (int p : pinned_zeros) {
        w[p] = 1e12;
        y[p] = 0.0;
    }
    const auto s = weighted_whittaker(y, w, 1e-4);

    std::vector<double> out = field.v;
    for (const auto& [lo, hi] : sorted)
        for (int i = lo; i <= hi; ++i) out[i] = s[i];
    for (int p : pinned_zeros) out[p] = 0.0;
    return SampledField(field.grid, std::move(out));
}

std::vector<double> solve_tridiagonal(const std::vector<double>& lower,
                                      const std::vector<double>& diag,
                                      const std::vector<double>& upper,
                                      std::vector<double> rhs) {
    const int n = static_cast<int>(diag.size());
    std::vector<double> cp(n);
    cp[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for (int i = 1; i < n; ++i) {
        const double m = 1.0 / (diag[i] - lower[i] * cp[i - 1]);
        cp[i] = upper[i] * m;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) * m;
    }
    for (int i = n - 2; i >= 0; --i) rhs[i] -= cp[i] * rhs[i + 1];
    return rhs;
}

}  // namespace invdiff
