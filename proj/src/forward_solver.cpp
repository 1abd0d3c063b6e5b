#include <invdiff/forward_solver.hpp>

#include <invdiff/discretization.hpp>
#include <invdiff/eigen.hpp>
#include <invdiff/special_functions.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace invdiff {

namespace {

// L1 history weights b_k = (k+1)^{1-alpha} - k^{1-alpha}; collapses to the
// plain backward difference at alpha = 1 (pow(0,0) = 1 would spoil b_0 there)
std::vector<double> l1_weights(double alpha, int m) {
    std::vector<double> b(m, 0.0);
    if (alpha == 1.0) {
        b[0] = 1.0;
        return b;
    }
    for (int k = 0; k < m; ++k)
        b[k] = std::pow(k + 1.0, 1.0 - alpha) - std::pow(k, 1.0 - alpha);
    return b;
}

void validate_spec(const ProblemSpec& spec, const char* who) {
    if (!(spec.alpha > 0.0) || spec.alpha > 1.0)
        throw std::invalid_argument(std::string(who) + ": alpha must lie in (0, 1]");
    if (!(spec.T > 0.0)) throw std::invalid_argument(std::string(who) + ": T must be positive");
    if (spec.u0.grid != spec.grid)
        throw std::invalid_argument(std::string(who) + ": u0 grid mismatch");
}

bool is_dirichlet_row(const EllipticOperator& op, int i) {
    return (i == 0 && op.dirichlet_left) ||
           (i == op.grid.n_nodes - 1 && op.dirichlet_right);
}

// mu * sum_k b_k (u_{M-k} - u_{M-k-1}) evaluated at the final time
std::vector<double> l1_sum_at_final(const SolutionHistory& h, double alpha) {
    const int m = static_cast<int>(h.times.size()) - 1;
    const double dt = h.times[1] - h.times[0];
    const double mu = std::pow(dt, -alpha) / gamma_fn(2.0 - alpha);
    const auto b = l1_weights(alpha, m);
    const int n = h.states[0].size();
    std::vector<double> s(n, 0.0);
    for (int k = 0; k < m; ++k) {
        if (b[k] == 0.0) continue;
        const auto& up = h.states[m - k].v;
        const auto& um = h.states[m - k - 1].v;
        for (int i = 0; i < n; ++i) s[i] += b[k] * (up[i] - um[i]);
    }
    for (auto& x : s) x *= mu;
    return s;
}

void compatibility_warnings(const ProblemSpec& spec, SolutionHistory& out) {
    const int n = spec.grid.n_nodes;
    const auto d0 = differentiate(spec.u0);
    auto check = [&](const BoundaryCondition& bc, int i, const char* side) {
        if (bc.kind == BcKind::dirichlet) {
            if (std::fabs(spec.u0[i] - bc.data(0.0)) > 1e-9 * (1.0 + std::fabs(spec.u0[i])))
                out.warnings.push_back(std::string("initial state incompatible with ") + side +
                                       " Dirichlet data; expect reduced accuracy near t = 0");
        } else {
            const double flux =
                (i == 0 ? -spec.a[0] * d0[0] : spec.a[i] * d0[i]) + bc.gamma * spec.u0[i];
            // loose threshold: the end-stencil derivative itself is only O(h^3)
            if (std::fabs(flux - bc.data(0.0)) > 1e-4 * (1.0 + std::fabs(flux)))
                out.warnings.push_back(std::string("initial flux incompatible with ") + side +
                                       " impedance data; expect reduced accuracy near t = 0");
        }
    };
    check(spec.bc_left, 0, "left");
    check(spec.bc_right, n - 1, "right");
}

void march_l1(const ProblemSpec& spec, int n_steps, const EllipticOperator& op,
              SolutionHistory& out) {
    const int n = spec.grid.n_nodes;
    const double dt = spec.T / n_steps;
    const double mu = std::pow(dt, -spec.alpha) / gamma_fn(2.0 - spec.alpha);
    const auto b = l1_weights(spec.alpha, n_steps);

    std::vector<double> lo = op.lower, di = op.diag, up = op.upper;
    for (int i = 0; i < n; ++i)
        if (!is_dirichlet_row(op, i)) di[i] += mu;

    bool sweep_cap_hit = false;
    std::vector<double> hist(n);
    for (int m = 1; m <= n_steps; ++m) {
        const double t_m = out.times[m];
        const auto& uprev = out.states[m - 1];

        if (spec.alpha == 1.0) {
            hist = uprev.v;
        } else {
            std::fill(hist.begin(), hist.end(), 0.0);
            for (int j = 1; j < m; ++j) {
                const double wj = b[j - 1] - b[j];
                const auto& uu = out.states[m - j].v;
                for (int i = 0; i < n; ++i) hist[i] += wj * uu[i];
            }
            const auto& u0v = out.states[0].v;
            for (int i = 0; i < n; ++i) hist[i] += b[m - 1] * u0v[i];
        }

        std::vector<double> base(n);
        for (int i = 0; i < n; ++i)
            base[i] = mu * hist[i] + spec.forcing(spec.grid.x(i), t_m, uprev[i]);
        op.add_boundary_rhs(t_m, base);

        std::vector<double> unew;
        if (spec.reaction_is_identity) {
            unew = solve_tridiagonal(lo, di, up, base);
        } else {
            std::vector<double> ucur = uprev.v;
            bool converged = false;
            for (int sweep = 0; sweep < 25 && !converged; ++sweep) {
                std::vector<double> rhs = base;
                for (int i = 0; i < n; ++i)
                    if (!is_dirichlet_row(op, i)) rhs[i] -= spec.q[i] * spec.reaction(ucur[i]);
                unew = solve_tridiagonal(lo, di, up, rhs);
                double diff = 0.0, scale = 0.0;
                for (int i = 0; i < n; ++i) {
                    diff = std::max(diff, std::fabs(unew[i] - ucur[i]));
                    scale = std::max(scale, std::fabs(unew[i]));
                }
                if (!std::isfinite(diff) || diff > 1e10) {
                    std::ostringstream msg;
                    msg << "solve_forward: nonlinear iteration diverged at step " << m << " (t = "
                        << t_m << ")";
                    throw std::runtime_error(msg.str());
                }
                converged = diff <= 1e-10 * (1.0 + scale);
                ucur = unew;
            }
            if (!converged) sweep_cap_hit = true;
        }
        out.states.emplace_back(spec.grid, std::move(unew));
    }
    if (sweep_cap_hit)
        out.warnings.push_back("nonlinear correction hit the sweep cap on at least one step");
}

void march_crank_nicolson(const ProblemSpec& spec, int n_steps, const EllipticOperator& op,
                          SolutionHistory& out) {
    const int n = spec.grid.n_nodes;
    const double dt = spec.T / n_steps;

    std::vector<double> lo(n, 0.0), di(n, 0.0), up(n, 0.0);
    for (int i = 0; i < n; ++i) {
        if (is_dirichlet_row(op, i)) {
            di[i] = 1.0;
        } else {
            lo[i] = 0.5 * op.lower[i];
            di[i] = 1.0 / dt + 0.5 * op.diag[i];
            up[i] = 0.5 * op.upper[i];
        }
    }

    for (int m = 1; m <= n_steps; ++m) {
        const double t_prev = out.times[m - 1];
        const double t_m = out.times[m];
        const auto& uprev = out.states[m - 1];
        const auto ku = op.apply(uprev.v);
        std::vector<double> bc1(n, 0.0), bc2(n, 0.0);
        op.add_boundary_rhs(t_prev, bc1);
        op.add_boundary_rhs(t_m, bc2);

        std::vector<double> rhs(n);
        for (int i = 0; i < n; ++i) {
            if (is_dirichlet_row(op, i)) {
                rhs[i] = bc2[i];
                continue;
            }
            const double x = spec.grid.x(i);
            rhs[i] = uprev[i] / dt - 0.5 * ku[i] + 0.5 * (bc1[i] + bc2[i]) +
                     0.5 * (spec.forcing(x, t_prev, uprev[i]) + spec.forcing(x, t_m, uprev[i]));
        }
        out.states.emplace_back(spec.grid, solve_tridiagonal(lo, di, up, rhs));
    }
}

}  // namespace

SolutionHistory solve_forward(const ProblemSpec& spec, int n_steps, TimeScheme scheme) {
    validate_spec(spec, "solve_forward");
    if (n_steps < 8) throw std::invalid_argument("solve_forward: need at least 8 steps");

    TimeScheme active = scheme;
    if (active == TimeScheme::auto_select)
        active = spec.alpha == 1.0 ? TimeScheme::implicit_euler : TimeScheme::l1;
    if (spec.alpha < 1.0 && active != TimeScheme::l1)
        throw std::invalid_argument("solve_forward: only the L1 scheme supports alpha < 1");
    if (active == TimeScheme::crank_nicolson && !spec.reaction_is_identity)
        throw std::invalid_argument("solve_forward: the Crank-Nicolson path is linear-only");

    const SampledField q_eff =
        spec.reaction_is_identity ? spec.q : SampledField(spec.grid, 0.0);
    const auto op = assemble_operator(spec.grid, spec.a, q_eff, spec.bc_left, spec.bc_right);

    SolutionHistory out;
    out.times.resize(n_steps + 1);
    for (int m = 0; m <= n_steps; ++m) out.times[m] = spec.T * m / n_steps;
    out.states.reserve(n_steps + 1);
    out.states.push_back(spec.u0);
    if (spec.alpha < 1.0) compatibility_warnings(spec, out);

    if (active == TimeScheme::crank_nicolson)
        march_crank_nicolson(spec, n_steps, op, out);
    else
        march_l1(spec, n_steps, op, out);

    out.caputo_at_T = caputo_at_final(out, spec, &out.caputo_discrepancy);
    return out;
}

SampledField caputo_at_final(const SolutionHistory& history, const ProblemSpec& spec,
                             double* discrepancy) {
    if (history.states.size() < 2 || history.times.size() != history.states.size())
        throw std::invalid_argument("caputo_at_final: degenerate history");
    const auto& uT = history.states.back();
    const int n = uT.size();
    const double t_final = history.times.back();

    const SampledField q_eff =
        spec.reaction_is_identity ? spec.q : SampledField(spec.grid, 0.0);
    const auto op = assemble_operator(spec.grid, spec.a, q_eff, spec.bc_left, spec.bc_right);

    const auto direct = l1_sum_at_final(history, spec.alpha);
    const auto ku = op.apply(uT.v);
    std::vector<double> bc_add(n, 0.0);
    op.add_boundary_rhs(t_final, bc_add);

    std::vector<double> result(n);
    double gap = 0.0;
    for (int i = 0; i < n; ++i) {
        if (is_dirichlet_row(op, i)) {
            result[i] = direct[i];
            continue;
        }
        double val = -ku[i] + bc_add[i] + spec.forcing(spec.grid.x(i), t_final, uT[i]);
        if (!spec.reaction_is_identity) val -= spec.q[i] * spec.reaction(uT[i]);
        result[i] = val;
        gap = std::max(gap, std::fabs(val - direct[i]));
    }
    if (discrepancy) *discrepancy = gap;
    return SampledField(spec.grid, std::move(result));
}

SolutionHistory spectral_solution(const ProblemSpec& spec, int n_modes) {
    validate_spec(spec, "spectral_solution");
    if (!spec.reaction_is_identity)
        throw std::invalid_argument("spectral_solution: nonlinear reaction unsupported");
    const double probes[3] = {0.0, 0.5 * spec.T, spec.T};
    for (double t : probes)
        if (!spec.bc_left.homogeneous_at(t) || !spec.bc_right.homogeneous_at(t))
            throw std::invalid_argument("spectral_solution: boundary data must be homogeneous");
    const int n = spec.grid.n_nodes;
    const int stride = std::max(1, n / 7);
    for (double t : probes)
        for (int i = 0; i < n; i += stride)
            for (double u : {0.0, 1.0})
                if (spec.forcing(spec.grid.x(i), t, u) != 0.0)
                    throw std::invalid_argument("spectral_solution: forcing must vanish");

    const auto es =
        solve_eigen(spec.grid, spec.a, spec.q, spec.bc_left, spec.bc_right, n_modes);

    const double h = spec.grid.h();
    auto weight = [&](int i) { return (i == 0 || i == n - 1) ? 0.5 * h : h; };
    std::vector<double> c(n_modes);
    for (int k = 0; k < n_modes; ++k) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += weight(i) * spec.u0[i] * es.orthonormal[k][i];
        c[k] = s;
    }

    std::vector<double> u_final(n, 0.0), d_final(n, 0.0);
    for (int k = 0; k < n_modes; ++k) {
        const double lam = es.eigenvalues[k];
        if (lam < 0.0)
            throw std::invalid_argument("spectral_solution: negative eigenvalue encountered");
        const double decay =
            lam == 0.0 ? 1.0
                       : mittag_leffler(spec.alpha, 1.0, -lam * std::pow(spec.T, spec.alpha));
        for (int i = 0; i < n; ++i) {
            u_final[i] += c[k] * decay * es.orthonormal[k][i];
            d_final[i] += c[k] * (-lam) * decay * es.orthonormal[k][i];
        }
    }

    SolutionHistory out;
    out.times = {0.0, spec.T};
    out.states.push_back(spec.u0);
    out.states.emplace_back(spec.grid, std::move(u_final));
    out.caputo_at_T = SampledField(spec.grid, std::move(d_final));
    out.caputo_discrepancy = 0.0;
    return out;
}

}  // namespace invdiff
