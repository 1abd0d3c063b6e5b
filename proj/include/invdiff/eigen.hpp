#pragma once

// Sturm-Liouville eigensolver for -(a phi')' + q phi = lambda phi, the
// Liouville change of variables to potential form -psi'' + Q psi, eigenvalue
// asymptotics diagnostics, and the Gel'fand-Levitan Volterra kernel.

#include <invdiff/grid.hpp>

#include <optional>
#include <vector>

namespace invdiff {

struct EigenSystem {
    Grid grid;
    std::vector<double> eigenvalues;  // ascending
    // normalized to u'(0) = 1 (Dirichlet left end) or u(0) = 1 (impedance)
    std::vector<SampledField> eigenfunctions;
    // discrete-L2 orthonormal copies, used by the spectral solver
    std::vector<SampledField> orthonormal;
};

// Lowest n_modes eigenpairs of the assembled operator via a symmetric
// tridiagonal eigensolve (similarity-transformed by the lumped mass).
// Requires n_modes <= n_nodes/8 so the top requested mode stays resolved.
EigenSystem solve_eigen(const Grid& grid, const SampledField& a, const SampledField& q,
                        const BoundaryCondition& bc_left, const BoundaryCondition& bc_right,
                        int n_modes);

struct CanonicalForm {
    double L = 1.0;             // mapped interval length
    SampledField Q;             // potential on the uniform y-grid over (0, L)
    SampledField ell;           // l(x) on the original grid
    SampledField ell_inverse;   // x(y) on the y-grid
};

// Change of variables y = l(x) = int_0^x a^{-1/2} turning -(a u')' + q u
// into -w'' + Q w on (0, L); Q(y) = q - a^{1/4} (a (a^{-1/4})')' evaluated
// at x(y) by monotone (pchip) interpolation.
CanonicalForm liouville_transform(const SampledField& a, const SampledField& q);

// Residuals r_n = lambda_n - n^2 pi^2 - int Q + int Q(t) cos(2 n pi t) dt of
// the Dirichlet eigenvalue expansion for -d^2/dy^2 + Q on the unit interval.
std::vector<double> eigenvalue_asymptotics_check(const SampledField& Q,
                                                 const EigenSystem& es);

struct GLKernel {
    Grid grid;               // characteristic lattice spacing along xi and eta
    std::vector<double> u;   // U(xi_i, eta_j), row-major, j <= i, i + j <= n-1
    SampledField Q, P;
    bool impedance = false;
    double boundary_h = 0.0;
    int sweeps = 0;
    double residual = 0.0;

    double at(int i_xi, int j_eta) const;
    // K(x, x) at x = grid.x(i): the eta = 0 lattice row
    double diag_value(int i) const { return u[static_cast<size_t>(i) * grid.n_nodes]; }
};

// Solves the Goursat problem U_{xi eta} = (Q(xi+eta) - P(xi-eta)) U in
// characteristic coordinates xi = (x+t)/2, eta = (x-t)/2 by Picard iteration
// on the equivalent Volterra integral equation (tolerance 1e-10, at most 200
// sweeps).  Without boundary_h the Dirichlet normalization K(x,x) =
// (1/2) int_0^x (Q-P) and K(x,0) = 0 is used; with boundary_h the impedance
// normalization K(x,x) = h + (1/2) int_0^x (Q-P) with K even in t.
GLKernel gl_kernel(const SampledField& Q, const SampledField& P,
                   std::optional<double> boundary_h = std::nullopt);

struct LipschitzDiagnostics {
    bool skipped = false;  // Q1 == Q2, ratios are 0/0
    double eig_gap_ratio = 0.0;
    double kernel_gap_ratio = 0.0;
    double efunc_gap_ratio = 0.0;
};

// Empirical Lipschitz ratios sup_n |lambda_n - mu_n| / ||Q1-Q2||_2,
// ||K(Q1)-K(Q2)||_inf / ||Q1-Q2||_2 and sup_n ||phi_n - psi_n||_inf /
// ||Q1-Q2||_2 over the first 10 Dirichlet modes.
LipschitzDiagnostics lipschitz_diagnostics(const SampledField& Q1, const SampledField& Q2);

}  // namespace invdiff
