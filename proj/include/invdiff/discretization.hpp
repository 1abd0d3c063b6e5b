#pragma once

// Discrete elliptic operator Lw = -(a w')' + q w with Dirichlet/impedance
// boundary rows, plus numerical differentiation, quadrature and the
// smoothing filters used to turn noisy observations into H^2 data.

#include <invdiff/grid.hpp>

#include <utility>
#include <vector>

namespace invdiff {

// Tridiagonal row-scaled form of -(a w')' + q w.  Interior rows use the
// conservative flux stencil with arithmetic half-node means of a; Dirichlet
// rows are identity rows (data moved to the rhs), impedance rows eliminate
// the ghost node of a*dw/dnu + gamma*w = data over a half cell.  `mass`
// holds the trapezoid cell measures, so M*K is symmetric on non-Dirichlet
// rows and (v, w)_M approximates the L2 inner product.
struct EllipticOperator {
    Grid grid;
    std::vector<double> lower, diag, upper;  // K, one entry per node row
    std::vector<double> mass;
    bool dirichlet_left = false;
    bool dirichlet_right = false;
    BoundaryCondition bc_left, bc_right;

    // y = K w
    std::vector<double> apply(const std::vector<double>& w) const;
    // adds the boundary-data contribution at time t to rhs; for a Dirichlet
    // row the contribution is the prescribed value itself (identity row)
    void add_boundary_rhs(double t, std::vector<double>& rhs) const;
};

// Assembles the operator.  Throws if a is not strictly positive or the
// fields live on different grids.
EllipticOperator assemble_operator(const Grid& grid, const SampledField& a,
                                   const SampledField& q,
                                   const BoundaryCondition& bc_left,
                                   const BoundaryCondition& bc_right);

// Centered second-order differences, one-sided second-order at both ends.
SampledField differentiate(const SampledField& field);

// Composite trapezoidal cumulative integral, 0 at the left endpoint.
SampledField integrate_cumulative(const SampledField& field);

// Penalized-second-difference smoother with the smoothing parameter chosen
// by discrepancy bisection: the sup-norm residual against the input is
// driven to noise_level * ||input||_inf within 10% (at most 60 bisection
// steps).  noise_level 0 returns the input unchanged.
SampledField smooth_to_h2(const SampledField& noisy, double noise_level);

// Replaces the values inside each hole [lo, hi] (inclusive node indices) by
// a spline-like fill through the surrounding data; nodes listed in
// pinned_zeros are forced to exactly 0.  Holes must be disjoint, strictly
// interior, and must not cover more than 25% of the nodes.
SampledField excise_and_interpolate(const SampledField& field,
                                    const std::vector<std::pair<int, int>>& holes,
                                    const std::vector<int>& pinned_zeros);

// Thomas algorithm; diag/lower/upper indexed per row (lower[0] and
// upper[n-1] unused).  No pivoting, intended for diagonally dominant
// systems.
std::vector<double> solve_tridiagonal(const std::vector<double>& lower,
                                      const std::vector<double>& diag,
                                      const std::vector<double>& upper,
                                      std::vector<double> rhs);

// (W + lambda * D2' D2) z = W y with nonnegative fidelity weights w; the
// workhorse behind smooth_to_h2 and excise_and_interpolate.
std::vector<double> weighted_whittaker(const std::vector<double>& y,
                                       const std::vector<double>& w,
                                       double lambda);

}  // namespace invdiff
