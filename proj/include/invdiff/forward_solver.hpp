#pragma once

// Time stepping for D^alpha_t u - (a u')' + q f(u) = r: implicit Euler and
// Crank-Nicolson at alpha = 1, the L1 Caputo scheme for alpha in (0,1), a
// spectral oracle for the homogeneous linear case, and the extraction of
// D^alpha_t u(.,T) that feeds the inversion right-hand sides.

#include <invdiff/grid.hpp>

#include <functional>
#include <string>
#include <vector>

namespace invdiff {

struct ProblemSpec {
    double alpha = 1.0;  // Caputo order, (0, 1]
    double T = 0.5;
    Grid grid;
    SampledField a, q, u0;
    BoundaryCondition bc_left, bc_right;
    // forcing r(x, t, u); the u argument is evaluated at the previous state
    std::function<double(double, double, double)> forcing =
        [](double, double, double) { return 0.0; };
    std::function<double(double)> reaction = [](double u) { return u; };
    // when true the q f(u) term is linear and folded into the operator;
    // otherwise it is lagged with fixed-point correction sweeps per step
    bool reaction_is_identity = true;
};

struct SolutionHistory {
    std::vector<double> times;          // 0 = t_0 < ... < t_M = T
    std::vector<SampledField> states;   // states[0] == u0
    SampledField caputo_at_T;           // D^alpha_t u(.,T), PDE-residual route
    double caputo_discrepancy = 0.0;    // sup gap against the direct L1 sum
    std::vector<std::string> warnings;
};

enum class TimeScheme { auto_select, implicit_euler, crank_nicolson, l1 };

// Marches the problem to T with uniform steps.  auto_select takes implicit
// Euler at alpha = 1 and the L1 scheme otherwise; Crank-Nicolson is only
// valid at alpha = 1 (cross-check path).  Throws on nonlinear divergence
// with the offending step in the message.
SolutionHistory solve_forward(const ProblemSpec& spec, int n_steps,
                              TimeScheme scheme = TimeScheme::auto_select);

// Truncated eigenfunction expansion sum_n <u0,phi_n> E_{alpha,1}(-lambda_n
// t^alpha) phi_n for the homogeneous self-adjoint case.  Refuses
// inhomogeneous boundary data, nonzero forcing, or nonlinear reaction.
SolutionHistory spectral_solution(const ProblemSpec& spec, int n_modes);

// D^alpha_t u(.,T) via the PDE residual (a u')' - q f(u) + r at the final
// state; Dirichlet rows fall back to the direct L1 sum.  If discrepancy is
// non-null it receives the sup gap between the two routes over the
// non-Dirichlet rows.
SampledField caputo_at_final(const SolutionHistory& history, const ProblemSpec& spec,
                             double* discrepancy = nullptr);

}  // namespace invdiff
