#pragma once

// Fixed-point recovery of the coefficients (a, q) from final-time
// observations of two experiments: a parallel update in a Gaussian RBF
// basis, two sequential schemes that eliminate one coefficient through the
// Wronskian-like field W = g_v g_u' - g_u g_v', and a potential-only
// update for known a.  Also the discrepancy stopping rule, the Phi(T)
// convolution diagnostic and empirical contraction factors.

#include <invdiff/forward_solver.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace invdiff {

// Final-time data of the two experiments.  The filtered copies are what the
// reconstruction differentiates; they equal the raw fields at noise level 0
// and are smooth_to_h2 output otherwise.
struct ObservationSet {
    SampledField g_u, g_v;
    SampledField g_u_filtered, g_v_filtered;
    double noise_level = 0.0;
};

// Adds per-node uniform noise on [-delta, delta], scaled by ||g||_inf, to
// each field (u drawn at seed, v at seed + 1) and filters.  delta = 0
// leaves the fields untouched.
ObservationSet make_observations(const SampledField& g_u, const SampledField& g_v,
                                 double delta, std::uint64_t seed);

// Shifted Gaussians b_j(x) = exp(-(x - x_j)^2 / width) with values and
// first derivatives tabulated on the grid (row-major, node * n_basis + j).
struct RbfBasis {
    std::vector<double> centers;
    double width = 0.0;
    int n_nodes = 0;
    int n_basis = 0;
    std::vector<double> values, derivs;

    double value(int node, int j) const { return values[static_cast<size_t>(node) * n_basis + j]; }
    double deriv(int node, int j) const { return derivs[static_cast<size_t>(node) * n_basis + j]; }
    // evaluates sum_j c_j b_j on the grid
    SampledField expand(const Grid& grid, const std::vector<double>& coeff) const;
};

// Centers uniform over the grid span.  width <= 0 picks the default
// (2 * center spacing)^2.  Requires 1 <= n_centers <= n_nodes / 4.
RbfBasis make_rbf_basis(const Grid& grid, int n_centers, double width = 0.0);

// Constraint set for the diffusion coefficient: lower bound, pinned
// boundary value, and (for diagnostics) the reference potential and radius
// of the triple-norm ball.
struct AdmissibleSet {
    double a_lower = 0.5;
    double a_pin = 1.0;
    bool pin_at_left = true;
    double q_reference = 0.0;
    double radius = 1e6;

    // clips a at a_lower, then writes the pinned boundary value
    void project(SampledField& a) const;
    bool contains(const SampledField& a, const SampledField& q) const;
};

struct IterationRecord {
    int iter = 0;
    double residual = 0.0;
    // vs the configured truth; NaN when no truth is supplied
    double err_a_sup = 0.0, err_q_sup = 0.0, err_a_l2 = 0.0, err_q_l2 = 0.0;
};

struct ReconstructionState {
    int k = 0;
    SampledField a, q;
    double residual = 0.0;
    std::vector<IterationRecord> history;
    std::vector<std::string> notes;
    // singular-value spectra of the last parallel step's single-experiment
    // component matrices A_1 and Q_1 (u-data rows)
    std::vector<double> sv_a_block, sv_q_block;
};

enum class InversionScheme { parallel, eliminate_q, eliminate_a, potential_only };

struct InversionConfig {
    // the a and q fields inside the specs are replaced by the iterate; the
    // rest (initial values, boundary data, forcing, alpha, T) is fixed.
    // potential_only uses spec_u only and keeps its a field.
    ProblemSpec spec_u, spec_v;
    int n_steps = 256;
    TimeScheme time_scheme = TimeScheme::auto_select;
    ObservationSet observations;
    SampledField a_start, q_start;  // empty: a = 1, q = 0
    AdmissibleSet admissible;
    RbfBasis basis;                 // empty: 41 centers, default width
    double tau = 1.1;
    int k_max = 20;
    // absolute floor of the stopping tolerance, relative to ||g||_2; keeps
    // noise-free runs from spinning at the discretization floor
    double atol_rel = 1e-4;
    int excision_half_width = 3;
    double potential_floor = 0.05;
    bool truth_known = false;
    SampledField a_truth, q_truth;
};

// Both forward solves at one iterate, with the forcing sampled at t = T.
struct ForwardOutputs {
    SolutionHistory u, v;
    SampledField r_u_T, r_v_T;
};

ForwardOutputs solve_pair(const InversionConfig& config, const SampledField& a,
                          const SampledField& q);

// W = g_v g_u' - g_u g_v'
SampledField compute_W(const SampledField& g_u, const SampledField& g_v);

// Right-hand sides of the two elimination identities,
//   (a W)' = phi = g_v D^alpha_t u(T) - g_u D^alpha_t v(T) - g_v r_u + g_u r_v,
//   q W    = a (g_u' g_v'' - g_v' g_u'') + psi,
//   psi    = g_u' F_v - g_v' F_u,  F_e = r_e(T) - D^alpha_t e(T),
// built from the filtered data and the residual-route Caputo fields.
struct RhsFields {
    SampledField phi, psi;
};
RhsFields rhs_fields(const ObservationSet& obs, const ForwardOutputs& fwd);

// One sweep of each scheme.  All three return the projected next iterate
// with conditioning notes appended; the forward outputs must belong to the
// state passed in.
ReconstructionState step_eliminate_q(const ReconstructionState& state,
                                     const ObservationSet& obs, const ForwardOutputs& fwd,
                                     const InversionConfig& config);
ReconstructionState step_eliminate_a(const ReconstructionState& state,
                                     const ObservationSet& obs, const ForwardOutputs& fwd,
                                     const InversionConfig& config);
ReconstructionState step_parallel(const ReconstructionState& state, const ObservationSet& obs,
                                  const ForwardOutputs& fwd, const InversionConfig& config);

// q+ = (r(T) - D^alpha_t u(T) + (a g')')/f(g) with a = spec.a known and
// fixed; the spec also supplies the boundary rows, the forcing at t = T, and
// the reaction.  Throws when min |f(g)| < floor_cg.
SampledField step_potential_only(const ProblemSpec& spec, const SampledField& g_filtered,
                                 const SampledField& caputo_T, double floor_cg);

// Iterates the selected scheme from the configured start and stops on the
// discrepancy rule: both data misfits below max(tau * delta, atol_rel) *
// ||g||_2, or k_max sweeps.  Residual increasing three times in a row is
// flagged in the notes, not fatal.
ReconstructionState run_scheme(InversionScheme scheme, const InversionConfig& config);

// |||(a, q)||| = ||a'||_2 + ||a||_inf + ||q||_2
double triple_norm(const SampledField& a, const SampledField& q);

// int_0^T s^{alpha-1} E_{alpha,alpha}(-lam s^alpha) E_{alpha,1}(-mu (T-s)^alpha) ds,
// split at T/2 with endpoint-graded quadrature on both panels.
double ml_convolution_integral(double alpha, double lam, double mu, double T,
                               int levels = 10);

// Phi(T): max of max{1, mu} * ml_convolution_integral over a log-spaced
// (lam, mu) lattice from (lambda1, mu1) up to 1e6.
double phi_of_T(double alpha, double lambda1, double mu1, double T, int levels = 10);

// Empirical Lipschitz constant of one scheme sweep in the triple norm:
// max over probe pairs of |||T(a1,q1) - T(a2,q2)||| / |||(a1,q1)-(a2,q2)|||.
// Identical pairs are skipped; data in the config should be noise-free.
struct ProbePair {
    SampledField a1, q1, a2, q2;
};
double contraction_factor(InversionScheme scheme, const InversionConfig& config,
                          const std::vector<ProbePair>& probes);

}  // namespace invdiff
