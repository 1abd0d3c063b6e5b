#pragma once

namespace invdiff {

/// Parameters of the two-parameter Mittag-Leffler function E_{alpha,beta}.
/// Only alpha in (0,1] and beta in (0,2] are supported.
struct MLParams {
    double alpha = 1.0;
    double beta = 1.0;
};

/// Gamma function (Lanczos-backed), valid for positive non-integer-pole input.
double gamma_fn(double x);

/// 1/Gamma(x) for any real x; exactly 0 at the poles x = 0, -1, -2, ...
double reciprocal_gamma(double x);

/// E_{alpha,beta}(x) for x <= 0.
///
/// Relative error <= 1e-10 on |x| <= 100, absolute error <= 1e-12 beyond.
/// Throws std::domain_error for alpha outside (0,1], beta outside (0,2],
/// or x > 0.
double mittag_leffler(MLParams p, double x);
inline double mittag_leffler(double alpha, double beta, double x) {
    return mittag_leffler(MLParams{alpha, beta}, x);
}

/// Upper bound 1/(1 + x/Gamma(1+alpha)) >= E_{alpha,1}(-x), x >= 0.
double ml_upper_bound(double alpha, double x);

/// Lower bound 1/(1 + Gamma(1-alpha) x) <= E_{alpha,1}(-x), x >= 0.
/// Throws std::domain_error at alpha = 1 (Gamma(0) pole).
double ml_lower_bound(double alpha, double x);

/// Residual of the identity
///   lambda s^{alpha-1} E_{alpha,alpha}(-lambda s^alpha)
///     = -d/ds E_{alpha,1}(-lambda s^alpha)
/// with the derivative replaced by a centered difference of step h.
/// O(h^2) for smooth parameter ranges; used as a self-test.
double ml_derivative_identity_check(double alpha, double lambda, double s, double h);

} // namespace invdiff
