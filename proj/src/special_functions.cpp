#include "invdiff/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/cos_pi.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/sin_pi.hpp>

namespace invdiff {

double gamma_fn(double x) {
    if (x <= 0.0 && x == std::floor(x))
        throw std::domain_error("gamma_fn: pole at non-positive integer");
    return boost::math::tgamma(x);
}

double reciprocal_gamma(double x) {
    if (x <= 0.0 && x == std::floor(x)) return 0.0;
    int sign = 1;
    const double lg = boost::math::lgamma(x, &sign);
    if (lg > 700.0) return 0.0; // underflow of 1/Gamma
    return sign * std::exp(-lg);
}

namespace {

// Defining power series with compensated summation. Terms are bounded by
// ~1.13 on t <= 1, so there is no destructive cancellation there.
double ml_taylor(double a, double b, double t) {
    double sum = 0.0, comp = 0.0;
    double tk = 1.0; // (-t)^k
    int tiny_run = 0;
    for (int k = 0; k < 4000; ++k) {
        const double term = tk * reciprocal_gamma(a * k + b);
        const double y = term - comp;
        const double s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        tk *= -t;
        if (std::abs(term) <= 1e-17 * std::max(std::abs(sum), 1e-290)) {
            if (++tiny_run >= 3) break;
        } else {
            tiny_run = 0;
        }
    }
    return sum;
}

// alpha = 1 family via the Kummer transform M(1,b,z) = e^z M(b-1,b,-z):
//   E_{1,b}(-t) = e^{-t}/Gamma(b) * sum_k (b-1)/(b-1+k) t^k/k!
// The summand changes sign at most once, so there is no destructive
// cancellation. Large t switches to the algebraic asymptotic tail
// sum_k (-1)^{k+1} t^{-k}/Gamma(b-k), truncated at the smallest term
// (error ~ e^{-t}).
double ml_alpha1(double b, double t) {
    if (b == 1.0) return std::exp(-t);
    if (b == 2.0) return -std::expm1(-t) / t;
    if (t <= 50.0) {
        double sum = 0.0, comp = 0.0;
        double tk = 1.0; // t^k / k!
        for (int k = 0; k < 400; ++k) {
            if (k > 0) tk *= t / k;
            const double term = (b - 1.0) / (b - 1.0 + k) * tk;
            const double y = term - comp;
            const double s = sum + y;
            comp = (s - sum) - y;
            sum = s;
            if (k > t && std::abs(term) <= 1e-17 * std::abs(sum)) break;
        }
        return std::exp(-t) * reciprocal_gamma(b) * sum;
    }
    double sum = 0.0, comp = 0.0, tk = 1.0, prev = HUGE_VAL;
    for (int k = 1; k <= 30; ++k) {
        tk /= t;
        const double term = (k % 2 ? tk : -tk) * reciprocal_gamma(b - k);
        if (std::abs(term) >= prev) break;
        prev = std::abs(term);
        const double y = term - comp;
        const double s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    return sum;
}

// Real-axis integral representation (Gorenflo-Loutchko-Luchko) in
// v = r^{1/alpha} coordinates, valid for 0 < a < 1, b <= 1 + a/2, t > 0:
//   E_{a,b}(-t) = (1/pi) int_0^inf v^{a-b} e^{-v}
//                 [v^a sin(pi(1-b)) + t sin(pi(1-b+a))]
//                 / (v^{2a} + 2 v^a t cos(pi a) + t^2) dv.
// For a > 1/2 the denominator dips to t^2 sin^2(pi a) near
// v* = (t|cos(pi a)|)^{1/a}; panels are split there so the tanh_sinh nodes
// cluster into the peak. The left panel is desingularized by v = y^m since
// v^{a-b} approaches v^{-1} as a -> 0.
double ml_gll_integral(double a, double b, double t) {
    const double s1 = boost::math::sin_pi(1.0 - b);
    const double s2 = boost::math::sin_pi(1.0 - b + a);
    const double c = boost::math::cos_pi(a);

    auto f = [&](double v) -> double {
        if (v <= 0.0) return 0.0;
        const double va = std::pow(v, a);
        const double den = va * va + 2.0 * va * t * c + t * t;
        return std::pow(v, a - b) * std::exp(-v) * (va * s1 + t * s2) / den;
    };

    const double vmax = 60.0;
    std::vector<double> pts{0.0, 0.5, 2.0, 10.0, vmax};
    if (c < 0.0) {
        const double vstar = std::pow(-t * c, 1.0 / a);
        if (vstar < vmax) {
            const double w = t * boost::math::sin_pi(a) / (a * std::pow(vstar, a - 1.0));
            pts.push_back(std::max(vstar - 8.0 * w, 0.0));
            pts.push_back(vstar);
            pts.push_back(std::min(vstar + 8.0 * w, vmax));
            std::sort(pts.begin(), pts.end());
            pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        }
    }

    boost::math::quadrature::tanh_sinh<double> quad(15);
    double total = 0.0;

    // left panel [0, pts[1]] under v = y^m, m chosen so the y-exponent is mild
    {
        const double p1 = pts[1];
        const double expo = 1.0 + a - b; // in (0, 1]
        const int m = std::max(1, static_cast<int>(std::ceil(1.5 / expo)));
        auto g = [&](double y) -> double {
            if (y <= 0.0) return 0.0;
            const double v = std::pow(y, m);
            if (v <= 0.0) return 0.0;
            const double va = std::pow(v, a);
            const double den = va * va + 2.0 * va * t * c + t * t;
            return m * std::pow(y, m * expo - 1.0) * std::exp(-v) * (va * s1 + t * s2) / den;
        };
        total += quad.integrate(g, 0.0, std::pow(p1, 1.0 / m), 1e-13);
    }
    for (std::size_t i = 1; i + 1 < pts.size(); ++i)
        if (pts[i + 1] > pts[i]) total += quad.integrate(f, pts[i], pts[i + 1], 1e-13);

    return total / M_PI;
}

// t >= 0 dispatcher on E_{a,b}(-t).
double ml_neg(double a, double b, double t) {
    if (t == 0.0) return reciprocal_gamma(b);
    if (a == 1.0) return ml_alpha1(b, t);
    if (t <= 1.0) return ml_taylor(a, b, t);
    if (b > 1.0 + 0.5 * a) // step beta down; keeps the integral representation valid
        return (reciprocal_gamma(b - a) - ml_neg(a, b - a, t)) / t;
    return ml_gll_integral(a, b, t);
}

void check_params(double alpha, double beta) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw std::domain_error("mittag_leffler: alpha must lie in (0,1]");
    if (!(beta > 0.0) || beta > 2.0)
        throw std::domain_error("mittag_leffler: beta must lie in (0,2]");
}

} // namespace

double mittag_leffler(MLParams p, double x) {
    check_params(p.alpha, p.beta);
    if (x > 0.0) throw std::domain_error("mittag_leffler: only x <= 0 is supported");
    return ml_neg(p.alpha, p.beta, -x);
}

double ml_upper_bound(double alpha, double x) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw std::domain_error("ml_upper_bound: alpha must lie in (0,1]");
    if (x < 0.0) throw std::domain_error("ml_upper_bound: x must be >= 0");
    return 1.0 / (1.0 + x * reciprocal_gamma(1.0 + alpha));
}

double ml_lower_bound(double alpha, double x) {
    if (!(alpha > 0.0) || alpha >= 1.0)
        throw std::domain_error("ml_lower_bound: alpha must lie in (0,1)");
    if (x < 0.0) throw std::domain_error("ml_lower_bound: x must be >= 0");
    return 1.0 / (1.0 + gamma_fn(1.0 - alpha) * x);
}

double ml_derivative_identity_check(double alpha, double lambda, double s, double h) {
    if (!(s - h > 0.0)) throw std::invalid_argument("ml_derivative_identity_check: need s - h > 0");
    auto e1 = [&](double u) { return mittag_leffler(alpha, 1.0, -lambda * std::pow(u, alpha)); };
    const double lhs =
        lambda * std::pow(s, alpha - 1.0) * mittag_leffler(alpha, alpha, -lambda * std::pow(s, alpha));
    const double centered = (e1(s + h) - e1(s - h)) / (2.0 * h);
    return std::abs(lhs + centered);
}

} // namespace invdiff
