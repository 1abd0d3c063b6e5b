#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <invdiff/discretization.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <vector>

#include "eig_oracle_data.hpp"

using namespace invdiff;

namespace {

double a_act(double x) { return 1.0 + 4.0 * x * x * (1.0 - x) + 0.5 * std::sin(4.0 * M_PI * x); }
double a_act_prime(double x) {
    return 8.0 * x - 12.0 * x * x + 2.0 * M_PI * std::cos(4.0 * M_PI * x);
}
double q_act(double x) { return 8.0 * x * std::exp(-3.0 * x); }

// portable uniform draws in [-1, 1)
std::vector<double> seeded_noise(int n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<double> u(n);
    for (auto& x : u) x = 2.0 * ((gen() >> 11) * 0x1.0p-53) - 1.0;
    return u;
}

// lowest Dirichlet-Dirichlet eigenvalues of the assembled operator
std::vector<double> interior_eigenvalues(const EllipticOperator& op, int k) {
    const int m = op.grid.n_nodes - 2;
    Eigen::VectorXd dv(m), ev(m - 1);
    for (int i = 0; i < m; ++i) dv(i) = op.diag[i + 1];
    for (int i = 0; i + 1 < m; ++i) ev(i) = op.upper[i + 1];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(dv, ev, Eigen::EigenvaluesOnly);
    std::vector<double> out(k);
    for (int i = 0; i < k; ++i) out[i] = es.eigenvalues()(i);
    return out;
}

}  // namespace

TEST_CASE("laplacian eigenvalues on the unit interval") {
    const Grid g = Grid::uniform(129);
    const auto op = assemble_operator(g, SampledField(g, 1.0), SampledField(g, 0.0),
                                      BoundaryCondition::dirichlet(0.0),
                                      BoundaryCondition::dirichlet(0.0));
    const auto lam = interior_eigenvalues(op, 5);
    const double h = g.h();
    for (int n = 1; n <= 5; ++n) {
        const double exact = n * n * M_PI * M_PI;
        const double err = exact - lam[n - 1];
        CHECK(err > 0.0);
        CHECK(err <= std::pow(n * M_PI, 4) * h * h / 12.0);
    }
}

TEST_CASE("operator is linear in a on interior rows") {
    const Grid g = Grid::uniform(65);
    const auto one = assemble_operator(g, SampledField(g, 1.0), SampledField(g, 0.0),
                                       BoundaryCondition::dirichlet(0.0),
                                       BoundaryCondition::dirichlet(0.0));
    const auto three = assemble_operator(g, SampledField(g, 3.0), SampledField(g, 0.0),
                                         BoundaryCondition::dirichlet(0.0),
                                         BoundaryCondition::dirichlet(0.0));
    for (int i = 1; i < g.n_nodes - 1; ++i) {
        CHECK(three.diag[i] == doctest::Approx(3.0 * one.diag[i]).epsilon(1e-14));
        CHECK(three.lower[i] == doctest::Approx(3.0 * one.lower[i]).epsilon(1e-14));
        CHECK(three.upper[i] == doctest::Approx(3.0 * one.upper[i]).epsilon(1e-14));
        // row sums of the a-part vanish
        CHECK(one.lower[i] + one.diag[i] + one.upper[i] == doctest::Approx(0.0).epsilon(1e-10));
    }
}

TEST_CASE("smallest eigenvalue for the benchmark coefficients") {
    for (auto [n, expected] :
         {std::pair<int, double>{2049, eig_oracle::act_dirichlet_n2049[0]},
          std::pair<int, double>{513, eig_oracle::act_dirichlet_n513[0]}}) {
        const Grid g = Grid::uniform(n);
        const auto op = assemble_operator(g, SampledField::sample(g, a_act),
                                          SampledField::sample(g, q_act),
                                          BoundaryCondition::dirichlet(0.0),
                                          BoundaryCondition::dirichlet(0.0));
        const auto lam = interior_eigenvalues(op, 1);
        CHECK(lam[0] == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("apply reproduces the discrete laplacian eigenpairs") {
    const Grid g = Grid::uniform(129);
    const double h = g.h();
    const auto op = assemble_operator(g, SampledField(g, 1.0), SampledField(g, 0.0),
                                      BoundaryCondition::dirichlet(0.0),
                                      BoundaryCondition::dirichlet(0.0));
    for (int n = 1; n <= 5; ++n) {
        const auto u = SampledField::sample(g, [n](double x) { return std::sin(n * M_PI * x); });
        const auto y = op.apply(u.v);
        const double bound = std::pow(n * M_PI, 4) * h * h / 12.0;
        for (int i = 1; i < g.n_nodes - 1; ++i) {
            CHECK(std::fabs(y[i] - n * n * M_PI * M_PI * u[i]) <= bound * 1.0001);
        }
    }
}

TEST_CASE("assemble_operator input validation") {
    const Grid g = Grid::uniform(33);
    const Grid g2 = Grid::uniform(65);
    auto bc = BoundaryCondition::dirichlet(0.0);
    CHECK_THROWS_AS(assemble_operator(g, SampledField(g, 0.0), SampledField(g, 0.0), bc, bc),
                    std::invalid_argument);
    CHECK_THROWS_AS(assemble_operator(g, SampledField(g, -1.0), SampledField(g, 0.0), bc, bc),
                    std::invalid_argument);
    CHECK_THROWS_AS(assemble_operator(g, SampledField(g2, 1.0), SampledField(g, 0.0), bc, bc),
                    std::invalid_argument);
}

TEST_CASE("impedance rows solve a manufactured steady problem to O(h^2)") {
    // u = sin(pi x / 2) + 1, a = 1 + x, q = 1, impedance with gamma = 2 on
    // both ends; nu is outward so the left flux is -a u'.
    auto exact = [](double x) { return std::sin(0.5 * M_PI * x) + 1.0; };
    auto run = [&](int n) {
        const Grid g = Grid::uniform(n);
        const auto a = SampledField::sample(g, [](double x) { return 1.0 + x; });
        const auto q = SampledField(g, 1.0);
        const double gamma = 2.0;
        const double left = -1.0 * 0.5 * M_PI + gamma * 1.0;
        const double right = 0.0 + gamma * 2.0;
        const auto op = assemble_operator(g, a, q, BoundaryCondition::impedance(gamma, left),
                                          BoundaryCondition::impedance(gamma, right));
        std::vector<double> rhs(n);
        for (int i = 0; i < n; ++i) {
            const double x = g.x(i);
            const double c = std::cos(0.5 * M_PI * x), s = std::sin(0.5 * M_PI * x);
            rhs[i] = -(0.5 * M_PI * c - (1.0 + x) * 0.25 * M_PI * M_PI * s) + (s + 1.0);
        }
        op.add_boundary_rhs(0.0, rhs);
        const auto u = solve_tridiagonal(op.lower, op.diag, op.upper, rhs);
        double err = 0.0;
        for (int i = 0; i < n; ++i) err = std::max(err, std::fabs(u[i] - exact(g.x(i))));
        return err;
    };
    const double e1 = run(129), e2 = run(257);
    CHECK(e1 <= 2e-4);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("differentiate is exact on quadratics") {
    const Grid g = Grid::uniform(65);
    const auto d = differentiate(SampledField::sample(g, [](double x) { return x * x; }));
    for (int i = 0; i < g.n_nodes; ++i)
        CHECK(std::fabs(d[i] - 2.0 * g.x(i)) <= 1e-12);
}

TEST_CASE("differentiate error bound on sin(pi x)") {
    const Grid g = Grid::uniform(257);
    const double h = g.h();
    const auto d = differentiate(SampledField::sample(g, [](double x) { return std::sin(M_PI * x); }));
    for (int i = 0; i < g.n_nodes; ++i)
        CHECK(std::fabs(d[i] - M_PI * std::cos(M_PI * g.x(i))) <=
              M_PI * M_PI * M_PI * h * h / 6.0);
}

TEST_CASE("differentiate matches the analytic derivative of the benchmark a") {
    const double e1 = [&] {
        const Grid g = Grid::uniform(257);
        const auto d = differentiate(SampledField::sample(g, a_act));
        return dist_sup(d, SampledField::sample(g, a_act_prime));
    }();
    const double e2 = [&] {
        const Grid g = Grid::uniform(513);
        const auto d = differentiate(SampledField::sample(g, a_act));
        return dist_sup(d, SampledField::sample(g, a_act_prime));
    }();
    CHECK(e1 <= 1e-2);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("integrate_cumulative basics") {
    const Grid g = Grid::uniform(257);
    const auto one = integrate_cumulative(SampledField(g, 1.0));
    for (int i = 0; i < g.n_nodes; ++i) CHECK(one[i] == doctest::Approx(g.x(i)).epsilon(1e-14));
    CHECK(one[0] == 0.0);

    const auto s = integrate_cumulative(
        SampledField::sample(g, [](double x) { return std::cos(M_PI * x); }));
    const double h = g.h();
    for (int i = 0; i < g.n_nodes; ++i)
        CHECK(std::fabs(s[i] - std::sin(M_PI * g.x(i)) / M_PI) <= h * h);
}

TEST_CASE("differentiate after integrate_cumulative is the identity up to O(h^2)") {
    const Grid g = Grid::uniform(257);
    const auto f = SampledField::sample(g, [](double x) { return std::exp(x) * std::sin(2.0 * x); });
    const auto back = differentiate(integrate_cumulative(f));
    CHECK(dist_sup(back, f) <= 1e-3);
}

TEST_CASE("weighted_whittaker agrees with a dense solve") {
    const int n = 40;
    auto y = seeded_noise(n, 7);
    std::vector<double> w(n, 1.0);
    w[10] = 0.0;
    w[11] = 0.0;
    w[25] = 1e6;
    const double lambda = 0.37;

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) A(i, i) = w[i];
    for (int k = 0; k + 2 < n; ++k) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        row(k) = 1.0;
        row(k + 1) = -2.0;
        row(k + 2) = 1.0;
        A += lambda * row * row.transpose();
    }
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) b(i) = w[i] * y[i];
    const Eigen::VectorXd z = A.ldlt().solve(b);

    const auto zb = weighted_whittaker(y, w, lambda);
    for (int i = 0; i < n; ++i) CHECK(zb[i] == doctest::Approx(z(i)).epsilon(1e-9));
}

TEST_CASE("smooth_to_h2 with zero noise level is the identity") {
    const Grid g = Grid::uniform(65);
    const auto f = SampledField::sample(g, [](double x) { return std::sin(3.0 * x); });
    const auto s = smooth_to_h2(f, 0.0);
    CHECK(s.v == f.v);
}

TEST_CASE("smooth_to_h2 recovers sin(pi x) from 1% noise") {
    const Grid g = Grid::uniform(513);
    const auto noise = seeded_noise(g.n_nodes, 42);
    std::vector<double> vals(g.n_nodes);
    for (int i = 0; i < g.n_nodes; ++i) vals[i] = std::sin(M_PI * g.x(i)) + 0.01 * noise[i];
    const SampledField noisy(g, vals);
    const double delta = 0.01;

    const auto s = smooth_to_h2(noisy, delta);
    double err = 0.0, res = 0.0;
    for (int i = 0; i < g.n_nodes; ++i) {
        err = std::max(err, std::fabs(s[i] - std::sin(M_PI * g.x(i))));
        res = std::max(res, std::fabs(s[i] - noisy[i]));
    }
    CHECK(err <= 0.02);
    // discrepancy principle: the residual tracks delta * ||noisy||_inf
    const double target = delta * norm_sup(noisy);
    CHECK(res >= 0.9 * target);
    CHECK(res <= 1.1 * target);
}

TEST_CASE("smooth_to_h2 flattens a noisy constant") {
    const Grid g = Grid::uniform(257);
    const auto noise = seeded_noise(g.n_nodes, 3);
    std::vector<double> vals(g.n_nodes);
    for (int i = 0; i < g.n_nodes; ++i) vals[i] = 2.0 + 0.01 * noise[i];
    const auto s = smooth_to_h2(SampledField(g, vals), 0.005);
    for (int i = 0; i < g.n_nodes; ++i) CHECK(std::fabs(s[i] - 2.0) <= 0.01);
}

TEST_CASE("excise_and_interpolate without holes is the identity") {
    const Grid g = Grid::uniform(65);
    const auto f = SampledField::sample(g, [](double x) { return std::cos(x); });
    const auto out = excise_and_interpolate(f, {}, {});
    CHECK(out.v == f.v);
}

TEST_CASE("excise_and_interpolate refills a hole in x(1-x)") {
    const Grid g = Grid::uniform(513);
    const auto f = SampledField::sample(g, [](double x) { return x * (1.0 - x); });
    const auto out = excise_and_interpolate(f, {{254, 258}}, {});
    for (int i = 0; i < g.n_nodes; ++i) {
        if (i < 254 || i > 258) CHECK(out[i] == f[i]);
        else CHECK(std::fabs(out[i] - f[i]) <= 1e-3);
    }
}

TEST_CASE("excise_and_interpolate pins zeros and stays continuous") {
    const Grid g = Grid::uniform(513);
    const auto f = SampledField::sample(g, [](double x) { return x - 0.17; });
    const int pin = 87;  // node nearest the sign change
    const auto out = excise_and_interpolate(f, {{80, 94}}, {pin});
    CHECK(out[pin] == 0.0);
    for (int i = 1; i < g.n_nodes; ++i) CHECK(std::fabs(out[i] - out[i - 1]) <= 0.05);
}

TEST_CASE("excise_and_interpolate input validation") {
    const Grid g = Grid::uniform(65);
    const auto f = SampledField(g, 1.0);
    CHECK_THROWS_AS(excise_and_interpolate(f, {{0, 4}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(excise_and_interpolate(f, {{60, 64}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(excise_and_interpolate(f, {{5, 10}, {8, 12}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(excise_and_interpolate(f, {{5, 30}}, {}), std::invalid_argument);
}

TEST_CASE("solve_tridiagonal round trip through the operator") {
    const Grid g = Grid::uniform(257);
    const auto op = assemble_operator(g, SampledField::sample(g, a_act),
                                      SampledField::sample(g, q_act),
                                      BoundaryCondition::dirichlet(1.0),
                                      BoundaryCondition::neumann(1.0));
    const auto w = SampledField::sample(g, [](double x) { return std::sin(3.0 * x) + 2.0; });
    const auto y = op.apply(w.v);
    const auto back = solve_tridiagonal(op.lower, op.diag, op.upper, y);
    for (int i = 0; i < g.n_nodes; ++i) CHECK(back[i] == doctest::Approx(w[i]).epsilon(1e-10));
}

TEST_CASE("sampled field csv round trip") {
    const Grid g = Grid::uniform(65);
    const auto f = SampledField::sample(g, [](double x) { return std::sin(7.1 * x) / 3.0; });
    const std::string path = "test_roundtrip_field.csv";
    write_csv(f, path);
    const auto back = read_csv(path);
    CHECK(back.grid == f.grid);
    CHECK(back.v == f.v);
    std::remove(path.c_str());
}

TEST_CASE("norms on simple fields") {
    const Grid g = Grid::uniform(1001);
    const auto f = SampledField::sample(g, [](double x) { return std::sin(M_PI * x); });
    CHECK(norm_sup(f) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(norm_l2(f) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-5));
    CHECK(integrate(f) == doctest::Approx(2.0 / M_PI).epsilon(1e-5));
}
