#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace invdiff {

/// Uniform 1D mesh on [0, length].
struct Grid {
    int n_nodes = 0;
    double length = 1.0;

    static Grid uniform(int n_nodes, double length = 1.0) {
        if (n_nodes < 2) throw std::invalid_argument("Grid: need at least 2 nodes");
        if (!(length > 0.0)) throw std::invalid_argument("Grid: length must be positive");
        return Grid{n_nodes, length};
    }

    double h() const { return length / (n_nodes - 1); }
    double x(int i) const { return length * i / (n_nodes - 1); }

    std::vector<double> nodes() const {
        std::vector<double> xs(n_nodes);
        for (int i = 0; i < n_nodes; ++i) xs[i] = x(i);
        return xs;
    }

    bool operator==(const Grid&) const = default;
};

/// Real-valued function sampled at every grid node.
struct SampledField {
    Grid grid;
    std::vector<double> v;

    SampledField() = default;
    SampledField(Grid g, std::vector<double> values) : grid(g), v(std::move(values)) {
        if (static_cast<int>(v.size()) != grid.n_nodes)
            throw std::invalid_argument("SampledField: value count does not match grid");
    }
    SampledField(Grid g, double fill) : grid(g), v(g.n_nodes, fill) {}

    static SampledField sample(Grid g, const std::function<double(double)>& f) {
        std::vector<double> vals(g.n_nodes);
        for (int i = 0; i < g.n_nodes; ++i) vals[i] = f(g.x(i));
        return SampledField(g, std::move(vals));
    }

    int size() const { return grid.n_nodes; }
    double& operator[](int i) { return v[i]; }
    double operator[](int i) const { return v[i]; }
};

/// Sup norm over the nodes.
double norm_sup(const SampledField& f);
/// Trapezoidal L2 norm over the interval.
double norm_l2(const SampledField& f);
/// Trapezoidal integral over the interval.
double integrate(const SampledField& f);
/// max_i |f_i - g_i| (fields must share the grid).
double dist_sup(const SampledField& f, const SampledField& g);
/// Trapezoidal L2 distance.
double dist_l2(const SampledField& f, const SampledField& g);

/// Boundary condition a du/dnu + gamma u = data(t) (nu outward), or Dirichlet
/// u = data(t). Homogeneous Neumann is impedance with gamma = 0, data = 0.
enum class BcKind { dirichlet, impedance };

struct BoundaryCondition {
    BcKind kind = BcKind::dirichlet;
    double gamma = 0.0;
    std::function<double(double)> data = [](double) { return 0.0; };

    static BoundaryCondition dirichlet(double value) {
        return {BcKind::dirichlet, 0.0, [value](double) { return value; }};
    }
    static BoundaryCondition dirichlet(std::function<double(double)> data) {
        return {BcKind::dirichlet, 0.0, std::move(data)};
    }
    static BoundaryCondition impedance(double gamma, double value) {
        if (gamma < 0.0) throw std::invalid_argument("BoundaryCondition: gamma must be >= 0");
        return {BcKind::impedance, gamma, [value](double) { return value; }};
    }
    static BoundaryCondition neumann(double flux) { return impedance(0.0, flux); }

    bool homogeneous_at(double t) const { return data(t) == 0.0; }
};

/// Two-column CSV serialization, "x,value" header, 17 significant digits.
void write_csv(const SampledField& f, const std::string& path);
SampledField read_csv(const std::string& path);

} // namespace invdiff
