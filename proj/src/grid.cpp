#include "invdiff/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace invdiff {

namespace {
void require_same_grid(const SampledField& f, const SampledField& g) {
    if (!(f.grid == g.grid)) throw std::invalid_argument("fields live on different grids");
}
} // namespace

double norm_sup(const SampledField& f) {
    double m = 0.0;
    for (double v : f.v) m = std::max(m, std::abs(v));
    return m;
}

double integrate(const SampledField& f) {
    const int n = f.size();
    double s = 0.5 * (f[0] + f[n - 1]);
    for (int i = 1; i < n - 1; ++i) s += f[i];
    return s * f.grid.h();
}

double norm_l2(const SampledField& f) {
    const int n = f.size();
    double s = 0.5 * (f[0] * f[0] + f[n - 1] * f[n - 1]);
    for (int i = 1; i < n - 1; ++i) s += f[i] * f[i];
    return std::sqrt(s * f.grid.h());
}

double dist_sup(const SampledField& f, const SampledField& g) {
    require_same_grid(f, g);
    double m = 0.0;
    for (int i = 0; i < f.size(); ++i) m = std::max(m, std::abs(f[i] - g[i]));
    return m;
}

double dist_l2(const SampledField& f, const SampledField& g) {
    require_same_grid(f, g);
    const int n = f.size();
    auto sq = [&](int i) {
        const double d = f[i] - g[i];
        return d * d;
    };
    double s = 0.5 * (sq(0) + sq(n - 1));
    for (int i = 1; i < n - 1; ++i) s += sq(i);
    return std::sqrt(s * f.grid.h());
}

void write_csv(const SampledField& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    out << "x,value\n";
    char line[80];
    for (int i = 0; i < f.size(); ++i) {
        std::snprintf(line, sizeof(line), "%.17g,%.17g\n", f.grid.x(i), f[i]);
        out << line;
    }
    if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

SampledField read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);
    std::vector<double> xs, vs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("read_csv: malformed line in " + path);
        xs.push_back(std::stod(line.substr(0, comma)));
        vs.push_back(std::stod(line.substr(comma + 1)));
    }
    const int n = static_cast<int>(vs.size());
    if (n < 2) throw std::runtime_error("read_csv: too few rows in " + path);
    Grid g = Grid::uniform(n, xs.back());
    for (int i = 0; i < n; ++i)
        if (std::abs(xs[i] - g.x(i)) > 1e-12 * std::max(1.0, g.length))
            throw std::runtime_error("read_csv: nodes are not uniform in " + path);
    return SampledField(g, std::move(vs));
}

} // namespace invdiff
