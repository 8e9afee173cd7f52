#include "ttx/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ttx::models {

double hilbert_matrix(Index i, Index j) noexcept { return 1.0 / static_cast<double>(i + j + 1); }

double hilbert_tensor(std::span<const Index> idx) noexcept {
    Index s = 1 - static_cast<Index>(idx.size());
    for (Index i : idx)
        s += i + 1;
    return 1.0 / static_cast<double>(s);
}

std::string axis_name(Axis a) {
    switch (a) {
    case Axis::x: return "x";
    case Axis::vx: return "vx";
    case Axis::y: return "y";
    case Axis::vy: return "vy";
    case Axis::z: return "z";
    case Axis::vz: return "vz";
    }
    return "?";
}

std::vector<Axis> parse_ordering(const std::string& text) {
    std::vector<Axis> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok.erase(std::remove_if(tok.begin(), tok.end(), [](char c) { return c == ' ' || c == '_'; }), tok.end());
        if (tok == "x") out.push_back(Axis::x);
        else if (tok == "vx") out.push_back(Axis::vx);
        else if (tok == "y") out.push_back(Axis::y);
        else if (tok == "vy") out.push_back(Axis::vy);
        else if (tok == "z") out.push_back(Axis::z);
        else if (tok == "vz") out.push_back(Axis::vz);
        else throw ConfigError("unknown axis '" + tok + "' in ordering");
    }
    return out;
}

void MaxwellianConfig::validate() const {
    const std::size_t d = ordering.size();
    if (d != 4 && d != 6)
        throw ConfigError("Maxwellian ordering must list 4 (2d2v) or 6 (3d3v) axes");
    if (sizes.size() != d)
        throw ConfigError("Maxwellian sizes must match the ordering length");
    std::vector<Axis> need = {Axis::x, Axis::vx, Axis::y, Axis::vy};
    if (d == 6) {
        need.push_back(Axis::z);
        need.push_back(Axis::vz);
    }
    for (Axis a : need)
        if (std::count(ordering.begin(), ordering.end(), a) != 1)
            throw ConfigError("Maxwellian ordering is not a permutation of the axes");
    for (Index n : sizes)
        if (n < 1)
            throw ConfigError("Maxwellian grid sizes must be >= 1");
}

MaxwellianConfig MaxwellianConfig::standard_2d2v(Index n) {
    return {{Axis::x, Axis::vx, Axis::y, Axis::vy}, {2 * n, n, 2 * n, n}};
}

MaxwellianConfig MaxwellianConfig::standard_3d3v(Index n) {
    return {{Axis::x, Axis::vx, Axis::y, Axis::vy, Axis::z, Axis::vz}, {2 * n, n, 2 * n, n, 2 * n, n}};
}

double density(double w) noexcept { return 1.0 + 0.875 * std::sin(2.0 * std::numbers::pi * w); }
double temperature(double w) noexcept { return 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * w); }

double grid_point(double a, double b, Index count, Index i) noexcept {
    if (count <= 1)
        return 0.5 * (a + b);
    return a + static_cast<double>(i) * (b - a) / static_cast<double>(count - 1);
}

namespace {

double spatial_term(double w) {
    const double t = temperature(w);
    if (!(t > 0.0))
        throw ArgumentError("non-positive temperature");
    return density(w) / std::sqrt(2.0 * std::numbers::pi * t);
}

double b_term(double v, double shift, double w) {
    const double t = temperature(w);
    if (!(t > 0.0))
        throw ArgumentError("non-positive temperature");
    const double dv = v + shift;
    return dv * dv / (2.0 * t);
}

} // namespace

double maxwellian_2d2v(double x, double y, double vx, double vy) {
    const double rho = 0.5 * (spatial_term(x) + spatial_term(y));
    const double minus = b_term(vx, -0.75, x) + b_term(vy, -0.75, y);
    const double plus = b_term(vx, 0.75, x) + b_term(vy, 0.75, y);
    return rho * (std::exp(-minus) + std::exp(-plus));
}

double maxwellian_3d3v(double x, double y, double z, double vx, double vy, double vz) {
    const double rho = (spatial_term(x) + spatial_term(y) + spatial_term(z)) / 3.0;
    const double minus = b_term(vx, -0.75, x) + b_term(vy, -0.75, y) + b_term(vz, -0.75, z);
    const double plus = b_term(vx, 0.75, x) + b_term(vy, 0.75, y) + b_term(vz, 0.75, z);
    return rho * (std::exp(-minus) + std::exp(-plus));
}

double maxwellian(const MaxwellianConfig& cfg, std::span<const Index> idx) {
    double c[6] = {0, 0, 0, 0, 0, 0}; // x, vx, y, vy, z, vz
    for (std::size_t j = 0; j < cfg.ordering.size(); ++j) {
        const auto a = static_cast<int>(cfg.ordering[j]);
        const bool velocity = (a % 2) == 1;
        c[a] = velocity ? grid_point(-3.0, 3.0, cfg.sizes[j], idx[j]) : grid_point(-0.5, 0.5, cfg.sizes[j], idx[j]);
    }
    if (cfg.ordering.size() == 4)
        return maxwellian_2d2v(c[0], c[2], c[1], c[3]);
    return maxwellian_3d3v(c[0], c[2], c[4], c[1], c[3], c[5]);
}

std::unique_ptr<ElementOracle> make_hilbert(const DimSpec& dims) {
    return std::make_unique<ElementOracle>(dims, [](std::span<const Index> idx) { return hilbert_tensor(idx); });
}

std::unique_ptr<ElementOracle> make_maxwellian(const MaxwellianConfig& cfg) {
    cfg.validate();
    return std::make_unique<ElementOracle>(DimSpec(cfg.sizes),
                                           [cfg](std::span<const Index> idx) { return maxwellian(cfg, idx); });
}

std::unique_ptr<ElementOracle> make_rank_one(const DimSpec& dims) {
    return std::make_unique<ElementOracle>(dims, [](std::span<const Index> idx) {
        double v = 1.0;
        for (Index i : idx)
            v /= static_cast<double>(i + 1);
        return v;
    });
}

} // namespace ttx::models
