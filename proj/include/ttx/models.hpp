#pragma once

// Element functions for the test tensors: Hilbert matrix/tensor and
// discretised Maxwellian distributions (2d2v, 3d3v).

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ttx/tensor.hpp"

namespace ttx::models {

/// 1 / (i + j + 1) for 0-based i, j.
double hilbert_matrix(Index i, Index j) noexcept;

/// 1 / (1 - d + sum(i_j + 1)) for a 0-based multi-index.
double hilbert_tensor(std::span<const Index> idx) noexcept;

enum class Axis { x, vx, y, vy, z, vz };

std::string axis_name(Axis a);
/// Parse "x,vx,y,vy" style lists. Throws ConfigError.
std::vector<Axis> parse_ordering(const std::string& text);

struct MaxwellianConfig {
    std::vector<Axis> ordering; ///< tensor mode j samples axis ordering[j]
    std::vector<Index> sizes;   ///< grid points per tensor mode

    int spatial_dims() const noexcept { return static_cast<int>(ordering.size()) / 2; }
    /// Throws ConfigError unless ordering is a permutation of the 2d2v or 3d3v axes.
    void validate() const;

    static MaxwellianConfig standard_2d2v(Index n);
    static MaxwellianConfig standard_3d3v(Index n);
};

double density(double w) noexcept;     ///< rho(w) = 1 + 0.875 sin(2 pi w)
double temperature(double w) noexcept; ///< T(w) = 0.5 + 0.4 sin(2 pi w)

/// Uniform grid on [a, b] with endpoints: a + i (b - a) / (N - 1); the
/// midpoint when N = 1.
double grid_point(double a, double b, Index count, Index i) noexcept;

double maxwellian_2d2v(double x, double y, double vx, double vy);
double maxwellian_3d3v(double x, double y, double z, double vx, double vy, double vz);

/// Tensor entry for a multi-index under `cfg`.
double maxwellian(const MaxwellianConfig& cfg, std::span<const Index> idx);

std::unique_ptr<ElementOracle> make_hilbert(const DimSpec& dims);
std::unique_ptr<ElementOracle> make_maxwellian(const MaxwellianConfig& cfg);
/// Exact rank-1 tensor prod_j 1/(i_j + 1), used as a smoke model.
std::unique_ptr<ElementOracle> make_rank_one(const DimSpec& dims);

} // namespace ttx::models
