#pragma once

// Subtensor-parallel TT cross: pivot selection on all unfoldings, core
// construction on lower-dimensional grids, TT evaluation and error metrics.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ttx/grid.hpp"
#include "ttx/runtime.hpp"
#include "ttx/tensor.hpp"

namespace ttx {

/// Nested pivot sets. i_le[k-1] holds the k-long prefixes I_{<=k},
/// j_gt[k-1] the (d-k)-long suffixes J_{>k}, k = 1..d-1, in selection order.
struct PivotSets {
    std::vector<std::vector<MultiIndex>> i_le;
    std::vector<std::vector<MultiIndex>> j_gt;

    int d() const noexcept { return static_cast<int>(i_le.size()) + 1; }
    std::vector<Index> ranks() const;

    friend bool operator==(const PivotSets&, const PivotSets&) = default;
};

/// Empty string when I_{<=k+1} is in I_{<=k} x I_{k+1} and J_{>k} in
/// I_{k+1} x J_{>k+1} for every k; otherwise a description of the violation.
std::string nestedness_violation(const PivotSets& pivots);

/// d order-3 cores; core k has shape (s_{k-1}, n_k, s_k), s_0 = s_d = 1.
/// Entry (a, i, b) is stored at a + s_{k-1} (i + n_k b).
class TTCores {
public:
    TTCores() = default;
    TTCores(std::vector<Index> mode_sizes, std::vector<Index> ranks);

    int d() const noexcept { return static_cast<int>(n_.size()); }
    const std::vector<Index>& mode_sizes() const noexcept { return n_; }
    /// s_0..s_d.
    const std::vector<Index>& ranks() const noexcept { return s_; }

    double& at(int k, Index a, Index i, Index b);
    double at(int k, Index a, Index i, Index b) const;
    /// G_k(:, i, :) as an s_{k-1} x s_k view (k is 0-based here).
    Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>> slice(int k, Index i) const;
    std::span<const double> raw(int k) const { return data_.at(static_cast<std::size_t>(k)); }
    std::span<double> raw(int k) { return data_.at(static_cast<std::size_t>(k)); }

    friend bool operator==(const TTCores&, const TTCores&) = default;

private:
    std::vector<Index> n_, s_;
    std::vector<std::vector<double>> data_;
};

/// G_1(:,i_1,:) ... G_d(:,i_d,:), left to right.
double tt_eval(const TTCores& cores, std::span<const Index> idx);

/// sqrt(sum (X - X~)^2 / sum X^2) over `samples` uniform indices. Uses
/// ElementOracle::peek, so the access counter is untouched.
double sampled_error(const ElementOracle& oracle, const TTCores& cores, Index samples, std::uint64_t seed);

/// Incremental rank vectors: start at min(2, r_k), raise every unsaturated
/// entry by one per step.
std::vector<std::vector<Index>> rank_schedule(std::span<const Index> targets);

/// Distinct evaluations recorded by the oracle divided by the tensor size.
double access_fraction(const ElementOracle& oracle);

/// SplitMix64, the counter-based generator behind sampled_error.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
    std::uint64_t next() noexcept;
    /// Uniform integer in [0, n).
    Index below(Index n) noexcept;

private:
    std::uint64_t state_;
};

struct PivotOptions {
    /// Finish one dimension before the next instead of round-robin sweeps.
    bool per_dimension_complete = false;
    /// Called on rank 0 after every accepted pivot with the current sets and k.
    std::function<void(const PivotSets&, int)> observer;
};

struct PivotOutcome {
    PivotSets pivots;
    MultiIndex seed; ///< empty for d = 2
    std::vector<std::string> warnings;
    int sweeps = 0;
};

/// Collective over the full grid communicator.
PivotOutcome find_all_pivots(const Communicator& comm, const ProcessGrid& grid, const ElementOracle& oracle,
                             std::span<const Index> target_ranks, const PivotOptions& options = {},
                             PhaseLog* log = nullptr);

/// Collective over the full grid communicator. Rank 0 returns the gathered
/// cores, every other rank nullopt.
std::optional<TTCores> build_cores(const Communicator& comm, const ProcessGrid& grid,
                                   const CoreGridAssignment& grids, const ElementOracle& oracle,
                                   const PivotSets& pivots, PhaseLog* log = nullptr);

/// Unfolding-k column ids of J_{>k}, used to steer core-grid selection.
std::vector<std::vector<Index>> pivot_column_ids(const PivotSets& pivots, const DimSpec& dims);

struct DecomposeOptions {
    std::vector<Index> ranks; ///< r_1..r_{d-1}
    PivotOptions pivots;
    RuntimeOptions runtime;
};

struct DecomposeResult {
    TTCores cores;
    PivotOutcome selection;
    CoreGridAssignment core_grids;
    std::vector<CommStats> stats;
    std::vector<PhaseLog> logs; ///< per rank
    double access_fraction = 0.0;
    double seconds_pivots = 0.0;
    double seconds_cores = 0.0;
};

/// End-to-end run on the simulated runtime with grid.ranks() ranks.
DecomposeResult decompose(const ElementOracle& oracle, const GridConfig& grid, const DecomposeOptions& options);

} // namespace ttx
