#pragma once

// Process/subtensor grid geometry and the distributed matrix-cross kernels
// that run on it.
//
// Each mode j is cut into C_j contiguous cells; cell c goes to process
// coordinate c mod P_j. A rank therefore owns a product set of indices, and
// for the k-th unfolding its rows are the prefixes (i_1..i_k) it owns and
// its columns the suffixes (i_{k+1}..i_d). World rank = colex(p_1..p_d), so
// rank = row_block + (P_1...P_k) * col_block for every k.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "ttx/runtime.hpp"
#include "ttx/tensor.hpp"

namespace ttx {

struct GridConfig {
    std::vector<Index> sizes; ///< n_j
    std::vector<int> parts;   ///< C_j
    std::vector<int> procs;   ///< P_j

    int d() const noexcept { return static_cast<int>(sizes.size()); }
    int ranks() const noexcept;
    /// Throws ConfigError on inconsistent lengths, P_j > C_j or C_j > n_j.
    void validate() const;
};

/// Contiguous near-even split of [0, n), larger blocks first.
std::vector<IndexRange> partition(Index n, int parts);

/// Pivot case 1..4: owns pivot row and column / row only /
/// column only / neither.
int classify_case(bool owns_row, bool owns_col) noexcept;
int classify_case(Index i, Index j, std::span<const IndexRange> rows, std::span<const IndexRange> cols) noexcept;

class ProcessGrid {
public:
    explicit ProcessGrid(GridConfig config);

    const GridConfig& config() const noexcept { return config_; }
    const DimSpec& dims() const noexcept { return dims_; }
    int d() const noexcept { return config_.d(); }
    int ranks() const noexcept { return ranks_; }

    std::vector<int> coords(int rank) const;
    int rank_of(std::span<const int> coords) const;

    /// Process coordinate owning index i of mode `dim` (0-based mode).
    int owner_coord(int dim, Index i) const { return owner_[static_cast<std::size_t>(dim)][static_cast<std::size_t>(i)]; }
    int owner_rank(std::span<const Index> idx) const;

    /// Subtensor cells held by `rank`, each as one range per mode.
    std::vector<std::vector<IndexRange>> owned_cells(int rank) const;
    /// Number of indices of mode `dim` held by `rank`.
    Index owned_count(int rank, int dim) const;
    /// Largest owned_count over ranks.
    Index max_owned_count(int dim) const;

    // Unfolding k (1 <= k <= d-1) block structure.
    int row_blocks(int k) const;
    int col_blocks(int k) const;
    int row_block(int rank, int k) const { return rank % row_blocks(k); }
    int col_block(int rank, int k) const { return rank / row_blocks(k); }
    int rank_of_blocks(int k, int row_block, int col_block) const { return row_block + row_blocks(k) * col_block; }
    int row_block_of(int k, Index row) const;
    int col_block_of(int k, Index col) const;

private:
    GridConfig config_;
    DimSpec dims_;
    int ranks_ = 1;
    std::vector<std::vector<int>> owner_;
};

/// Communication counters for one phase of one step on one rank.
struct PhaseRecord {
    std::string phase; ///< seed, allgather, neighbor, meta, replay, core_index, core_elements, t_build, collect
    int k = 0;
    int step = 0;
    int pivot_case = 0; ///< 1..4 for neighbor records, 0 otherwise
    CommStats traffic;
};
using PhaseLog = std::vector<PhaseRecord>;

class PhaseMeter {
public:
    PhaseMeter(const Communicator& comm, PhaseLog* log, std::string phase, int k, int step);
    ~PhaseMeter();
    void set_case(int c) noexcept { case_ = c; }

    PhaseMeter(const PhaseMeter&) = delete;
    PhaseMeter& operator=(const PhaseMeter&) = delete;

private:
    const Communicator& comm_;
    PhaseLog* log_;
    std::string phase_;
    int k_, step_, case_ = 0;
    CommStats start_;
};

struct PivotEvent {
    Index row = 0; ///< unfolding row
    Index col = 0; ///< unfolding column
    double value = 0; ///< signed residual at the pivot
    int owner = 0;
    int my_case = 0;
};

/// Cross-approximation state of one unfolding on one rank. Only the part of
/// the superblock the rank owns is stored: tensor values A, the running
/// approximation, and the rank-1 factors u_s (rows) and v_s (columns).
/// Pivot lists and the pivot-core factor values are replicated on all ranks.
class CrossState {
public:
    CrossState(const ProcessGrid& grid, int rank, int k, const ElementOracle& oracle);

    int k() const noexcept { return k_; }
    Index z() const noexcept { return static_cast<Index>(pivot_rows_.size()); }
    double floor() const noexcept { return floor_; }

    const std::vector<Index>& pivot_rows() const noexcept { return pivot_rows_; }
    const std::vector<Index>& pivot_cols() const noexcept { return pivot_cols_; }
    const std::vector<double>& pivot_values() const noexcept { return pivot_values_; }

    const std::vector<Index>& active_rows() const noexcept { return rows_; }
    const std::vector<Index>& active_cols() const noexcept { return cols_; }
    bool owns_row(Index row) const;
    bool owns_col(Index col) const;

    /// Local approximation and tensor value at an owned superblock entry.
    double approx_at(Index row, Index col) const;
    double value_at(Index row, Index col) const;

    /// Record a pivot known to every rank without running the protocol (seed).
    /// Factor values for earlier pivots must be supplied.
    void register_pivot(Index row, Index col, double value, std::vector<double> core_u, std::vector<double> core_v);

    /// Collective: extend the superblock by `rows` and `cols` (global lists,
    /// identical on all ranks). Owned new entries are evaluated and their
    /// approximation rebuilt from the current pivots.
    void grow(const Communicator& comm, std::span<const Index> rows, std::span<const Index> cols, PhaseLog* log = nullptr,
              int step = 0);

    /// Collective: one greedy step. Returns nullopt (on every rank) when no
    /// residual above the degeneracy floor is left.
    std::optional<PivotEvent> step(const Communicator& comm, PhaseLog* log = nullptr, int step_index = 0);

private:
    bool owns_row_id(Index row) const;
    bool owns_col_id(Index col) const;
    double eval(Index row, Index col) const;
    double residual(Index lr, Index lc) const { return a_(lr, lc) - approx_(lr, lc); }

    const ProcessGrid& grid_;
    int rank_;
    int k_;
    const ElementOracle& oracle_;
    std::vector<int> coords_;
    int row_block_, col_block_;

    std::vector<Index> rows_, cols_;
    std::unordered_map<Index, Index> row_pos_, col_pos_;
    Eigen::MatrixXd a_, approx_, u_, v_;

    std::vector<Index> pivot_rows_, pivot_cols_;
    std::vector<double> pivot_values_;
    std::vector<std::vector<double>> core_u_; ///< core_u_[t][s] = u_s(i_t), s < t
    std::vector<std::vector<double>> core_v_; ///< core_v_[t][s] = v_s(j_t), s < t
    std::unordered_set<Index> forbidden_rows_, forbidden_cols_;
    double floor_ = 0.0;
};

/// Distributed T = A(K,J) A(I,J)^{-1} on a 1D group. Each member passes its
/// rows A(K,J) (|K| x N), the replicated N x N core A(I,J) in pivot order, and
/// for every pivot the member owning its row plus that row's local position
/// (only meaningful on the owner). Returns the member's T(K,:).
Eigen::MatrixXd build_T_distributed(const Communicator& comm, const Eigen::MatrixXd& a_local,
                                    const Eigen::MatrixXd& core, std::span<const int> pivot_owner,
                                    std::span<const Index> pivot_local_row, int dimension = -1,
                                    PhaseLog* log = nullptr);

struct CoreGrid {
    std::vector<int> members; ///< world ranks, indexed by colex(q_1..q_k)
    int root = 0;             ///< world rank of the root (member of piece 0)
    bool shared = false;      ///< some member also serves another k
};

struct CoreGridAssignment {
    std::vector<CoreGrid> grids; ///< grids[k-1] for k = 1..d-1
    bool shared = false;
};

/// Pick, for every k, one rank per piece of the (P_1 x ... x P_k) row-block
/// grid among ranks with matching leading coordinates. Larger k first; unused
/// ranks preferred; then the rank owning most columns listed in
/// `column_hits[k-1]` (unfolding-k column ids, may be empty); then smallest rank.
CoreGridAssignment choose_core_grids(const ProcessGrid& grid,
                                     std::span<const std::vector<Index>> column_hits = {});

} // namespace ttx
