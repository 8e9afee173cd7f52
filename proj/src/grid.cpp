#include "ttx/grid.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ttx/aca.hpp"

namespace ttx {

int GridConfig::ranks() const noexcept {
    int r = 1;
    for (int p : procs)
        r *= p;
    return r;
}

void GridConfig::validate() const {
    if (sizes.empty())
        throw ConfigError("grid needs at least one dimension");
    if (parts.size() != sizes.size() || procs.size() != sizes.size())
        throw ConfigError("grid shape has " + std::to_string(parts.size()) + " partitions and " +
                          std::to_string(procs.size()) + " process counts for " + std::to_string(sizes.size()) +
                          " dimensions");
    for (std::size_t j = 0; j < sizes.size(); ++j) {
        if (sizes[j] < 1)
            throw ConfigError("mode size must be >= 1");
        if (procs[j] < 1 || parts[j] < procs[j])
            throw ConfigError("dimension " + std::to_string(j) + ": need 1 <= procs <= partitions");
        if (parts[j] > sizes[j])
            throw ConfigError("dimension " + std::to_string(j) + ": more partitions than indices");
    }
}

std::vector<IndexRange> partition(Index n, int parts) {
    if (parts < 1)
        throw ArgumentError("partition count must be >= 1");
    if (parts > n)
        throw ArgumentError("partition of " + std::to_string(n) + " into " + std::to_string(parts) +
                            " pieces leaves empty blocks");
    const Index base = n / parts;
    const Index extra = n % parts;
    std::vector<IndexRange> out;
    out.reserve(static_cast<std::size_t>(parts));
    Index begin = 0;
    for (int c = 0; c < parts; ++c) {
        const Index len = base + (c < extra ? 1 : 0);
        out.push_back({begin, begin + len});
        begin += len;
    }
    return out;
}

int classify_case(bool owns_row, bool owns_col) noexcept {
    if (owns_row)
        return owns_col ? 1 : 2;
    return owns_col ? 3 : 4;
}

int classify_case(Index i, Index j, std::span<const IndexRange> rows, std::span<const IndexRange> cols) noexcept {
    bool in_rows = false, in_cols = false;
    for (const auto& r : rows)
        in_rows = in_rows || r.contains(i);
    for (const auto& c : cols)
        in_cols = in_cols || c.contains(j);
    return classify_case(in_rows, in_cols);
}

// ---------------------------------------------------------------------------

ProcessGrid::ProcessGrid(GridConfig config) : config_(std::move(config)) {
    config_.validate();
    dims_ = DimSpec(config_.sizes);
    ranks_ = config_.ranks();
    owner_.resize(config_.sizes.size());
    for (int j = 0; j < d(); ++j) {
        const auto cells = partition(config_.sizes[static_cast<std::size_t>(j)], config_.parts[static_cast<std::size_t>(j)]);
        auto& own = owner_[static_cast<std::size_t>(j)];
        own.resize(static_cast<std::size_t>(config_.sizes[static_cast<std::size_t>(j)]));
        for (std::size_t c = 0; c < cells.size(); ++c)
            for (Index i = cells[c].begin; i < cells[c].end; ++i)
                own[static_cast<std::size_t>(i)] = static_cast<int>(c) % config_.procs[static_cast<std::size_t>(j)];
    }
}

std::vector<int> ProcessGrid::coords(int rank) const {
    if (rank < 0 || rank >= ranks_)
        throw ArgumentError("rank " + std::to_string(rank) + " outside grid");
    std::vector<int> c(config_.procs.size());
    for (std::size_t j = 0; j < c.size(); ++j) {
        c[j] = rank % config_.procs[j];
        rank /= config_.procs[j];
    }
    return c;
}

int ProcessGrid::rank_of(std::span<const int> coords) const {
    if (coords.size() != config_.procs.size())
        throw ArgumentError("coordinate arity mismatch");
    int r = 0, stride = 1;
    for (std::size_t j = 0; j < coords.size(); ++j) {
        if (coords[j] < 0 || coords[j] >= config_.procs[j])
            throw ArgumentError("process coordinate out of range");
        r += coords[j] * stride;
        stride *= config_.procs[j];
    }
    return r;
}

int ProcessGrid::owner_rank(std::span<const Index> idx) const {
    if (!dims_.contains(idx))
        throw BoundsError("multi-index outside tensor");
    int r = 0, stride = 1;
    for (int j = 0; j < d(); ++j) {
        r += owner_coord(j, idx[static_cast<std::size_t>(j)]) * stride;
        stride *= config_.procs[static_cast<std::size_t>(j)];
    }
    return r;
}

std::vector<std::vector<IndexRange>> ProcessGrid::owned_cells(int rank) const {
    const auto c = coords(rank);
    std::vector<std::vector<IndexRange>> per_dim(static_cast<std::size_t>(d()));
    for (int j = 0; j < d(); ++j) {
        const auto cells = partition(config_.sizes[static_cast<std::size_t>(j)], config_.parts[static_cast<std::size_t>(j)]);
        for (std::size_t q = 0; q < cells.size(); ++q)
            if (static_cast<int>(q) % config_.procs[static_cast<std::size_t>(j)] == c[static_cast<std::size_t>(j)])
                per_dim[static_cast<std::size_t>(j)].push_back(cells[q]);
    }
    // Cartesian product, first mode fastest.
    std::vector<std::vector<IndexRange>> out;
    std::vector<std::size_t> pos(per_dim.size(), 0);
    for (;;) {
        std::vector<IndexRange> cell;
        for (std::size_t j = 0; j < per_dim.size(); ++j)
            cell.push_back(per_dim[j][pos[j]]);
        out.push_back(std::move(cell));
        std::size_t j = 0;
        while (j < pos.size() && ++pos[j] == per_dim[j].size())
            pos[j++] = 0;
        if (j == pos.size())
            break;
    }
    return out;
}

Index ProcessGrid::owned_count(int rank, int dim) const {
    const int c = coords(rank)[static_cast<std::size_t>(dim)];
    Index n = 0;
    for (int o : owner_[static_cast<std::size_t>(dim)])
        n += (o == c);
    return n;
}

Index ProcessGrid::max_owned_count(int dim) const {
    Index best = 0;
    for (int p = 0; p < config_.procs[static_cast<std::size_t>(dim)]; ++p) {
        Index n = 0;
        for (int o : owner_[static_cast<std::size_t>(dim)])
            n += (o == p);
        best = std::max(best, n);
    }
    return best;
}

int ProcessGrid::row_blocks(int k) const {
    int r = 1;
    for (int j = 0; j < k; ++j)
        r *= config_.procs[static_cast<std::size_t>(j)];
    return r;
}

int ProcessGrid::col_blocks(int k) const { return ranks_ / row_blocks(k); }

int ProcessGrid::row_block_of(int k, Index row) const {
    int b = 0, stride = 1;
    for (int j = 0; j < k; ++j) {
        const Index n = config_.sizes[static_cast<std::size_t>(j)];
        b += owner_coord(j, row % n) * stride;
        row /= n;
        stride *= config_.procs[static_cast<std::size_t>(j)];
    }
    return b;
}

int ProcessGrid::col_block_of(int k, Index col) const {
    int b = 0, stride = 1;
    for (int j = k; j < d(); ++j) {
        const Index n = config_.sizes[static_cast<std::size_t>(j)];
        b += owner_coord(j, col % n) * stride;
        col /= n;
        stride *= config_.procs[static_cast<std::size_t>(j)];
    }
    return b;
}

// ---------------------------------------------------------------------------

PhaseMeter::PhaseMeter(const Communicator& comm, PhaseLog* log, std::string phase, int k, int step)
    : comm_(comm), log_(log), phase_(std::move(phase)), k_(k), step_(step) {
    if (log_ != nullptr)
        start_ = comm_.stats();
}

PhaseMeter::~PhaseMeter() {
    if (log_ != nullptr)
        log_->push_back({phase_, k_, step_, case_, comm_.stats() - start_});
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kIndexLimit = 9007199254740992.0; // 2^53: indices travel as doubles
}

CrossState::CrossState(const ProcessGrid& grid, int rank, int k, const ElementOracle& oracle)
    : grid_(grid), rank_(rank), k_(k), oracle_(oracle), coords_(grid.coords(rank)) {
    if (k < 1 || k > grid.d() - 1)
        throw ArgumentError("unfolding index k=" + std::to_string(k) + " outside [1, d-1]");
    if (!(oracle.dims() == grid.dims()))
        throw ArgumentError("oracle and grid disagree on tensor shape");
    if (static_cast<double>(grid.dims().total()) >= kIndexLimit)
        throw ArgumentError("tensor too large for exact index transport");
    row_block_ = grid.row_block(rank, k);
    col_block_ = grid.col_block(rank, k);
}

bool CrossState::owns_row_id(Index row) const { return grid_.row_block_of(k_, row) == row_block_; }
bool CrossState::owns_col_id(Index col) const { return grid_.col_block_of(k_, col) == col_block_; }

bool CrossState::owns_row(Index row) const { return owns_row_id(row); }
bool CrossState::owns_col(Index col) const { return owns_col_id(col); }

double CrossState::eval(Index row, Index col) const {
    return oracle_(from_unfolding(k_, row, col, grid_.dims()));
}

double CrossState::approx_at(Index row, Index col) const {
    auto r = row_pos_.find(row);
    auto c = col_pos_.find(col);
    if (r == row_pos_.end() || c == col_pos_.end())
        throw OwnershipError("entry not in this rank's superblock share");
    return approx_(r->second, c->second);
}

double CrossState::value_at(Index row, Index col) const {
    auto r = row_pos_.find(row);
    auto c = col_pos_.find(col);
    if (r == row_pos_.end() || c == col_pos_.end())
        throw OwnershipError("entry not in this rank's superblock share");
    return a_(r->second, c->second);
}

void CrossState::register_pivot(Index row, Index col, double value, std::vector<double> core_u,
                                std::vector<double> core_v) {
    const auto t = static_cast<std::size_t>(z());
    if (core_u.size() != t || core_v.size() != t)
        throw StructureError("pivot factor history has the wrong length");
    if (forbidden_rows_.count(row) || forbidden_cols_.count(col))
        throw StructureError("pivot row or column selected twice");
    if (!(std::abs(value) > floor_) || !std::isfinite(value))
        throw DegeneratePivotError("pivot at the degeneracy floor", k_);
    if (t == 0)
        floor_ = aca::degeneracy_floor(value);
    pivot_rows_.push_back(row);
    pivot_cols_.push_back(col);
    pivot_values_.push_back(value);
    core_u_.push_back(std::move(core_u));
    core_v_.push_back(std::move(core_v));
    forbidden_rows_.insert(row);
    forbidden_cols_.insert(col);
}

void CrossState::grow(const Communicator& comm, std::span<const Index> rows, std::span<const Index> cols,
                      PhaseLog* log, int step) {
    PhaseMeter meter(comm, log, "replay", k_, step);
    const Index z = this->z();
    const Index old_rows = static_cast<Index>(rows_.size());
    const Index old_cols = static_cast<Index>(cols_.size());

    for (Index r : rows) {
        if (!owns_row_id(r))
            continue;
        if (!row_pos_.emplace(r, static_cast<Index>(rows_.size())).second)
            throw StructureError("superblock row added twice");
        rows_.push_back(r);
    }
    for (Index c : cols) {
        if (!owns_col_id(c))
            continue;
        if (!col_pos_.emplace(c, static_cast<Index>(cols_.size())).second)
            throw StructureError("superblock column added twice");
        cols_.push_back(c);
    }
    const Index nr = static_cast<Index>(rows_.size());
    const Index nc = static_cast<Index>(cols_.size());
    const Index added_rows = nr - old_rows;
    const Index added_cols = nc - old_cols;

    a_.conservativeResize(nr, nc);
    approx_.conservativeResize(nr, nc);
    u_.conservativeResize(nr, z);
    v_.conservativeResize(nc, z);
    for (Index c = 0; c < nc; ++c)
        for (Index r = (c < old_cols ? old_rows : 0); r < nr; ++r)
            a_(r, c) = eval(rows_[static_cast<std::size_t>(r)], cols_[static_cast<std::size_t>(c)]);

    // A(new rows, J) and A(I, new cols), partly held by peers.
    Eigen::MatrixXd ax(added_rows, z), ay(z, added_cols);
    const int rb_count = grid_.row_blocks(k_);
    const int cb_count = grid_.col_blocks(k_);
    std::vector<int> piv_col_block(static_cast<std::size_t>(z)), piv_row_block(static_cast<std::size_t>(z));
    for (Index s = 0; s < z; ++s) {
        piv_col_block[static_cast<std::size_t>(s)] = grid_.col_block_of(k_, pivot_cols_[static_cast<std::size_t>(s)]);
        piv_row_block[static_cast<std::size_t>(s)] = grid_.row_block_of(k_, pivot_rows_[static_cast<std::size_t>(s)]);
    }
    auto count_in = [&](const std::vector<int>& blocks, int b) {
        Index n = 0;
        for (int x : blocks)
            n += (x == b);
        return n;
    };

    if (added_rows > 0 && count_in(piv_col_block, col_block_) > 0) {
        Payload out;
        for (Index s = 0; s < z; ++s) {
            if (piv_col_block[static_cast<std::size_t>(s)] != col_block_)
                continue;
            const Index lc = col_pos_.at(pivot_cols_[static_cast<std::size_t>(s)]);
            for (Index r = 0; r < added_rows; ++r) {
                ax(r, s) = a_(old_rows + r, lc);
                out.push_back(ax(r, s));
            }
        }
        for (int cb = 0; cb < cb_count; ++cb)
            if (cb != col_block_)
                comm.send(grid_.rank_of_blocks(k_, row_block_, cb), out);
    }
    if (added_cols > 0 && count_in(piv_row_block, row_block_) > 0) {
        Payload out;
        for (Index s = 0; s < z; ++s) {
            if (piv_row_block[static_cast<std::size_t>(s)] != row_block_)
                continue;
            const Index lr = row_pos_.at(pivot_rows_[static_cast<std::size_t>(s)]);
            for (Index c = 0; c < added_cols; ++c) {
                ay(s, c) = a_(lr, old_cols + c);
                out.push_back(ay(s, c));
            }
        }
        for (int rb = 0; rb < rb_count; ++rb)
            if (rb != row_block_)
                comm.send(grid_.rank_of_blocks(k_, rb, col_block_), out);
    }
    if (added_rows > 0) {
        for (int cb = 0; cb < cb_count; ++cb) {
            if (cb == col_block_ || count_in(piv_col_block, cb) == 0)
                continue;
            const Payload in = comm.receive(grid_.rank_of_blocks(k_, row_block_, cb));
            std::size_t pos = 0;
            for (Index s = 0; s < z; ++s) {
                if (piv_col_block[static_cast<std::size_t>(s)] != cb)
                    continue;
                for (Index r = 0; r < added_rows; ++r)
                    ax(r, s) = in.at(pos++);
            }
            if (pos != in.size())
                throw StructureError("replay row payload has unexpected length");
        }
    }
    if (added_cols > 0) {
        for (int rb = 0; rb < rb_count; ++rb) {
            if (rb == row_block_ || count_in(piv_row_block, rb) == 0)
                continue;
            const Payload in = comm.receive(grid_.rank_of_blocks(k_, rb, col_block_));
            std::size_t pos = 0;
            for (Index s = 0; s < z; ++s) {
                if (piv_row_block[static_cast<std::size_t>(s)] != rb)
                    continue;
                for (Index c = 0; c < added_cols; ++c)
                    ay(s, c) = in.at(pos++);
            }
            if (pos != in.size())
                throw StructureError("replay column payload has unexpected length");
        }
    }

    // Rebuild the rank-1 factors exactly as the incremental updates would have.
    for (Index r = 0; r < added_rows; ++r) {
        for (Index s = 0; s < z; ++s) {
            double acc = 0.0;
            for (Index q = 0; q < s; ++q)
                acc += aca::rank1_term(u_(old_rows + r, q), core_v_[static_cast<std::size_t>(s)][static_cast<std::size_t>(q)],
                                       pivot_values_[static_cast<std::size_t>(q)]);
            u_(old_rows + r, s) = ax(r, s) - acc;
        }
    }
    for (Index c = 0; c < added_cols; ++c) {
        for (Index s = 0; s < z; ++s) {
            double acc = 0.0;
            for (Index q = 0; q < s; ++q)
                acc += aca::rank1_term(core_u_[static_cast<std::size_t>(s)][static_cast<std::size_t>(q)], v_(old_cols + c, q),
                                       pivot_values_[static_cast<std::size_t>(q)]);
            v_(old_cols + c, s) = ay(s, c) - acc;
        }
    }
    for (Index c = 0; c < nc; ++c) {
        for (Index r = (c < old_cols ? old_rows : 0); r < nr; ++r) {
            double acc = 0.0;
            for (Index s = 0; s < z; ++s)
                acc += aca::rank1_term(u_(r, s), v_(c, s), pivot_values_[static_cast<std::size_t>(s)]);
            approx_(r, c) = acc;
        }
    }
}

std::optional<PivotEvent> CrossState::step(const Communicator& comm, PhaseLog* log, int step_index) {
    if (comm.size() != grid_.ranks() || comm.rank() != rank_)
        throw ArgumentError("cross step needs the full grid communicator");

    // (a)+(b)+(c): local candidate, allgather of (value, row, col), global choice.
    Index best_row = -1, best_col = -1;
    double best_val = 0.0;
    int owner = -1;
    {
        PhaseMeter meter(comm, log, "allgather", k_, step_index);
        double local_abs = -1.0;
        Index lr_best = -1, lc_best = -1;
        for (Index c = 0; c < static_cast<Index>(cols_.size()); ++c) {
            const Index gc = cols_[static_cast<std::size_t>(c)];
            if (forbidden_cols_.count(gc))
                continue;
            for (Index r = 0; r < static_cast<Index>(rows_.size()); ++r) {
                const Index gr = rows_[static_cast<std::size_t>(r)];
                if (forbidden_rows_.count(gr))
                    continue;
                const double e = std::abs(residual(r, c));
                if (e > local_abs ||
                    (e == local_abs && aca::colex_before(gr, gc, rows_[static_cast<std::size_t>(lr_best)],
                                                         cols_[static_cast<std::size_t>(lc_best)]))) {
                    local_abs = e;
                    lr_best = r;
                    lc_best = c;
                }
            }
        }
        const double mine[3] = {lr_best < 0 ? 0.0 : residual(lr_best, lc_best),
                                lr_best < 0 ? -1.0 : static_cast<double>(rows_[static_cast<std::size_t>(lr_best)]),
                                lc_best < 0 ? -1.0 : static_cast<double>(cols_[static_cast<std::size_t>(lc_best)])};
        const Payload all = comm.allgather(mine);
        double best_abs = -1.0;
        for (int r = 0; r < comm.size(); ++r) {
            const double v = all[3 * static_cast<std::size_t>(r)];
            const auto gr = static_cast<Index>(all[3 * static_cast<std::size_t>(r) + 1]);
            const auto gc = static_cast<Index>(all[3 * static_cast<std::size_t>(r) + 2]);
            if (gr < 0)
                continue;
            const double e = std::abs(v);
            if (e > best_abs || (e == best_abs && aca::colex_before(gr, gc, best_row, best_col))) {
                best_abs = e;
                best_val = v;
                best_row = gr;
                best_col = gc;
                owner = r;
            }
        }
        if (owner < 0 || !(best_abs > floor_))
            return std::nullopt;
    }

    const bool has_row = owns_row_id(best_row);
    const bool has_col = owns_col_id(best_col);
    const int my_case = classify_case(has_row, has_col);
    const Index nr = static_cast<Index>(rows_.size());
    const Index nc = static_cast<Index>(cols_.size());
    Eigen::VectorXd useg(nr), vseg(nc);

    // (d) row/column neighbour exchange.
    {
        PhaseMeter meter(comm, log, "neighbor", k_, step_index);
        meter.set_case(my_case);
        if (has_row) {
            const Index lr = row_pos_.at(best_row);
            for (Index c = 0; c < nc; ++c)
                vseg(c) = residual(lr, c);
        }
        if (has_col) {
            const Index lc = col_pos_.at(best_col);
            for (Index r = 0; r < nr; ++r)
                useg(r) = residual(r, lc);
        }
        if (has_row && nc > 0)
            for (int rb = 0; rb < grid_.row_blocks(k_); ++rb)
                if (rb != row_block_)
                    comm.send(grid_.rank_of_blocks(k_, rb, col_block_), {vseg.data(), static_cast<std::size_t>(nc)});
        if (has_col && nr > 0)
            for (int cb = 0; cb < grid_.col_blocks(k_); ++cb)
                if (cb != col_block_)
                    comm.send(grid_.rank_of_blocks(k_, row_block_, cb), {useg.data(), static_cast<std::size_t>(nr)});
        if (!has_row && nc > 0) {
            const Payload in = comm.receive(grid_.rank_of_blocks(k_, grid_.row_block_of(k_, best_row), col_block_));
            if (static_cast<Index>(in.size()) != nc)
                throw StructureError("row segment length mismatch");
            for (Index c = 0; c < nc; ++c)
                vseg(c) = in[static_cast<std::size_t>(c)];
        }
        if (!has_col && nr > 0) {
            const Payload in = comm.receive(grid_.rank_of_blocks(k_, row_block_, grid_.col_block_of(k_, best_col)));
            if (static_cast<Index>(in.size()) != nr)
                throw StructureError("column segment length mismatch");
            for (Index r = 0; r < nr; ++r)
                useg(r) = in[static_cast<std::size_t>(r)];
        }
    }

    // Pivot-core factor values, needed later to extend the superblock.
    const Index z = this->z();
    std::vector<double> core_u(static_cast<std::size_t>(z)), core_v(static_cast<std::size_t>(z));
    {
        PhaseMeter meter(comm, log, "meta", k_, step_index);
        if (comm.rank() == owner) {
            const Index lr = row_pos_.at(best_row);
            const Index lc = col_pos_.at(best_col);
            Payload out(static_cast<std::size_t>(2 * z));
            for (Index s = 0; s < z; ++s) {
                core_u[static_cast<std::size_t>(s)] = u_(lr, s);
                core_v[static_cast<std::size_t>(s)] = v_(lc, s);
                out[static_cast<std::size_t>(s)] = u_(lr, s);
                out[static_cast<std::size_t>(z + s)] = v_(lc, s);
            }
            if (z > 0)
                for (int r = 0; r < comm.size(); ++r)
                    if (r != owner)
                        comm.send(r, out);
        } else if (z > 0) {
            const Payload in = comm.receive(owner);
            if (static_cast<Index>(in.size()) != 2 * z)
                throw StructureError("pivot metadata length mismatch");
            for (Index s = 0; s < z; ++s) {
                core_u[static_cast<std::size_t>(s)] = in[static_cast<std::size_t>(s)];
                core_v[static_cast<std::size_t>(s)] = in[static_cast<std::size_t>(z + s)];
            }
        }
    }

    // (e) rank-1 update of the whole owned share.
    for (Index c = 0; c < nc; ++c)
        for (Index r = 0; r < nr; ++r)
            approx_(r, c) += aca::rank1_term(useg(r), vseg(c), best_val);
    u_.conservativeResize(nr, z + 1);
    v_.conservativeResize(nc, z + 1);
    u_.col(z) = useg;
    v_.col(z) = vseg;
    register_pivot(best_row, best_col, best_val, std::move(core_u), std::move(core_v));
    return PivotEvent{best_row, best_col, best_val, owner, my_case};
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd build_T_distributed(const Communicator& comm, const Eigen::MatrixXd& a_local,
                                    const Eigen::MatrixXd& core, std::span<const int> pivot_owner,
                                    std::span<const Index> pivot_local_row, int dimension, PhaseLog* log) {
    const Index n = core.rows();
    if (core.cols() != n || a_local.cols() != n || static_cast<Index>(pivot_owner.size()) != n ||
        static_cast<Index>(pivot_local_row.size()) != n)
        throw StructureError("build_T_distributed: inconsistent pivot count");
    PhaseMeter meter(comm, log, "t_build", dimension, 0);
    const Index rows = a_local.rows();
    Eigen::MatrixXd t(rows, 0);
    if (n == 0)
        return t;
    if (!(core(0, 0) != 0.0) || !std::isfinite(core(0, 0)))
        throw DegeneratePivotError("first pivot of the core is zero", dimension);
    t.resize(rows, 1);
    for (Index r = 0; r < rows; ++r)
        t(r, 0) = a_local(r, 0) / core(0, 0);

    std::vector<double> trow, acol(static_cast<std::size_t>(n));
    for (Index z = 1; z < n; ++z) {
        for (Index s = 0; s < z; ++s)
            acol[static_cast<std::size_t>(s)] = core(s, z);
        const std::span<const double> piv_col(acol.data(), static_cast<std::size_t>(z));
        double delta;
        const int owner = pivot_owner[static_cast<std::size_t>(z)];
        if (comm.rank() == owner) {
            const Index lr = pivot_local_row[static_cast<std::size_t>(z)];
            trow.resize(static_cast<std::size_t>(z));
            for (Index s = 0; s < z; ++s)
                trow[static_cast<std::size_t>(s)] = t(lr, s);
            try {
                delta = aca::compute_delta(Eigen::Map<const Eigen::VectorXd>(trow.data(), z),
                                           Eigen::Map<const Eigen::VectorXd>(acol.data(), z), core(z, z));
            } catch (const DegeneratePivotError&) {
                delta = std::numeric_limits<double>::quiet_NaN();
            }
            Payload out;
            out.reserve(static_cast<std::size_t>(z + 1));
            out.push_back(delta);
            out.insert(out.end(), trow.begin(), trow.end());
            for (int r = 0; r < comm.size(); ++r)
                if (r != owner)
                    comm.send(r, out);
        } else {
            const Payload in = comm.receive(owner);
            if (static_cast<Index>(in.size()) != z + 1)
                throw StructureError("T row message length mismatch");
            delta = in[0];
            trow.assign(in.begin() + 1, in.end());
        }
        if (!std::isfinite(delta))
            throw DegeneratePivotError("singular pivot core while building T", dimension);
        std::vector<double> col(static_cast<std::size_t>(rows));
        for (Index r = 0; r < rows; ++r)
            col[static_cast<std::size_t>(r)] = a_local(r, z);
        aca::t_update_rows<double>(t, col, piv_col, trow, delta);
    }
    return t;
}

// ---------------------------------------------------------------------------

CoreGridAssignment choose_core_grids(const ProcessGrid& grid, std::span<const std::vector<Index>> column_hits) {
    const int d = grid.d();
    CoreGridAssignment out;
    if (d < 2)
        return out;
    out.grids.resize(static_cast<std::size_t>(d - 1));
    std::vector<int> uses(static_cast<std::size_t>(grid.ranks()), 0);
    for (int k = d - 1; k >= 1; --k) {
        auto& g = out.grids[static_cast<std::size_t>(k - 1)];
        const int rb = grid.row_blocks(k);
        const int cb = grid.col_blocks(k);
        std::vector<Index> score(static_cast<std::size_t>(cb), 0);
        if (static_cast<int>(column_hits.size()) >= k)
            for (Index col : column_hits[static_cast<std::size_t>(k - 1)])
                ++score[static_cast<std::size_t>(grid.col_block_of(k, col))];
        for (int q = 0; q < rb; ++q) {
            int pick = -1;
            for (int b = 0; b < cb; ++b) {
                const int cand = grid.rank_of_blocks(k, q, b);
                if (pick < 0) {
                    pick = cand;
                    continue;
                }
                const bool used_c = uses[static_cast<std::size_t>(cand)] > 0;
                const bool used_p = uses[static_cast<std::size_t>(pick)] > 0;
                const Index sc = score[static_cast<std::size_t>(b)];
                const Index sp = score[static_cast<std::size_t>(grid.col_block(pick, k))];
                if (used_c != used_p ? !used_c : sc > sp)
                    pick = cand;
            }
            ++uses[static_cast<std::size_t>(pick)];
            g.members.push_back(pick);
        }
        g.root = g.members.front();
    }
    for (auto& g : out.grids) {
        for (int m : g.members)
            g.shared = g.shared || uses[static_cast<std::size_t>(m)] > 1;
        out.shared = out.shared || g.shared;
    }
    return out;
}

} // namespace ttx
