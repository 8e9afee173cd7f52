#include "ttx/ttcross.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>
#include <unordered_map>

namespace ttx {

std::vector<Index> PivotSets::ranks() const {
    std::vector<Index> r;
    for (const auto& s : i_le)
        r.push_back(static_cast<Index>(s.size()));
    return r;
}

std::string nestedness_violation(const PivotSets& pivots) {
    const int d = pivots.d();
    if (pivots.j_gt.size() != pivots.i_le.size())
        return "row and column pivot lists cover different dimensions";
    for (int k = 1; k <= d - 1; ++k) {
        const auto& rows = pivots.i_le[static_cast<std::size_t>(k - 1)];
        const auto& cols = pivots.j_gt[static_cast<std::size_t>(k - 1)];
        if (rows.size() != cols.size())
            return "dimension " + std::to_string(k) + ": |I| != |J|";
        if (k >= 2) {
            const auto& prev = pivots.i_le[static_cast<std::size_t>(k - 2)];
            for (const auto& p : rows) {
                MultiIndex head(p.begin(), p.end() - 1);
                if (std::find(prev.begin(), prev.end(), head) == prev.end())
                    return "I_le[" + std::to_string(k) + "] has a prefix outside I_le[" + std::to_string(k - 1) + "]";
            }
        }
        if (k <= d - 2) {
            const auto& next = pivots.j_gt[static_cast<std::size_t>(k)];
            for (const auto& q : cols) {
                MultiIndex tail(q.begin() + 1, q.end());
                if (std::find(next.begin(), next.end(), tail) == next.end())
                    return "J_gt[" + std::to_string(k) + "] has a suffix outside J_gt[" + std::to_string(k + 1) + "]";
            }
        }
    }
    return {};
}

// ---------------------------------------------------------------------------

TTCores::TTCores(std::vector<Index> mode_sizes, std::vector<Index> ranks) : n_(std::move(mode_sizes)), s_(std::move(ranks)) {
    if (n_.empty() || s_.size() != n_.size() + 1)
        throw StructureError("TT cores need d mode sizes and d+1 ranks");
    if (s_.front() != 1 || s_.back() != 1)
        throw StructureError("boundary TT ranks must be 1");
    for (std::size_t k = 0; k < n_.size(); ++k) {
        if (n_[k] < 1 || s_[k] < 1 || s_[k + 1] < 1)
            throw StructureError("TT shapes must be positive");
        data_.emplace_back(static_cast<std::size_t>(s_[k] * n_[k] * s_[k + 1]), 0.0);
    }
}

double& TTCores::at(int k, Index a, Index i, Index b) {
    const auto kk = static_cast<std::size_t>(k);
    return data_.at(kk).at(static_cast<std::size_t>(a + s_[kk] * (i + n_[kk] * b)));
}

double TTCores::at(int k, Index a, Index i, Index b) const {
    const auto kk = static_cast<std::size_t>(k);
    return data_.at(kk).at(static_cast<std::size_t>(a + s_[kk] * (i + n_[kk] * b)));
}

Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>> TTCores::slice(int k, Index i) const {
    const auto kk = static_cast<std::size_t>(k);
    return {data_[kk].data() + s_[kk] * i, s_[kk], s_[kk + 1], Eigen::OuterStride<>(s_[kk] * n_[kk])};
}

double tt_eval(const TTCores& cores, std::span<const Index> idx) {
    if (static_cast<int>(idx.size()) != cores.d())
        throw StructureError("index arity does not match the TT cores");
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
    for (int k = 0; k < cores.d(); ++k) {
        const Index i = idx[static_cast<std::size_t>(k)];
        if (i < 0 || i >= cores.mode_sizes()[static_cast<std::size_t>(k)])
            throw BoundsError("index outside TT mode");
        v = v * cores.slice(k, i);
    }
    return v(0);
}

std::uint64_t SplitMix64::next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Index SplitMix64::below(Index n) noexcept {
    const auto wide = static_cast<unsigned __int128>(next()) * static_cast<std::uint64_t>(n);
    return static_cast<Index>(wide >> 64);
}

double sampled_error(const ElementOracle& oracle, const TTCores& cores, Index samples, std::uint64_t seed) {
    if (samples < 1)
        throw ArgumentError("sample count must be >= 1");
    const auto sizes = oracle.dims().sizes();
    if (!std::equal(sizes.begin(), sizes.end(), cores.mode_sizes().begin(), cores.mode_sizes().end()))
        throw StructureError("TT cores and oracle have different shapes");
    SplitMix64 rng(seed);
    MultiIndex idx(sizes.size());
    double num = 0.0, den = 0.0;
    for (Index t = 0; t < samples; ++t) {
        for (std::size_t j = 0; j < idx.size(); ++j)
            idx[j] = rng.below(sizes[j]);
        const double x = oracle.peek(idx);
        const double e = x - tt_eval(cores, idx);
        num += e * e;
        den += x * x;
    }
    if (den == 0.0)
        throw UndefinedMetricError("all sampled reference values are zero");
    return std::sqrt(num / den);
}

std::vector<std::vector<Index>> rank_schedule(std::span<const Index> targets) {
    std::vector<Index> cur;
    for (Index r : targets) {
        if (r < 1)
            throw ArgumentError("target ranks must be >= 1");
        cur.push_back(std::min<Index>(2, r));
    }
    std::vector<std::vector<Index>> out{cur};
    for (;;) {
        bool moved = false;
        for (std::size_t k = 0; k < cur.size(); ++k) {
            if (cur[k] < targets[k]) {
                ++cur[k];
                moved = true;
            }
        }
        if (!moved)
            break;
        out.push_back(cur);
    }
    return out;
}

double access_fraction(const ElementOracle& oracle) {
    return static_cast<double>(oracle.distinct_evaluations()) / static_cast<double>(oracle.dims().total());
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Index> iota_ids(Index n) {
    std::vector<Index> v(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = i;
    return v;
}

/// Start index for d >= 3: two rounds of fibre-wise argmax |X| from the origin.
MultiIndex find_seed(const Communicator& comm, const ProcessGrid& grid, const ElementOracle& oracle, double& value,
                     PhaseLog* log) {
    const int d = grid.d();
    const auto coords = grid.coords(comm.rank());
    MultiIndex s(static_cast<std::size_t>(d), 0);
    value = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < d; ++j) {
            PhaseMeter meter(comm, log, "seed", 0, pass * d + j);
            bool on_fibre = true;
            for (int l = 0; l < d; ++l)
                if (l != j && grid.owner_coord(l, s[static_cast<std::size_t>(l)]) != coords[static_cast<std::size_t>(l)])
                    on_fibre = false;
            double best_abs = -1.0, best_val = 0.0;
            Index best_i = -1;
            if (on_fibre) {
                MultiIndex t = s;
                for (Index i = 0; i < grid.dims().size(j); ++i) {
                    if (grid.owner_coord(j, i) != coords[static_cast<std::size_t>(j)])
                        continue;
                    t[static_cast<std::size_t>(j)] = i;
                    const double v = oracle(t);
                    if (std::abs(v) > best_abs) {
                        best_abs = std::abs(v);
                        best_val = v;
                        best_i = i;
                    }
                }
            }
            const double mine[3] = {best_val, static_cast<double>(best_i), 0.0};
            const Payload all = comm.allgather(mine);
            double g_abs = -1.0;
            Index g_i = -1;
            for (int r = 0; r < comm.size(); ++r) {
                const auto i = static_cast<Index>(all[3 * static_cast<std::size_t>(r) + 1]);
                const double v = all[3 * static_cast<std::size_t>(r)];
                if (i < 0)
                    continue;
                if (std::abs(v) > g_abs || (std::abs(v) == g_abs && i < g_i)) {
                    g_abs = std::abs(v);
                    g_i = i;
                    value = v;
                }
            }
            s[static_cast<std::size_t>(j)] = g_i;
        }
    }
    if (!(std::abs(value) > 0.0) || !std::isfinite(value))
        throw DegeneratePivotError("tensor vanishes on every seed fibre");
    return s;
}

} // namespace

PivotOutcome find_all_pivots(const Communicator& comm, const ProcessGrid& grid, const ElementOracle& oracle,
                             std::span<const Index> target_ranks, const PivotOptions& options, PhaseLog* log) {
    const int d = grid.d();
    PivotOutcome out;
    if (d < 2)
        return out;
    if (static_cast<int>(target_ranks.size()) != d - 1)
        throw ArgumentError("need one target rank per unfolding (d-1 values)");
    for (Index r : target_ranks)
        if (r < 1)
            throw ArgumentError("target ranks must be >= 1");
    if (comm.size() != grid.ranks())
        throw ArgumentError("communicator size does not match the process grid");

    const DimSpec& dims = grid.dims();
    const auto sizes = dims.sizes();
    std::vector<std::unique_ptr<CrossState>> cross;
    for (int k = 1; k <= d - 1; ++k)
        cross.push_back(std::make_unique<CrossState>(grid, comm.rank(), k, oracle));
    auto& ps = out.pivots;
    ps.i_le.resize(static_cast<std::size_t>(d - 1));
    ps.j_gt.resize(static_cast<std::size_t>(d - 1));
    std::vector<std::vector<Index>> row_ids(static_cast<std::size_t>(d - 1)), col_ids(static_cast<std::size_t>(d - 1));

    auto record = [&](int k, Index row, Index col) {
        const auto kk = static_cast<std::size_t>(k - 1);
        row_ids[kk].push_back(row);
        col_ids[kk].push_back(col);
        ps.i_le[kk].push_back(delinearize(row, sizes.first(static_cast<std::size_t>(k))));
        ps.j_gt[kk].push_back(delinearize(col, sizes.subspan(static_cast<std::size_t>(k))));
    };
    auto notify = [&](int k) {
        if (options.observer && comm.rank() == 0)
            options.observer(ps, k);
    };

    if (d == 2) {
        cross[0]->grow(comm, iota_ids(sizes[0]), iota_ids(sizes[1]), log, 0);
    } else {
        double value = 0.0;
        out.seed = find_seed(comm, grid, oracle, value, log);
        for (int k = 1; k <= d - 1; ++k) {
            const Index row = linearize(std::span<const Index>(out.seed).first(static_cast<std::size_t>(k)),
                                        sizes.first(static_cast<std::size_t>(k)));
            const Index col = linearize(std::span<const Index>(out.seed).subspan(static_cast<std::size_t>(k)),
                                        sizes.subspan(static_cast<std::size_t>(k)));
            cross[static_cast<std::size_t>(k - 1)]->register_pivot(row, col, value, {}, {});
            record(k, row, col);
        }
        for (int k = 1; k <= d - 1; ++k) {
            std::vector<Index> rows, cols;
            if (k == 1) {
                rows = iota_ids(sizes[0]);
            } else {
                const Index stride = dims.rows(k - 1);
                for (Index alpha : row_ids[static_cast<std::size_t>(k - 2)])
                    for (Index i = 0; i < sizes[static_cast<std::size_t>(k - 1)]; ++i)
                        rows.push_back(alpha + stride * i);
            }
            if (k == d - 1) {
                cols = iota_ids(sizes[static_cast<std::size_t>(d - 1)]);
            } else {
                const Index n_next = sizes[static_cast<std::size_t>(k)];
                for (Index beta : col_ids[static_cast<std::size_t>(k)])
                    for (Index i = 0; i < n_next; ++i)
                        cols.push_back(i + n_next * beta);
            }
            cross[static_cast<std::size_t>(k - 1)]->grow(comm, rows, cols, log, 0);
        }
        notify(0);
    }

    int step_no = 0;
    auto try_step = [&](int k) -> bool {
        auto& cs = *cross[static_cast<std::size_t>(k - 1)];
        if (cs.z() >= target_ranks[static_cast<std::size_t>(k - 1)])
            return false;
        ++step_no;
        auto ev = cs.step(comm, log, step_no);
        if (!ev)
            return false;
        record(k, ev->row, ev->col);
        if (k + 1 <= d - 1) {
            std::vector<Index> rows;
            const Index stride = dims.rows(k);
            for (Index i = 0; i < sizes[static_cast<std::size_t>(k)]; ++i)
                rows.push_back(ev->row + stride * i);
            cross[static_cast<std::size_t>(k)]->grow(comm, rows, {}, log, step_no);
        }
        if (k - 1 >= 1) {
            std::vector<Index> cols;
            const Index n_k = sizes[static_cast<std::size_t>(k - 1)];
            for (Index i = 0; i < n_k; ++i)
                cols.push_back(i + n_k * ev->col);
            cross[static_cast<std::size_t>(k - 2)]->grow(comm, {}, cols, log, step_no);
        }
        notify(k);
        return true;
    };

    for (;;) {
        ++out.sweeps;
        bool progress = false;
        for (int k = 1; k <= d - 1; ++k) {
            if (options.per_dimension_complete) {
                while (try_step(k))
                    progress = true;
            } else if (try_step(k)) {
                progress = true;
            }
        }
        if (!progress)
            break;
    }
    for (int k = 1; k <= d - 1; ++k) {
        const Index got = cross[static_cast<std::size_t>(k - 1)]->z();
        const Index want = target_ranks[static_cast<std::size_t>(k - 1)];
        if (got < want)
            out.warnings.push_back("dimension " + std::to_string(k) + ": rank capped at " + std::to_string(got) +
                                   " (requested " + std::to_string(want) + ")");
    }
    return out;
}

std::vector<std::vector<Index>> pivot_column_ids(const PivotSets& pivots, const DimSpec& dims) {
    std::vector<std::vector<Index>> out;
    for (int k = 1; k <= pivots.d() - 1; ++k) {
        std::vector<Index> ids;
        for (const auto& j : pivots.j_gt[static_cast<std::size_t>(k - 1)])
            ids.push_back(linearize(j, dims.sizes().subspan(static_cast<std::size_t>(k))));
        out.push_back(std::move(ids));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kTagChain = 100;
constexpr int kTagElements = 200;
constexpr int kTagCollect = 300;
constexpr int kTagLastCore = 400;

struct SlicedRow {
    Index rho;    ///< alpha + r_{k-1} i_k
    Index global; ///< unfolding-k row id
};

/// Rows of the sliced T_{<=k} grouped by the member (row block) that owns them.
std::vector<std::vector<SlicedRow>> sliced_rows_by_block(const ProcessGrid& grid, int k,
                                                         const std::vector<Index>& prefix_ids) {
    std::vector<std::vector<SlicedRow>> out(static_cast<std::size_t>(grid.row_blocks(k)));
    const Index n_k = grid.dims().size(k - 1);
    const Index stride = k == 1 ? 1 : grid.dims().rows(k - 1);
    const auto r_prev = static_cast<Index>(prefix_ids.size());
    for (Index i = 0; i < n_k; ++i)
        for (Index a = 0; a < r_prev; ++a) {
            const Index global = prefix_ids[static_cast<std::size_t>(a)] + stride * i;
            out[static_cast<std::size_t>(grid.row_block_of(k, global))].push_back({a + r_prev * i, global});
        }
    return out;
}

} // namespace

std::optional<TTCores> build_cores(const Communicator& comm, const ProcessGrid& grid, const CoreGridAssignment& grids,
                                   const ElementOracle& oracle, const PivotSets& pivots, PhaseLog* log) {
    const int d = grid.d();
    const DimSpec& dims = grid.dims();
    const auto sizes = dims.sizes();
    const int me = comm.rank();
    if (comm.size() != grid.ranks())
        throw ArgumentError("communicator size does not match the process grid");
    if (pivots.d() != d && !(d == 1 && pivots.i_le.empty()))
        throw ArgumentError("pivot sets do not match the tensor order");
    if (static_cast<int>(grids.grids.size()) != d - 1)
        throw ArgumentError("core grid assignment does not match the tensor order");
    if (!nestedness_violation(pivots).empty())
        throw StructureError("pivot sets are not nested: " + nestedness_violation(pivots));

    std::vector<Index> r(static_cast<std::size_t>(d + 1), 1);
    std::vector<std::vector<Index>> row_ids(static_cast<std::size_t>(d)); // row_ids[k]: ids of I_{<=k}
    std::vector<std::vector<Index>> col_ids(static_cast<std::size_t>(d)); // col_ids[k]: ids of J_{>k}
    row_ids[0] = {0};
    for (int k = 1; k <= d - 1; ++k) {
        const auto& il = pivots.i_le[static_cast<std::size_t>(k - 1)];
        const auto& jg = pivots.j_gt[static_cast<std::size_t>(k - 1)];
        if (il.empty() || il.size() != jg.size())
            throw StructureError("dimension " + std::to_string(k) + " has no usable pivots");
        r[static_cast<std::size_t>(k)] = static_cast<Index>(il.size());
        for (const auto& p : il)
            row_ids[static_cast<std::size_t>(k)].push_back(linearize(p, sizes.first(static_cast<std::size_t>(k))));
        for (const auto& q : jg)
            col_ids[static_cast<std::size_t>(k)].push_back(linearize(q, sizes.subspan(static_cast<std::size_t>(k))));
    }

    std::optional<TTCores> cores;
    if (me == 0)
        cores.emplace(std::vector<Index>(sizes.begin(), sizes.end()), r);

    std::map<int, std::vector<Index>> rows_as_root; // k -> full I_{<=k} ids held as grid root

    for (int k = 1; k <= d - 1; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const CoreGrid& g = grids.grids[kk - 1];
        const Index rk = r[kk];
        const Index r_prev = r[kk - 1];
        const auto pos = std::find(g.members.begin(), g.members.end(), me);
        const int mi = pos == g.members.end() ? -1 : static_cast<int>(pos - g.members.begin());
        if (static_cast<int>(g.members.size()) != grid.row_blocks(k))
            throw StructureError("core grid for dimension " + std::to_string(k) + " has the wrong size");

        // Lines 6-10: pivot index lists travel root to root and down to members.
        std::optional<Communicator> sub;
        std::vector<Index> prev_ids, cur_rows, cur_cols;
        if (mi >= 0) {
            sub.emplace(comm.subgroup("core" + std::to_string(k), g.members));
            PhaseMeter meter(comm, log, "core_index", k, 0);
            Payload mine(static_cast<std::size_t>(3 * rk), -1.0);
            std::size_t n = 0;
            for (Index z = 0; z < rk; ++z) {
                const Index row = row_ids[kk][static_cast<std::size_t>(z)];
                if (grid.row_block_of(k, row) != mi)
                    continue;
                mine[3 * n] = static_cast<double>(z);
                mine[3 * n + 1] = static_cast<double>(row);
                mine[3 * n + 2] = static_cast<double>(col_ids[kk][static_cast<std::size_t>(z)]);
                ++n;
            }
            const Payload all = sub->gather(0, mine);
            if (sub->rank() == 0) {
                cur_rows.assign(static_cast<std::size_t>(rk), -1);
                cur_cols.assign(static_cast<std::size_t>(rk), -1);
                for (std::size_t t = 0; t + 2 < all.size(); t += 3) {
                    if (all[t] < 0)
                        continue;
                    const auto z = static_cast<std::size_t>(all[t]);
                    cur_rows.at(z) = static_cast<Index>(all[t + 1]);
                    cur_cols.at(z) = static_cast<Index>(all[t + 2]);
                }
                rows_as_root[k] = cur_rows;
                if (k + 1 <= d - 1) {
                    const int next_root = grids.grids[kk].root;
                    if (next_root != me)
                        comm.send(next_root, Payload(cur_rows.begin(), cur_rows.end()), kTagChain + k);
                }
                if (k == 1) {
                    prev_ids = {0};
                } else {
                    const int prev_root = grids.grids[kk - 2].root;
                    if (prev_root == me) {
                        prev_ids = rows_as_root.at(k - 1);
                    } else {
                        const Payload in = comm.receive(prev_root, kTagChain + k - 1);
                        prev_ids.assign(in.begin(), in.end());
                    }
                }
                Payload out;
                out.push_back(static_cast<double>(prev_ids.size()));
                out.insert(out.end(), prev_ids.begin(), prev_ids.end());
                out.insert(out.end(), cur_rows.begin(), cur_rows.end());
                out.insert(out.end(), cur_cols.begin(), cur_cols.end());
                for (int m = 1; m < sub->size(); ++m)
                    sub->send(m, out);
            } else {
                const Payload in = sub->receive(0);
                const auto np = static_cast<std::size_t>(in.at(0));
                prev_ids.assign(in.begin() + 1, in.begin() + 1 + static_cast<std::ptrdiff_t>(np));
                cur_rows.assign(in.begin() + 1 + static_cast<std::ptrdiff_t>(np),
                                in.begin() + 1 + static_cast<std::ptrdiff_t>(np + static_cast<std::size_t>(rk)));
                cur_cols.assign(in.begin() + 1 + static_cast<std::ptrdiff_t>(np + static_cast<std::size_t>(rk)), in.end());
            }
            if (prev_ids != row_ids[kk - 1] || cur_rows != row_ids[kk] || cur_cols != col_ids[kk])
                throw StructureError("pivot lists received for dimension " + std::to_string(k) +
                                     " disagree with the selection");
        }

        // Tensor elements for the pivot core and the member's sliced rows.
        const auto by_block = sliced_rows_by_block(grid, k, row_ids[kk - 1]);
        auto needed_rows = [&](int q) {
            std::vector<Index> rows;
            for (const auto& s : by_block[static_cast<std::size_t>(q)])
                rows.push_back(s.global);
            for (Index z = 0; z < rk; ++z) {
                const Index p = row_ids[kk][static_cast<std::size_t>(z)];
                if (grid.row_block_of(k, p) != q)
                    rows.push_back(p);
            }
            return rows;
        };
        std::unordered_map<Index, std::vector<double>> values; // global row -> A(row, J)
        {
            PhaseMeter meter(comm, log, "core_elements", k, 0);
            for (int q = 0; q < static_cast<int>(g.members.size()); ++q) {
                const int m = g.members[static_cast<std::size_t>(q)];
                if (m == me)
                    continue;
                Payload out;
                for (Index row : needed_rows(q))
                    for (Index s = 0; s < rk; ++s) {
                        const auto idx = from_unfolding(k, row, col_ids[kk][static_cast<std::size_t>(s)], dims);
                        if (grid.owner_rank(idx) == me)
                            out.push_back(oracle(idx));
                    }
                if (!out.empty())
                    comm.send(m, out, kTagElements + k);
            }
            if (mi >= 0) {
                const auto rows = needed_rows(mi);
                std::vector<std::vector<int>> owner(rows.size(), std::vector<int>(static_cast<std::size_t>(rk)));
                std::vector<Index> expect(static_cast<std::size_t>(comm.size()), 0);
                for (std::size_t t = 0; t < rows.size(); ++t)
                    for (Index s = 0; s < rk; ++s) {
                        const auto idx = from_unfolding(k, rows[t], col_ids[kk][static_cast<std::size_t>(s)], dims);
                        const int o = grid.owner_rank(idx);
                        owner[t][static_cast<std::size_t>(s)] = o;
                        ++expect[static_cast<std::size_t>(o)];
                    }
                std::vector<Payload> inbox(static_cast<std::size_t>(comm.size()));
                std::vector<std::size_t> cursor(static_cast<std::size_t>(comm.size()), 0);
                for (int o = 0; o < comm.size(); ++o)
                    if (o != me && expect[static_cast<std::size_t>(o)] > 0) {
                        inbox[static_cast<std::size_t>(o)] = comm.receive(o, kTagElements + k);
                        if (static_cast<Index>(inbox[static_cast<std::size_t>(o)].size()) != expect[static_cast<std::size_t>(o)])
                            throw StructureError("pivot element message has unexpected length");
                    }
                for (std::size_t t = 0; t < rows.size(); ++t) {
                    std::vector<double> vals(static_cast<std::size_t>(rk));
                    for (Index s = 0; s < rk; ++s) {
                        const int o = owner[t][static_cast<std::size_t>(s)];
                        if (o == me)
                            vals[static_cast<std::size_t>(s)] =
                                oracle(from_unfolding(k, rows[t], col_ids[kk][static_cast<std::size_t>(s)], dims));
                        else
                            vals[static_cast<std::size_t>(s)] =
                                inbox[static_cast<std::size_t>(o)][cursor[static_cast<std::size_t>(o)]++];
                    }
                    values.emplace(rows[t], std::move(vals));
                }
            }
        }

        // Distributed T build on the member's sliced rows, then collection on rank 0.
        if (mi >= 0) {
            const auto& mine = by_block[static_cast<std::size_t>(mi)];
            Eigen::MatrixXd a_local(static_cast<Index>(mine.size()), rk), core(rk, rk);
            for (std::size_t t = 0; t < mine.size(); ++t)
                for (Index s = 0; s < rk; ++s)
                    a_local(static_cast<Index>(t), s) = values.at(mine[t].global)[static_cast<std::size_t>(s)];
            std::vector<int> piv_owner(static_cast<std::size_t>(rk));
            std::vector<Index> piv_local(static_cast<std::size_t>(rk), -1);
            for (Index z = 0; z < rk; ++z) {
                const Index p = row_ids[kk][static_cast<std::size_t>(z)];
                for (Index s = 0; s < rk; ++s)
                    core(z, s) = values.at(p)[static_cast<std::size_t>(s)];
                piv_owner[static_cast<std::size_t>(z)] = grid.row_block_of(k, p);
                if (piv_owner[static_cast<std::size_t>(z)] == mi)
                    for (std::size_t t = 0; t < mine.size(); ++t)
                        if (mine[t].global == p)
                            piv_local[static_cast<std::size_t>(z)] = static_cast<Index>(t);
            }
            const Eigen::MatrixXd t = build_T_distributed(*sub, a_local, core, piv_owner, piv_local, k, log);
            PhaseMeter meter(comm, log, "collect", k, 0);
            if (me != 0) {
                if (!mine.empty()) {
                    Payload out;
                    for (Index row = 0; row < t.rows(); ++row)
                        for (Index s = 0; s < rk; ++s)
                            out.push_back(t(row, s));
                    comm.send(0, out, kTagCollect + k);
                }
            } else {
                for (std::size_t row = 0; row < mine.size(); ++row)
                    for (Index s = 0; s < rk; ++s)
                        cores->at(k - 1, mine[row].rho % r_prev, mine[row].rho / r_prev, s) = t(static_cast<Index>(row), s);
            }
        }
        if (me == 0) {
            PhaseMeter meter(comm, log, "collect", k, 1);
            for (int q = 0; q < static_cast<int>(g.members.size()); ++q) {
                const int m = g.members[static_cast<std::size_t>(q)];
                const auto& rows = by_block[static_cast<std::size_t>(q)];
                if (m == 0 || rows.empty())
                    continue;
                const Payload in = comm.receive(m, kTagCollect + k);
                if (in.size() != rows.size() * static_cast<std::size_t>(rk))
                    throw StructureError("collected T rows have unexpected length");
                std::size_t c = 0;
                for (const auto& row : rows)
                    for (Index s = 0; s < rk; ++s)
                        cores->at(k - 1, row.rho % r_prev, row.rho / r_prev, s) = in[c++];
            }
        }
    }

    // Last core: raw elements X(I_{<=d-1}, :), sent by their owners.
    {
        PhaseMeter meter(comm, log, "collect", d, 0);
        const auto& prefixes = row_ids[static_cast<std::size_t>(d - 1)];
        const Index n_d = sizes[static_cast<std::size_t>(d - 1)];
        auto index_of = [&](Index a, Index i) {
            MultiIndex idx = delinearize(prefixes[static_cast<std::size_t>(a)], sizes.first(static_cast<std::size_t>(d - 1)));
            idx.push_back(i);
            return idx;
        };
        const auto r_last = static_cast<Index>(prefixes.size());
        if (me != 0) {
            Payload out;
            for (Index a = 0; a < r_last; ++a)
                for (Index i = 0; i < n_d; ++i) {
                    const auto idx = index_of(a, i);
                    if (grid.owner_rank(idx) == me)
                        out.push_back(oracle(idx));
                }
            if (!out.empty())
                comm.send(0, out, kTagLastCore);
        } else {
            std::vector<Payload> inbox(static_cast<std::size_t>(comm.size()));
            std::vector<std::size_t> cursor(static_cast<std::size_t>(comm.size()), 0);
            std::vector<Index> expect(static_cast<std::size_t>(comm.size()), 0);
            for (Index a = 0; a < r_last; ++a)
                for (Index i = 0; i < n_d; ++i)
                    ++expect[static_cast<std::size_t>(grid.owner_rank(index_of(a, i)))];
            for (int o = 1; o < comm.size(); ++o)
                if (expect[static_cast<std::size_t>(o)] > 0)
                    inbox[static_cast<std::size_t>(o)] = comm.receive(o, kTagLastCore);
            for (Index a = 0; a < r_last; ++a)
                for (Index i = 0; i < n_d; ++i) {
                    const auto idx = index_of(a, i);
                    const int o = grid.owner_rank(idx);
                    cores->at(d - 1, a, i, 0) =
                        o == 0 ? oracle(idx) : inbox[static_cast<std::size_t>(o)].at(cursor[static_cast<std::size_t>(o)]++);
                }
        }
    }
    return cores;
}

// ---------------------------------------------------------------------------

DecomposeResult decompose(const ElementOracle& oracle, const GridConfig& grid_config, const DecomposeOptions& options) {
    const ProcessGrid grid(grid_config);
    if (!(oracle.dims() == grid.dims()))
        throw ConfigError("grid sizes do not match the tensor shape");
    const int ranks = grid.ranks();
    DecomposeResult result;
    result.logs.resize(static_cast<std::size_t>(ranks));
    using clock = std::chrono::steady_clock;

    auto body = [&](Communicator& comm) {
        PhaseLog& log = result.logs[static_cast<std::size_t>(comm.rank())];
        const auto t0 = clock::now();
        PivotOutcome selection = find_all_pivots(comm, grid, oracle, options.ranks, options.pivots, &log);
        comm.barrier();
        const auto t1 = clock::now();
        const auto hits = pivot_column_ids(selection.pivots, grid.dims());
        CoreGridAssignment assignment = choose_core_grids(grid, hits);
        auto cores = build_cores(comm, grid, assignment, oracle, selection.pivots, &log);
        comm.barrier();
        const auto t2 = clock::now();
        if (comm.rank() == 0) {
            result.cores = std::move(*cores);
            result.selection = std::move(selection);
            result.core_grids = std::move(assignment);
            result.seconds_pivots = std::chrono::duration<double>(t1 - t0).count();
            result.seconds_cores = std::chrono::duration<double>(t2 - t1).count();
        }
    };
    result.stats = run_simulated(ranks, body, options.runtime);
    result.access_fraction = access_fraction(oracle);
    return result;
}

} // namespace ttx
