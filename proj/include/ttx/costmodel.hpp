#pragma once

// Closed-form communication volumes (in scalars) for the subtensor TT cross.
// Uniform forms use: d dimensions, P processes and w cells of m indices per
// process and dimension, TT rank r, split position j. The *_general forms take
// per-rank box sizes and process counts directly and reduce to the uniform
// ones when everything is uniform. All arithmetic is exact; overflow throws.

#include <cstdint>
#include <ostream>
#include <span>

namespace ttx::cost {

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
    friend bool operator==(const Rational& a, const Rational& b) noexcept { return a.num * b.den == b.num * a.den; }
    /// Exact comparison of an integer count against the bound.
    friend bool operator<=(std::int64_t count, const Rational& b) noexcept { return count * b.den <= b.num; }
};

/// Elements one rank receives while building T from N pivots: (N-1)(N/2+1).
Rational t_build_recv_bound(std::int64_t n);

/// Elements each rank sends (and receives) in one pivot allgather: 3(P^d - 1).
std::int64_t pivot_allgather_volume(std::int64_t p, std::int64_t d);
/// Same for an arbitrary group of `ranks` members: 3(ranks - 1).
std::int64_t pivot_allgather_volume_general(std::int64_t ranks);

/// Case-4 receive per step: (wm)^j + (wm)^{d-j}.
std::int64_t neighbor_recv_bound(std::int64_t w, std::int64_t m, std::int64_t d, std::int64_t j);
std::int64_t neighbor_recv_bound_general(std::int64_t row_box, std::int64_t col_box);

/// Pivot-owner send per step: (wm)^j (P^j - 1) + (wm)^{d-j} (P^{d-j} - 1).
std::int64_t neighbor_send_bound(std::int64_t w, std::int64_t m, std::int64_t p, std::int64_t d, std::int64_t j);
/// row_box (row_procs - 1) + col_box (col_procs - 1), paired as in the uniform form.
std::int64_t neighbor_send_bound_general(std::int64_t row_box, std::int64_t col_box, std::int64_t row_procs,
                                         std::int64_t col_procs);

/// Pivot-element receive for core construction: (d-1) r^2 + r sum_{j<d} (wm)^j.
std::int64_t bridge_recv_bound(std::int64_t d, std::int64_t r, std::int64_t w, std::int64_t m);
/// sum_k r_k^2 + r_k box_k over k = 1..d-1.
std::int64_t bridge_recv_bound_general(std::span<const std::int64_t> ranks, std::span<const std::int64_t> boxes);

struct CostQuery {
    std::int64_t d = 3, r = 2, w = 1, m = 4, p = 2, n_pivots = 5;
};

/// CSV table (bound,j,value) for every bound at the query point.
void write_cost_table(std::ostream& out, const CostQuery& q);

} // namespace ttx::cost
