#include "ttx/costmodel.hpp"

#include <numeric>
#include <string>
#include <vector>

#include "ttx/errors.hpp"

namespace ttx::cost {

namespace {

std::int64_t mul(std::int64_t a, std::int64_t b) {
    std::int64_t out;
    if (__builtin_mul_overflow(a, b, &out))
        throw ArgumentError("cost bound overflows 64-bit arithmetic");
    return out;
}

std::int64_t add(std::int64_t a, std::int64_t b) {
    std::int64_t out;
    if (__builtin_add_overflow(a, b, &out))
        throw ArgumentError("cost bound overflows 64-bit arithmetic");
    return out;
}

std::int64_t ipow(std::int64_t base, std::int64_t e) {
    if (e < 0)
        throw ArgumentError("negative exponent");
    std::int64_t r = 1;
    for (std::int64_t i = 0; i < e; ++i)
        r = mul(r, base);
    return r;
}

void need_positive(std::int64_t v, const char* name) {
    if (v < 1)
        throw ArgumentError(std::string(name) + " must be >= 1");
}

void need_split(std::int64_t d, std::int64_t j) {
    need_positive(d, "d");
    if (j < 0 || j > d)
        throw ArgumentError("split position outside [0, d]");
}

} // namespace

Rational t_build_recv_bound(std::int64_t n) {
    need_positive(n, "N");
    // (N-1)(N/2+1) = (N-1)(N+2)/2
    Rational r{mul(n - 1, n + 2), 2};
    const std::int64_t g = std::gcd(r.num, r.den);
    if (g > 1) {
        r.num /= g;
        r.den /= g;
    }
    return r;
}

std::int64_t pivot_allgather_volume(std::int64_t p, std::int64_t d) {
    need_positive(p, "P");
    need_positive(d, "d");
    return mul(3, ipow(p, d) - 1);
}

std::int64_t pivot_allgather_volume_general(std::int64_t ranks) {
    need_positive(ranks, "rank count");
    return mul(3, ranks - 1);
}

std::int64_t neighbor_recv_bound(std::int64_t w, std::int64_t m, std::int64_t d, std::int64_t j) {
    need_positive(w, "w");
    need_positive(m, "m");
    need_split(d, j);
    const std::int64_t wm = mul(w, m);
    return neighbor_recv_bound_general(ipow(wm, j), ipow(wm, d - j));
}

std::int64_t neighbor_recv_bound_general(std::int64_t row_box, std::int64_t col_box) { return add(row_box, col_box); }

std::int64_t neighbor_send_bound(std::int64_t w, std::int64_t m, std::int64_t p, std::int64_t d, std::int64_t j) {
    need_positive(w, "w");
    need_positive(m, "m");
    need_positive(p, "P");
    need_split(d, j);
    const std::int64_t wm = mul(w, m);
    return neighbor_send_bound_general(ipow(wm, j), ipow(wm, d - j), ipow(p, j), ipow(p, d - j));
}

std::int64_t neighbor_send_bound_general(std::int64_t row_box, std::int64_t col_box, std::int64_t row_procs,
                                         std::int64_t col_procs) {
    return add(mul(row_box, row_procs - 1), mul(col_box, col_procs - 1));
}

std::int64_t bridge_recv_bound(std::int64_t d, std::int64_t r, std::int64_t w, std::int64_t m) {
    need_positive(d, "d");
    need_positive(w, "w");
    need_positive(m, "m");
    if (r < 0)
        throw ArgumentError("rank must be >= 0");
    std::vector<std::int64_t> ranks, boxes;
    const std::int64_t wm = mul(w, m);
    for (std::int64_t j = 1; j <= d - 1; ++j) {
        ranks.push_back(r);
        boxes.push_back(ipow(wm, j));
    }
    return bridge_recv_bound_general(ranks, boxes);
}

std::int64_t bridge_recv_bound_general(std::span<const std::int64_t> ranks, std::span<const std::int64_t> boxes) {
    if (ranks.size() != boxes.size())
        throw ArgumentError("one box size per rank expected");
    std::int64_t total = 0;
    for (std::size_t k = 0; k < ranks.size(); ++k)
        total = add(total, add(mul(ranks[k], ranks[k]), mul(ranks[k], boxes[k])));
    return total;
}

void write_cost_table(std::ostream& out, const CostQuery& q) {
    out << "bound,j,value\n";
    const Rational t = t_build_recv_bound(q.n_pivots);
    out << "t_build_recv,," << t.value() << '\n';
    out << "pivot_allgather,," << pivot_allgather_volume(q.p, q.d) << '\n';
    for (std::int64_t j = 1; j <= q.d - 1; ++j)
        out << "neighbor_recv," << j << ',' << neighbor_recv_bound(q.w, q.m, q.d, j) << '\n';
    for (std::int64_t j = 1; j <= q.d - 1; ++j)
        out << "neighbor_send," << j << ',' << neighbor_send_bound(q.w, q.m, q.p, q.d, j) << '\n';
    out << "bridge_recv,," << bridge_recv_bound(q.d, q.r, q.w, q.m) << '\n';
}

} // namespace ttx::cost
