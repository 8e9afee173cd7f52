// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Thresholds for 6 and 7 come from pilot runs
// (observed 1.92e-6 and 1.13e-6) with roughly 5x headroom.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "ttx/aca.hpp"
#include "ttx/cli.hpp"
#include "ttx/costmodel.hpp"
#include "ttx/io.hpp"
#include "ttx/models.hpp"
#include "ttx/ttcross.hpp"

using namespace ttx;
using Eigen::MatrixXd;

namespace {

constexpr double kHilbert6Threshold = 1e-5;
constexpr double kMaxwellianThreshold = 1e-5;

struct Verdict {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            if (ok)
                detail = what;
            ok = false;
        }
    }
};

double rel(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / b.norm(); }

GridConfig uniform(std::vector<Index> sizes, std::vector<int> procs) {
    return GridConfig{std::move(sizes), procs, procs};
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

std::string container_bytes(const TTCores& c) {
    std::ostringstream out;
    io::write_container(out, c);
    return out.str();
}

double max_abs_diff(const TTCores& a, const TTCores& b) {
    if (a.ranks() != b.ranks() || a.mode_sizes() != b.mode_sizes())
        return INFINITY;
    double m = 0.0;
    for (int k = 0; k < a.d(); ++k) {
        const auto x = a.raw(k), y = b.raw(k);
        for (std::size_t t = 0; t < x.size(); ++t)
            m = std::max(m, std::abs(x[t] - y[t]));
    }
    return m;
}

// ---------------------------------------------------------------- 1

Verdict criterion1() {
    Verdict v;
    const Index n = 100;
    MatrixXd h(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            h(i, j) = models::hilbert_matrix(i, j);
    const auto st = aca::cross_approximate(h, 30);
    const double iter = rel(st.approx, h);
    const auto direct = aca::direct_greedy_errors(h, 30, aca::CurMethod::explicit_inverse);
    v.require(!direct.empty(), "direct baseline produced no steps");
    if (direct.empty())
        return v;
    // A baseline that stops early (singular core) never reaches rank 30; its
    // last error stands in.
    const double direct30 = direct.back();
    bool non_monotone = false;
    for (std::size_t z = 12; z < direct.size(); ++z)
        if (direct[z] > direct[z - 1])
            non_monotone = true;
    v.require(iter <= 1e-12, "iterative error " + fmt(iter) + " > 1e-12");
    v.require(direct30 >= 100 * iter, "direct error " + fmt(direct30) + " not 100x worse");
    v.require(non_monotone, "direct baseline improves monotonically past rank 12");
    if (v.ok)
        v.detail = "iterative " + fmt(iter) + ", direct " + fmt(direct30) + " at rank " +
                   std::to_string(direct.size());
    return v;
}

// ---------------------------------------------------------------- 2

Verdict criterion2() {
    Verdict v;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<Index> dim(2, 40), rk(1, 8);
    int accepted = 0;
    double worst_a = 0.0, worst_t = 0.0;
    while (accepted < 120) {
        const Index m = dim(rng), n = dim(rng);
        const Index r = std::min({rk(rng), m, n});
        MatrixXd l(m, r), q(r, n);
        for (Index i = 0; i < l.size(); ++i)
            l.data()[i] = g(rng);
        for (Index i = 0; i < q.size(); ++i)
            q.data()[i] = g(rng);
        const MatrixXd a = l * q;
        aca::AcaState<double> st(m, n);
        std::vector<double> errs_a, errs_t;
        bool conditioned = true;
        while (st.z < r && aca::aca_step(st, a)) {
            MatrixXd core(st.z, st.z);
            for (Index s = 0; s < st.z; ++s)
                for (Index t = 0; t < st.z; ++t)
                    core(s, t) = a(st.pivots.rows[static_cast<std::size_t>(s)], st.pivots.cols[static_cast<std::size_t>(t)]);
            const Eigen::JacobiSVD<MatrixXd> svd(core);
            const auto sv = svd.singularValues();
            if (sv(sv.size() - 1) == 0.0 || sv(0) / sv(sv.size() - 1) >= 1e8) {
                conditioned = false;
                break;
            }
            errs_a.push_back(rel(st.approx, aca::direct_cur(a, st.pivots.rows, st.pivots.cols)));
            const MatrixXd t = aca::direct_t(a, st.pivots.rows, st.pivots.cols);
            errs_t.push_back(rel(st.tmat, t));
        }
        if (!conditioned || st.z != r)
            continue;
        ++accepted;
        for (double e : errs_a)
            worst_a = std::max(worst_a, e);
        for (double e : errs_t)
            worst_t = std::max(worst_t, e);
    }
    v.require(worst_a <= 1e-10, "approximation mismatch " + fmt(worst_a));
    v.require(worst_t <= 1e-10, "T mismatch " + fmt(worst_t));
    if (v.ok)
        v.detail = std::to_string(accepted) + " matrices, worst approx " + fmt(worst_a) + ", worst T " + fmt(worst_t);
    return v;
}

// ---------------------------------------------------------------- 3

MultiIndex concat(const MultiIndex& a, Index i, const MultiIndex& b) {
    MultiIndex out = a;
    out.push_back(i);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

Verdict criterion3() {
    Verdict v;
    const DimSpec dims({40, 40, 40});
    auto oracle = models::make_hilbert(dims);
    DecomposeOptions opt;
    opt.ranks = {5, 5};
    int steps = 0, nested = 0;
    opt.pivots.observer = [&](const PivotSets& p, int) {
        ++steps;
        if (nestedness_violation(p).empty())
            ++nested;
    };
    const auto r = decompose(*oracle, uniform({40, 40, 40}, {1, 1, 1}), opt);
    v.require(r.cores.ranks() == std::vector<Index>{1, 5, 5, 1}, "unexpected core ranks");
    v.require(steps > 0 && nested == steps, "nestedness broken at some step");
    v.require(nestedness_violation(r.selection.pivots).empty(), "final sets not nested");
    const auto& p = r.selection.pivots;
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
        const std::vector<MultiIndex> left = k == 0 ? std::vector<MultiIndex>{{}} : p.i_le[static_cast<std::size_t>(k - 1)];
        const std::vector<MultiIndex> right = k == 2 ? std::vector<MultiIndex>{{}} : p.j_gt[static_cast<std::size_t>(k)];
        for (const auto& l : left)
            for (const auto& rt : right)
                for (Index i = 0; i < 40; ++i) {
                    const auto idx = concat(l, i, rt);
                    const double x = oracle->peek(idx);
                    worst = std::max(worst, std::abs(tt_eval(r.cores, idx) - x) / std::abs(x));
                }
    }
    v.require(worst <= 1e-9, "fibre interpolation error " + fmt(worst));
    if (v.ok)
        v.detail = "worst fibre error " + fmt(worst) + ", " + std::to_string(steps) + " nested steps";
    return v;
}

// ---------------------------------------------------------------- 4, 5, 8

struct Case {
    std::string name;
    std::function<std::unique_ptr<ElementOracle>()> make;
    std::vector<Index> sizes;
    std::vector<Index> ranks;
    std::vector<std::vector<int>> grids; ///< first one is the serial reference
};

std::vector<Case> equivalence_cases() {
    return {
        {"hilbert40", [] { return models::make_hilbert(DimSpec({40, 40, 40})); }, {40, 40, 40}, {5, 5},
         {{1, 1, 1}, {1, 2, 1}, {2, 2, 2}, {1, 4, 1}}},
        {"maxwellian32",
         [] { return models::make_maxwellian(models::MaxwellianConfig::standard_2d2v(32)); },
         {64, 32, 64, 32},
         {10, 5, 20},
         {{1, 1, 1, 1}, {2, 1, 2, 1}}},
    };
}

struct Run {
    std::string case_name;
    std::vector<int> procs;
    DecomposeResult result;
};

std::vector<Run> run_equivalence() {
    std::vector<Run> runs;
    for (const auto& c : equivalence_cases())
        for (const auto& procs : c.grids) {
            auto oracle = c.make();
            DecomposeOptions opt;
            opt.ranks = c.ranks;
            runs.push_back({c.name, procs, decompose(*oracle, uniform(c.sizes, procs), opt)});
        }
    return runs;
}

Verdict criterion4(const std::vector<Run>& runs, double seconds) {
    Verdict v;
    const Run* ref = nullptr;
    double worst = 0.0;
    for (const auto& run : runs) {
        if (!ref || ref->case_name != run.case_name) {
            ref = &run;
            continue;
        }
        v.require(run.result.selection.pivots == ref->result.selection.pivots,
                  run.case_name + ": pivots differ on a distributed grid");
        const double diff = max_abs_diff(run.result.cores, ref->result.cores);
        worst = std::max(worst, diff);
        v.require(diff <= 1e-12, run.case_name + ": cores differ by " + fmt(diff));
    }
    v.require(seconds < 60.0, "runs took " + fmt(seconds) + " s");
    if (v.ok)
        v.detail = std::to_string(runs.size()) + " runs, worst core diff " + fmt(worst) + ", " + fmt(seconds) + " s";
    return v;
}

Verdict criterion5(const std::vector<Run>& runs) {
    Verdict v;
    std::size_t checked = 0;
    for (const auto& run : runs) {
        const auto& res = run.result;
        const ProcessGrid grid(uniform(res.cores.mode_sizes(), run.procs));
        const int nranks = grid.ranks();
        const int d = grid.d();
        const auto ranks = res.cores.ranks();
        const std::string tag = run.case_name + " grid " + std::to_string(nranks) + " ranks";
        for (int rank = 0; rank < nranks; ++rank) {
            // Owned index counts of the rank's unfolding-k row and column boxes.
            std::vector<std::int64_t> row_box(static_cast<std::size_t>(d)), col_box(static_cast<std::size_t>(d));
            for (int k = 1; k < d; ++k) {
                std::int64_t rb = 1, cb = 1;
                for (int j = 0; j < d; ++j)
                    (j < k ? rb : cb) *= grid.owned_count(rank, j);
                row_box[static_cast<std::size_t>(k)] = rb;
                col_box[static_cast<std::size_t>(k)] = cb;
            }
            std::uint64_t bridge = 0;
            for (const auto& rec : res.logs[static_cast<std::size_t>(rank)]) {
                const auto& t = rec.traffic;
                if (rec.phase == "allgather") {
                    const auto want = static_cast<std::uint64_t>(cost::pivot_allgather_volume_general(nranks));
                    v.require(t.elements_sent == want && t.elements_received == want,
                              tag + ": allgather volume differs from 3(R-1)");
                } else if (rec.phase == "neighbor") {
                    const auto k = static_cast<std::size_t>(rec.k);
                    const auto recv = cost::neighbor_recv_bound_general(row_box[k], col_box[k]);
                    const auto send = cost::neighbor_send_bound_general(row_box[k], col_box[k],
                                                                        grid.row_blocks(rec.k), grid.col_blocks(rec.k));
                    v.require(static_cast<std::int64_t>(t.elements_received) <= recv, tag + ": neighbour receive bound");
                    v.require(static_cast<std::int64_t>(t.elements_sent) <= send, tag + ": neighbour send bound");
                } else if (rec.phase == "core_elements") {
                    bridge += t.elements_received;
                } else if (rec.phase == "t_build") {
                    const auto bound = cost::t_build_recv_bound(ranks[static_cast<std::size_t>(rec.k)]);
                    v.require(static_cast<std::int64_t>(t.elements_received) <= bound, tag + ": T build bound");
                } else {
                    continue;
                }
                ++checked;
            }
            // Pivot-element receive, summed over the core grids this rank serves.
            std::vector<std::int64_t> rk, boxes;
            for (int k = 1; k < d; ++k) {
                const auto& members = res.core_grids.grids[static_cast<std::size_t>(k - 1)].members;
                if (std::find(members.begin(), members.end(), rank) == members.end())
                    continue;
                rk.push_back(ranks[static_cast<std::size_t>(k)]);
                boxes.push_back(ranks[static_cast<std::size_t>(k - 1)] * grid.owned_count(rank, k - 1));
            }
            v.require(static_cast<std::int64_t>(bridge) <= cost::bridge_recv_bound_general(rk, boxes),
                      tag + ": pivot-element receive bound");
        }
    }
    v.require(checked > 0, "no phase records found");
    if (v.ok)
        v.detail = std::to_string(checked) + " phase records within bounds";
    return v;
}

// ---------------------------------------------------------------- 6

Verdict criterion6() {
    Verdict v;
    const std::vector<Index> sizes(6, 20);
    auto oracle = models::make_hilbert(DimSpec(sizes));
    DecomposeOptions opt;
    opt.ranks = {8, 10, 10, 10, 8};
    const auto r = decompose(*oracle, uniform(sizes, {2, 1, 1, 1, 1, 2}), opt);
    const double err = sampled_error(*oracle, r.cores, 10000, 1);
    v.require(r.cores.ranks() == std::vector<Index>{1, 8, 10, 10, 10, 8, 1}, "ranks not reached");
    v.require(err <= kHilbert6Threshold, "sampled error " + fmt(err));
    v.require(r.access_fraction < 0.01, "access fraction " + fmt(r.access_fraction));
    if (v.ok)
        v.detail = "sampled error " + fmt(err) + ", access " + fmt(100 * r.access_fraction) + "%";
    return v;
}

// ---------------------------------------------------------------- 7

Verdict criterion7() {
    Verdict v;
    const auto cfg = models::MaxwellianConfig::standard_2d2v(32);
    const std::vector<Index> targets{10, 5, 20};
    double prev = INFINITY, last = INFINITY;
    std::size_t steps = 0;
    for (const auto& ranks : rank_schedule(targets)) {
        auto oracle = models::make_maxwellian(cfg);
        DecomposeOptions opt;
        opt.ranks = ranks;
        const auto r = decompose(*oracle, uniform(cfg.sizes, {2, 1, 2, 1}), opt);
        last = sampled_error(*oracle, r.cores, 10000, 1);
        v.require(last <= 10 * prev, "error rose more than 10x at schedule step " + std::to_string(steps));
        prev = last;
        ++steps;
    }
    v.require(last <= kMaxwellianThreshold, "final sampled error " + fmt(last));
    if (v.ok)
        v.detail = std::to_string(steps) + " schedule steps, final error " + fmt(last);
    return v;
}

// ---------------------------------------------------------------- 8

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string sweep_csv(const std::filesystem::path& dir, int rep) {
    const auto out = (dir / ("sweep" + std::to_string(rep) + ".csv")).string();
    std::vector<std::string> args{"ttx", "sweep", "--model", "hilbert", "--dims", "3", "--sizes", "40", "--ranks",
                                  "5,5", "--grid", "2,2,2", "--samples", "2000", "--out", out};
    std::vector<char*> argv;
    for (auto& a : args)
        argv.push_back(a.data());
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    const int rc = cli::run_cli(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old);
    return rc == 0 ? slurp(out) : std::string();
}

Verdict criterion8(const std::vector<Run>& first) {
    Verdict v;
    std::vector<std::string> reference;
    for (const auto& run : first)
        reference.push_back(container_bytes(run.result.cores));
    for (int rep = 0; rep < 2; ++rep) {
        const auto again = run_equivalence();
        for (std::size_t t = 0; t < again.size(); ++t)
            v.require(container_bytes(again[t].result.cores) == reference[t],
                      again[t].case_name + ": container bytes changed on repeat");
    }
    const auto dir = std::filesystem::temp_directory_path() / ("ttx_accept_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const std::string csv0 = sweep_csv(dir, 0);
    v.require(!csv0.empty(), "sweep command failed");
    for (int rep = 1; rep < 3; ++rep)
        v.require(sweep_csv(dir, rep) == csv0, "sweep CSV changed on repeat");
    std::filesystem::remove_all(dir);
    if (v.ok)
        v.detail = std::to_string(3 * first.size()) + " containers and 3 sweep CSVs identical";
    return v;
}

} // namespace

int main() {
    int failed = 0;
    auto report = [&](int id, const Verdict& v) {
        std::cout << "criterion " << id << ": " << (v.ok ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
        failed += v.ok ? 0 : 1;
    };
    report(1, criterion1());
    report(2, criterion2());
    report(3, criterion3());
    const auto t0 = std::chrono::steady_clock::now();
    const auto runs = run_equivalence();
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(4, criterion4(runs, seconds));
    report(5, criterion5(runs));
    report(6, criterion6());
    report(7, criterion7());
    report(8, criterion8(runs));
    return failed == 0 ? 0 : 1;
}
