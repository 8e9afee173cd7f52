#include <doctest.h>

#include <random>

#include "ttx/aca.hpp"
#include "ttx/models.hpp"

using namespace ttx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd two_by_two() {
    MatrixXd a(2, 2);
    a << 2, 1, 1, 1;
    return a;
}

MatrixXd hilbert(Index n) {
    MatrixXd h(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            h(i, j) = models::hilbert_matrix(i, j);
    return h;
}

double rel(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / b.norm(); }

} // namespace

TEST_CASE("greedy pivot picks the largest residual with colex ties") {
    MatrixXd r(2, 2);
    r << 0, 0, 0, 0.5;
    auto p = aca::greedy_pivot(r);
    REQUIRE(p);
    CHECK(p->row == 1);
    CHECK(p->col == 1);
    CHECK(p->value == 0.5);

    r << -3, 1, 2, 1;
    p = aca::greedy_pivot(r);
    REQUIRE(p);
    CHECK(p->row == 0);
    CHECK(p->col == 0);
    CHECK(p->value == -3);

    r << 1, 1, 1, 1;
    p = aca::greedy_pivot(r);
    REQUIRE(p);
    CHECK(p->row == 0);
    CHECK(p->col == 0);

    const Index rows[] = {0};
    const Index cols[] = {0};
    p = aca::greedy_pivot(r, rows, cols);
    REQUIRE(p);
    CHECK(p->row == 1);
    CHECK(p->col == 1);

    const Index both[] = {0, 1};
    CHECK_FALSE(aca::greedy_pivot(r, both, {}));
    CHECK_FALSE(aca::greedy_pivot(MatrixXd::Zero(3, 3)));
}

TEST_CASE("two by two residual update reproduces A") {
    const MatrixXd a = two_by_two();
    MatrixXd approx = MatrixXd::Zero(2, 2);
    MatrixXd e = a - approx;
    aca::residual_update(approx, VectorXd(e.col(0)), VectorXd(e.row(0).transpose()), e(0, 0));
    MatrixXd expect(2, 2);
    expect << 2, 1, 1, 0.5;
    CHECK(approx.isApprox(expect, 0));
    e = a - approx;
    CHECK(e(1, 1) == 0.5);
    aca::residual_update(approx, VectorXd(e.col(1)), VectorXd(e.row(1).transpose()), e(1, 1));
    CHECK(approx == a);

    CHECK_THROWS_AS(aca::residual_update(approx, VectorXd(VectorXd::Zero(2)), VectorXd(VectorXd::Zero(2)), 0.0),
                    DegeneratePivotError);
}

TEST_CASE("rank-1 matrix is exact after one pivot") {
    VectorXd u(4), v(3);
    u << 1, -2, 3, 0.5;
    v << 2, 1, -1;
    const MatrixXd a = u * v.transpose();
    auto st = aca::cross_approximate(a, 3);
    CHECK(st.z == 1);
    CHECK((a - st.approx).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("T update with the corrected sign") {
    const MatrixXd a = two_by_two();
    MatrixXd t1(2, 1);
    t1 << 1, 0.5;
    VectorXd piv(1), trow(1);
    piv << a(0, 1);
    trow << t1(1, 0);
    const double delta = aca::compute_delta(trow, piv, a(1, 1));
    CHECK(delta == 2.0);
    VectorXd col = a.col(1);
    const MatrixXd t2 = aca::t_update(t1, col, piv, trow, delta);
    CHECK(t2.isApprox(MatrixXd::Identity(2, 2)));

    const Index rows[] = {0, 1};
    CHECK(aca::direct_t(a, rows, rows).isApprox(MatrixXd::Identity(2, 2)));

    MatrixXd diag = MatrixXd::Zero(2, 2);
    diag(0, 0) = 3;
    diag(1, 1) = 5;
    VectorXd t_row(1), p(1);
    t_row << 0.0;
    p << 0.0;
    CHECK(aca::compute_delta(t_row, p, 5.0) == doctest::Approx(0.2));

    // Rank-1 matrix: the second denominator vanishes.
    MatrixXd ones = MatrixXd::Ones(2, 2);
    t_row << 1.0;
    p << 1.0;
    CHECK_THROWS_AS(aca::compute_delta(t_row, p, ones(1, 1)), DegeneratePivotError);
}

TEST_CASE("one pivot normalizes T at the pivot row") {
    const MatrixXd h = hilbert(6);
    auto st = aca::cross_approximate(h, 1);
    REQUIRE(st.z == 1);
    CHECK(st.tmat(st.pivots.rows[0], 0) == 1.0);
}

TEST_CASE("iterative state matches direct oracles on random rank-4 matrices") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 10; ++trial) {
        MatrixXd l(8, 4), r(4, 8);
        for (Index i = 0; i < l.size(); ++i)
            l.data()[i] = g(rng);
        for (Index i = 0; i < r.size(); ++i)
            r.data()[i] = g(rng);
        const MatrixXd a = l * r;
        aca::AcaState<double> st(8, 8);
        for (int z = 0; z < 4; ++z) {
            REQUIRE(aca::aca_step(st, a));
            const auto cur = aca::direct_cur(a, st.pivots.rows, st.pivots.cols);
            CHECK(rel(st.approx, cur) < 1e-10);
            const auto t = aca::direct_t(a, st.pivots.rows, st.pivots.cols);
            CHECK((st.tmat - t).norm() / t.norm() < 1e-10);
            // T A(I,:) reproduces the approximation.
            MatrixXd ai(st.z, 8);
            for (Index s = 0; s < st.z; ++s)
                ai.row(s) = a.row(st.pivots.rows[static_cast<std::size_t>(s)]);
            CHECK(rel(st.tmat * ai, st.approx) < 1e-10);
            // Interpolation on the cross.
            for (Index s = 0; s < st.z; ++s) {
                const Index i = st.pivots.rows[static_cast<std::size_t>(s)];
                const Index j = st.pivots.cols[static_cast<std::size_t>(s)];
                CHECK((st.approx.row(i) - a.row(i)).norm() <= 1e-10 * a.norm());
                CHECK((st.approx.col(j) - a.col(j)).norm() <= 1e-10 * a.norm());
            }
        }
        CHECK((a - st.approx).norm() / a.norm() < 1e-12);
    }
}

TEST_CASE("direct CUR on full index sets returns A") {
    const MatrixXd a = two_by_two();
    const Index all[] = {0, 1};
    CHECK(aca::direct_cur(a, all, all).isApprox(a));
    CHECK(aca::direct_cur(a, all, all, aca::CurMethod::explicit_inverse).isApprox(a));
    const MatrixXd ones = MatrixXd::Ones(2, 2);
    CHECK_THROWS_AS(aca::direct_cur(ones, all, all), SingularCoreError);
}

TEST_CASE("Hilbert 100 reaches machine precision with the iterative update") {
    const MatrixXd h = hilbert(100);
    auto st = aca::cross_approximate(h, 30);
    CHECK(rel(st.approx, h) <= 1e-12);
}

TEST_CASE("tolerance stop") {
    const MatrixXd h = hilbert(30);
    aca::AcaOptions opt;
    opt.tolerance = 1e-6;
    auto st = aca::cross_approximate(h, 30, opt);
    CHECK(st.z < 30);
    CHECK(st.z > 2);
}
