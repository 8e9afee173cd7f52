#pragma once

// Serial adaptive cross approximation on dense Eigen matrices.
//
// Conventions used throughout the library:
//   residual  E_z = A - A~_z
//   update    A~_{z+1} = A~_z + E_z(:,j) E_z(i,:) / E_z(i,j)
//   T-form    T_z = A(:,J) A(I,J)^{-1},  A~_z = T_z A(I,:)
//             T_{z+1} = [T_z + delta s T_z(i,:),  -delta s],  s = T_z A(I,j) - A(:,j)
//             delta^{-1} = A(i,j) - T_z(i,:) A(I,j)
// Note the "+" in the T recursion: regrouping the coefficient of A(I,:) in
// the expanded product C_{z+1} U_{z+1} R_{z+1} gives +delta s T_z(i,:).
//
// Order-sensitive reductions are written as explicit loops. The distributed
// code evaluates the same expressions in the same order, which is what makes
// serial and distributed runs agree bit for bit.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ttx/errors.hpp"
#include "ttx/tensor.hpp"

namespace ttx::aca {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One rank-1 contribution u v / p. Every code path accumulates approximations
/// through this function so the rounding is identical everywhere.
template <typename Scalar>
inline Scalar rank1_term(Scalar u, Scalar v, Scalar p) noexcept {
    return u * v / p;
}

/// |pivot| at or below this value stops enrichment.
template <typename Scalar>
inline Scalar degeneracy_floor(Scalar reference) noexcept {
    using std::abs;
    return Scalar(1e3) * std::numeric_limits<Scalar>::epsilon() * abs(reference);
}

template <typename Scalar>
struct CrossPivots {
    std::vector<Index> rows;
    std::vector<Index> cols;
    std::vector<Scalar> deltas;

    std::size_t size() const noexcept { return rows.size(); }
};

template <typename Scalar>
struct PivotChoice {
    Index row = 0;
    Index col = 0;
    Scalar value = 0;
};

/// True when (row_a, col_a) precedes (row_b, col_b) in colex order of the pair
/// (column index is the slower one).
inline bool colex_before(Index row_a, Index col_a, Index row_b, Index col_b) noexcept {
    return col_a != col_b ? col_a < col_b : row_a < row_b;
}

namespace detail {
inline bool listed(std::span<const Index> list, Index v) noexcept {
    for (Index x : list)
        if (x == v)
            return true;
    return false;
}
} // namespace detail

/// Largest |residual| outside the forbidden rows/columns; ties go to the
/// smallest colex (i, j). Returns nullopt when nothing is left above `floor`.
template <typename Derived>
std::optional<PivotChoice<typename Derived::Scalar>>
greedy_pivot(const Eigen::MatrixBase<Derived>& residual, std::span<const Index> forbidden_rows = {},
             std::span<const Index> forbidden_cols = {}, typename Derived::Scalar floor = 0) {
    using Scalar = typename Derived::Scalar;
    using std::abs;
    if (residual.rows() == 0 || residual.cols() == 0)
        throw ArgumentError("greedy_pivot on an empty block");
    std::optional<PivotChoice<Scalar>> best;
    Scalar best_abs = -1;
    for (Index j = 0; j < residual.cols(); ++j) {
        if (detail::listed(forbidden_cols, j))
            continue;
        for (Index i = 0; i < residual.rows(); ++i) {
            if (detail::listed(forbidden_rows, i))
                continue;
            const Scalar v = residual(i, j);
            if (abs(v) > best_abs) {
                best_abs = abs(v);
                best = PivotChoice<Scalar>{i, j, v};
            }
        }
    }
    if (!best || !(best_abs > floor))
        return std::nullopt;
    return best;
}

/// approx += col * row / pivot, in place on any writable dense expression.
template <typename DerivedA, typename DerivedC, typename DerivedR>
void residual_update(Eigen::MatrixBase<DerivedA>& approx, const Eigen::MatrixBase<DerivedC>& pivot_col,
                     const Eigen::MatrixBase<DerivedR>& pivot_row, typename DerivedA::Scalar pivot,
                     typename DerivedA::Scalar floor = 0) {
    using std::abs;
    if (!(abs(pivot) > floor) || !std::isfinite(pivot))
        throw DegeneratePivotError("degenerate pivot in residual update");
    if (pivot_col.size() != approx.rows() || pivot_row.size() != approx.cols())
        throw StructureError("residual_update: fiber lengths do not match the block");
    for (Index c = 0; c < approx.cols(); ++c)
        for (Index r = 0; r < approx.rows(); ++r)
            approx(r, c) += rank1_term(pivot_col(r), pivot_row(c), pivot);
}

/// delta = 1 / (a_ij - T(i,:) . A(I,j)).
template <typename DerivedT, typename DerivedA>
typename DerivedT::Scalar compute_delta(const Eigen::MatrixBase<DerivedT>& t_pivot_row,
                                        const Eigen::MatrixBase<DerivedA>& a_pivot_col,
                                        typename DerivedT::Scalar a_ij, typename DerivedT::Scalar floor = 0) {
    using Scalar = typename DerivedT::Scalar;
    using std::abs;
    if (t_pivot_row.size() != a_pivot_col.size())
        throw StructureError("compute_delta: length mismatch");
    Scalar dot = 0;
    for (Index c = 0; c < t_pivot_row.size(); ++c)
        dot += t_pivot_row(c) * a_pivot_col(c);
    const Scalar denom = a_ij - dot;
    if (!(abs(denom) > floor) || !std::isfinite(denom))
        throw DegeneratePivotError("delta denominator vanished");
    return Scalar(1) / denom;
}

/// In-place T-row update for a block of rows. `t` holds T_z(K,:) and is grown
/// to z+1 columns. `a_col` is A(K,j), `a_pivot_col` is A(I_z,j).
template <typename Scalar>
void t_update_rows(Matrix<Scalar>& t, std::span<const Scalar> a_col, std::span<const Scalar> a_pivot_col,
                   std::span<const Scalar> t_pivot_row, Scalar delta) {
    if (delta == Scalar(0) || !std::isfinite(delta))
        throw DegeneratePivotError("zero or non-finite delta");
    const Index z = t.cols();
    if (static_cast<Index>(a_pivot_col.size()) != z || static_cast<Index>(t_pivot_row.size()) != z ||
        static_cast<Index>(a_col.size()) != t.rows())
        throw StructureError("t_update: shape mismatch");
    t.conservativeResize(Eigen::NoChange, z + 1);
    for (Index r = 0; r < t.rows(); ++r) {
        Scalar s = 0;
        for (Index c = 0; c < z; ++c)
            s += t(r, c) * a_pivot_col[static_cast<std::size_t>(c)];
        s -= a_col[static_cast<std::size_t>(r)];
        const Scalar ds = delta * s;
        for (Index c = 0; c < z; ++c)
            t(r, c) += ds * t_pivot_row[static_cast<std::size_t>(c)];
        t(r, z) = -ds;
    }
}

/// Functional form: returns T_{z+1}(K,:).
template <typename DerivedT, typename DerivedC, typename DerivedP, typename DerivedR>
Matrix<typename DerivedT::Scalar> t_update(const Eigen::MatrixBase<DerivedT>& t, const Eigen::MatrixBase<DerivedC>& a_col,
                                           const Eigen::MatrixBase<DerivedP>& a_pivot_col,
                                           const Eigen::MatrixBase<DerivedR>& t_pivot_row,
                                           typename DerivedT::Scalar delta) {
    using Scalar = typename DerivedT::Scalar;
    Matrix<Scalar> out = t;
    const Vector<Scalar> col = a_col;
    const Vector<Scalar> piv = a_pivot_col;
    const Vector<Scalar> trow = t_pivot_row.transpose();
    t_update_rows<Scalar>(out, {col.data(), static_cast<std::size_t>(col.size())},
                          {piv.data(), static_cast<std::size_t>(piv.size())},
                          {trow.data(), static_cast<std::size_t>(trow.size())}, delta);
    return out;
}

enum class CurMethod {
    solve,            ///< C * (A(I,J) \ R) through an LU solve
    explicit_inverse, ///< C * inv(A(I,J)) * R, the textbook "direct" baseline
};

/// A(:,J) A(I,J)^{-1} A(I,:). Validation oracle; not used by the algorithms.
template <typename Derived>
Matrix<typename Derived::Scalar> direct_cur(const Eigen::MatrixBase<Derived>& a, std::span<const Index> rows,
                                            std::span<const Index> cols, CurMethod method = CurMethod::solve) {
    using Scalar = typename Derived::Scalar;
    if (rows.size() != cols.size())
        throw ArgumentError("direct_cur needs |I| == |J|");
    const auto z = static_cast<Index>(rows.size());
    if (z == 0)
        return Matrix<Scalar>::Zero(a.rows(), a.cols());
    Matrix<Scalar> c(a.rows(), z), core(z, z), r(z, a.cols());
    for (Index t = 0; t < z; ++t) {
        c.col(t) = a.col(cols[static_cast<std::size_t>(t)]);
        r.row(t) = a.row(rows[static_cast<std::size_t>(t)]);
        for (Index s = 0; s < z; ++s)
            core(t, s) = a(rows[static_cast<std::size_t>(t)], cols[static_cast<std::size_t>(s)]);
    }
    Eigen::PartialPivLU<Matrix<Scalar>> lu(core);
    const auto& packed = lu.matrixLU();
    for (Index t = 0; t < z; ++t)
        if (packed(t, t) == Scalar(0))
            throw SingularCoreError("A(I,J) is singular");
    Matrix<Scalar> out;
    if (method == CurMethod::solve)
        out = c * lu.solve(r);
    else
        out = (c * lu.inverse()) * r;
    if (!out.allFinite())
        throw SingularCoreError("A(I,J) is numerically singular");
    return out;
}

/// A(:,J) A(I,J)^{-1} through an LU solve; the oracle for T.
template <typename Derived>
Matrix<typename Derived::Scalar> direct_t(const Eigen::MatrixBase<Derived>& a, std::span<const Index> rows,
                                          std::span<const Index> cols) {
    using Scalar = typename Derived::Scalar;
    const auto z = static_cast<Index>(rows.size());
    Matrix<Scalar> c(a.rows(), z), core(z, z);
    for (Index t = 0; t < z; ++t) {
        c.col(t) = a.col(cols[static_cast<std::size_t>(t)]);
        for (Index s = 0; s < z; ++s)
            core(t, s) = a(rows[static_cast<std::size_t>(t)], cols[static_cast<std::size_t>(s)]);
    }
    // T core = C  =>  core^T T^T = C^T
    Matrix<Scalar> tt = core.transpose().partialPivLu().solve(c.transpose());
    return tt.transpose();
}

template <typename Scalar>
struct AcaState {
    Matrix<Scalar> approx; ///< A~_z over the block
    Matrix<Scalar> tmat;   ///< T_z, rows x z
    CrossPivots<Scalar> pivots;
    Scalar floor = 0;
    Index z = 0;

    explicit AcaState(Index rows = 0, Index cols = 0)
        : approx(Matrix<Scalar>::Zero(rows, cols)), tmat(rows, 0) {}
};

struct AcaOptions {
    /// Optional relative stop: |pivot| <= tolerance * |first pivot|. Off when 0.
    double tolerance = 0.0;
};

/// One greedy enrichment step on a fully known matrix. Returns false when the
/// residual is exhausted (state untouched).
template <typename Derived>
bool aca_step(AcaState<typename Derived::Scalar>& state, const Eigen::MatrixBase<Derived>& a,
              const AcaOptions& options = {}) {
    using Scalar = typename Derived::Scalar;
    using std::abs;
    if (state.z == 0) {
        state.approx = Matrix<Scalar>::Zero(a.rows(), a.cols());
        state.tmat.resize(a.rows(), 0);
        state.floor = degeneracy_floor<Scalar>(a.cwiseAbs().maxCoeff());
    }
    const Matrix<Scalar> residual = a - state.approx;
    auto choice = greedy_pivot(residual, state.pivots.rows, state.pivots.cols, state.floor);
    if (!choice)
        return false;
    if (options.tolerance > 0 && state.z > 0 &&
        abs(choice->value) <= Scalar(options.tolerance) * abs(Scalar(1) / state.pivots.deltas.front()))
        return false;

    const Index i = choice->row;
    const Index j = choice->col;
    Scalar delta;
    if (state.z == 0) {
        delta = Scalar(1) / a(i, j);
        state.tmat.resize(a.rows(), 1);
        for (Index r = 0; r < a.rows(); ++r)
            state.tmat(r, 0) = a(r, j) / a(i, j);
    } else {
        std::vector<Scalar> piv(static_cast<std::size_t>(state.z));
        for (Index t = 0; t < state.z; ++t)
            piv[static_cast<std::size_t>(t)] = a(state.pivots.rows[static_cast<std::size_t>(t)], j);
        const Vector<Scalar> ti = state.tmat.row(i).transpose();
        delta = compute_delta(ti, Eigen::Map<const Vector<Scalar>>(piv.data(), state.z), a(i, j));
        const Vector<Scalar> col = a.col(j);
        t_update_rows<Scalar>(state.tmat, {col.data(), static_cast<std::size_t>(col.size())}, piv,
                              {ti.data(), static_cast<std::size_t>(ti.size())}, delta);
    }
    residual_update(state.approx, residual.col(j), residual.row(i), residual(i, j));
    state.pivots.rows.push_back(i);
    state.pivots.cols.push_back(j);
    state.pivots.deltas.push_back(delta);
    ++state.z;
    return true;
}

/// Greedy ACA with the iterative update, up to `rank` pivots.
template <typename Derived>
AcaState<typename Derived::Scalar> cross_approximate(const Eigen::MatrixBase<Derived>& a, Index rank,
                                                     const AcaOptions& options = {}) {
    AcaState<typename Derived::Scalar> state(a.rows(), a.cols());
    while (state.z < rank && aca_step(state, a, options)) {
    }
    return state;
}

/// Greedy cross where every approximation is rebuilt directly from
/// A(:,J) A(I,J)^{-1} A(I,:). Returns the relative Frobenius error after each
/// step; stops early (shorter result) if the core becomes exactly singular.
template <typename Derived>
std::vector<typename Derived::Scalar> direct_greedy_errors(const Eigen::MatrixBase<Derived>& a, Index rank,
                                                           CurMethod method) {
    using Scalar = typename Derived::Scalar;
    std::vector<Scalar> errors;
    std::vector<Index> rows, cols;
    Matrix<Scalar> approx = Matrix<Scalar>::Zero(a.rows(), a.cols());
    const Scalar norm = a.norm();
    for (Index z = 0; z < rank; ++z) {
        const Matrix<Scalar> residual = a - approx;
        auto choice = greedy_pivot(residual, rows, cols);
        if (!choice)
            break;
        rows.push_back(choice->row);
        cols.push_back(choice->col);
        try {
            approx = direct_cur(a, rows, cols, method);
        } catch (const SingularCoreError&) {
            break;
        }
        errors.push_back((a - approx).norm() / norm);
    }
    return errors;
}

} // namespace ttx::aca
