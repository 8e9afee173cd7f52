#pragma once

// Multi-index arithmetic, unfoldings, element oracles and subtensor storage.
//
// All indices are 0-based. Linearisation is colexicographic (first index
// fastest), i.e. the memory order of a Fortran/MATLAB `reshape`, so that the
// k-th unfolding X_k has rows indexed by (i_1..i_k) and columns by
// (i_{k+1}..i_d), each linearised the same way.

#include <cstdint>
#include <functional>
#include <mutex>
#include <span>
#include <unordered_set>
#include <vector>

#include "ttx/errors.hpp"

namespace ttx {

using Index = std::int64_t;
using MultiIndex = std::vector<Index>;

class DimSpec {
public:
    DimSpec() = default;
    explicit DimSpec(std::vector<Index> sizes);

    int d() const noexcept { return static_cast<int>(sizes_.size()); }
    Index size(int j) const { return sizes_.at(static_cast<std::size_t>(j)); }
    std::span<const Index> sizes() const noexcept { return sizes_; }

    /// Product of all mode sizes. Throws ArgumentError when it overflows 63 bits.
    Index total() const;

    /// Product of the first k sizes (rows of X_k).
    Index rows(int k) const;
    /// Product of sizes k+1..d (columns of X_k).
    Index cols(int k) const;

    bool contains(std::span<const Index> idx) const noexcept;

    friend bool operator==(const DimSpec&, const DimSpec&) = default;

private:
    std::vector<Index> sizes_;
};

Index linearize(std::span<const Index> idx, std::span<const Index> sizes);
MultiIndex delinearize(Index flat, std::span<const Index> sizes);

inline Index linearize(std::span<const Index> idx, const DimSpec& dims) {
    return linearize(idx, dims.sizes());
}
inline MultiIndex delinearize(Index flat, const DimSpec& dims) {
    return delinearize(flat, dims.sizes());
}

struct UnfoldingCoords {
    Index row = 0;
    Index col = 0;
    friend bool operator==(const UnfoldingCoords&, const UnfoldingCoords&) = default;
};

/// Position of `idx` in the k-th unfolding, 1 <= k <= d-1.
UnfoldingCoords unfolding_coords(int k, std::span<const Index> idx, const DimSpec& dims);

/// Inverse of unfolding_coords.
MultiIndex from_unfolding(int k, Index row, Index col, const DimSpec& dims);

/// Pure element function with a thread-safe count of distinct evaluations.
class ElementOracle {
public:
    using Function = std::function<double(std::span<const Index>)>;

    ElementOracle(DimSpec dims, Function fn);

    ElementOracle(const ElementOracle&) = delete;
    ElementOracle& operator=(const ElementOracle&) = delete;

    /// Evaluate and record the access.
    double operator()(std::span<const Index> idx) const;

    /// Evaluate without recording (error metrics, tests).
    double peek(std::span<const Index> idx) const;

    const DimSpec& dims() const noexcept { return dims_; }

    std::size_t distinct_evaluations() const;
    void reset_counter();

private:
    DimSpec dims_;
    Function fn_;
    mutable std::mutex mutex_;
    mutable std::unordered_set<std::uint64_t> seen_;
};

struct IndexRange {
    Index begin = 0;
    Index end = 0;

    Index size() const noexcept { return end - begin; }
    bool contains(Index i) const noexcept { return i >= begin && i < end; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// One contiguous block K_1 x ... x K_d of a tensor, either materialised
/// (dense, colexicographic) or backed lazily by an oracle.
class Subtensor {
public:
    /// Lazy block over `oracle`.
    Subtensor(const ElementOracle& oracle, std::vector<IndexRange> ranges);

    /// Dense block with explicit values in colexicographic order.
    Subtensor(std::vector<IndexRange> ranges, std::vector<double> values);

    std::span<const IndexRange> ranges() const noexcept { return ranges_; }
    bool owns(std::span<const Index> global) const noexcept;
    bool is_dense() const noexcept { return !values_.empty() || oracle_ == nullptr; }
    Index element_count() const;

    /// Fill dense storage from the oracle (touches every element).
    void materialize();

    double read(std::span<const Index> global) const;
    double read_local(std::span<const Index> local) const;

private:
    Index local_offset(std::span<const Index> local) const;

    const ElementOracle* oracle_ = nullptr;
    std::vector<IndexRange> ranges_;
    std::vector<Index> extents_;
    std::vector<double> values_;
};

} // namespace ttx
