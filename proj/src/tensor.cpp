#include "ttx/tensor.hpp"

#include <limits>
#include <string>

namespace ttx {

namespace {

Index checked_product(std::span<const Index> sizes) {
    Index p = 1;
    for (Index s : sizes) {
        if (s != 0 && p > std::numeric_limits<Index>::max() / s)
            throw ArgumentError("tensor size overflows 63-bit index space");
        p *= s;
    }
    return p;
}

} // namespace

DimSpec::DimSpec(std::vector<Index> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.empty())
        throw ArgumentError("DimSpec needs at least one dimension");
    for (Index n : sizes_)
        if (n < 1)
            throw ArgumentError("mode sizes must be >= 1");
}

Index DimSpec::total() const { return checked_product(sizes_); }

Index DimSpec::rows(int k) const {
    return checked_product(sizes().first(static_cast<std::size_t>(k)));
}

Index DimSpec::cols(int k) const {
    return checked_product(sizes().subspan(static_cast<std::size_t>(k)));
}

bool DimSpec::contains(std::span<const Index> idx) const noexcept {
    if (idx.size() != sizes_.size())
        return false;
    for (std::size_t j = 0; j < idx.size(); ++j)
        if (idx[j] < 0 || idx[j] >= sizes_[j])
            return false;
    return true;
}

Index linearize(std::span<const Index> idx, std::span<const Index> sizes) {
    if (idx.size() != sizes.size())
        throw BoundsError("index arity " + std::to_string(idx.size()) + " != " +
                          std::to_string(sizes.size()));
    Index flat = 0;
    Index stride = 1;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] < 0 || idx[j] >= sizes[j])
            throw BoundsError("index " + std::to_string(idx[j]) + " out of range for mode " +
                              std::to_string(j) + " of size " + std::to_string(sizes[j]));
        flat += idx[j] * stride;
        stride *= sizes[j];
    }
    return flat;
}

MultiIndex delinearize(Index flat, std::span<const Index> sizes) {
    MultiIndex idx(sizes.size());
    if (flat < 0)
        throw BoundsError("negative linear index");
    for (std::size_t j = 0; j < sizes.size(); ++j) {
        idx[j] = flat % sizes[j];
        flat /= sizes[j];
    }
    if (flat != 0)
        throw BoundsError("linear index beyond tensor size");
    return idx;
}

UnfoldingCoords unfolding_coords(int k, std::span<const Index> idx, const DimSpec& dims) {
    if (k < 1 || k > dims.d() - 1)
        throw ArgumentError("unfolding split k=" + std::to_string(k) + " outside [1, d-1]");
    if (!dims.contains(idx))
        throw BoundsError("multi-index outside tensor");
    const auto split = static_cast<std::size_t>(k);
    return {linearize(idx.first(split), dims.sizes().first(split)),
            linearize(idx.subspan(split), dims.sizes().subspan(split))};
}

MultiIndex from_unfolding(int k, Index row, Index col, const DimSpec& dims) {
    if (k < 1 || k > dims.d() - 1)
        throw ArgumentError("unfolding split k=" + std::to_string(k) + " outside [1, d-1]");
    const auto split = static_cast<std::size_t>(k);
    MultiIndex idx = delinearize(row, dims.sizes().first(split));
    MultiIndex tail = delinearize(col, dims.sizes().subspan(split));
    idx.insert(idx.end(), tail.begin(), tail.end());
    return idx;
}

// ---------------------------------------------------------------------------

ElementOracle::ElementOracle(DimSpec dims, Function fn) : dims_(std::move(dims)), fn_(std::move(fn)) {
    if (!fn_)
        throw ArgumentError("oracle function is empty");
    (void)dims_.total(); // access keys must fit
}

double ElementOracle::operator()(std::span<const Index> idx) const {
    const auto key = static_cast<std::uint64_t>(linearize(idx, dims_));
    {
        std::lock_guard lock(mutex_);
        seen_.insert(key);
    }
    return fn_(idx);
}

double ElementOracle::peek(std::span<const Index> idx) const {
    if (!dims_.contains(idx))
        throw BoundsError("multi-index outside tensor");
    return fn_(idx);
}

std::size_t ElementOracle::distinct_evaluations() const {
    std::lock_guard lock(mutex_);
    return seen_.size();
}

void ElementOracle::reset_counter() {
    std::lock_guard lock(mutex_);
    seen_.clear();
}

// ---------------------------------------------------------------------------

Subtensor::Subtensor(const ElementOracle& oracle, std::vector<IndexRange> ranges)
    : oracle_(&oracle), ranges_(std::move(ranges)) {
    const auto& dims = oracle.dims();
    if (static_cast<int>(ranges_.size()) != dims.d())
        throw ArgumentError("subtensor arity does not match oracle");
    for (int j = 0; j < dims.d(); ++j) {
        const auto& r = ranges_[static_cast<std::size_t>(j)];
        if (r.begin < 0 || r.end > dims.size(j) || r.size() < 1)
            throw ArgumentError("subtensor range outside mode " + std::to_string(j));
        extents_.push_back(r.size());
    }
}

Subtensor::Subtensor(std::vector<IndexRange> ranges, std::vector<double> values)
    : ranges_(std::move(ranges)), values_(std::move(values)) {
    for (const auto& r : ranges_) {
        if (r.size() < 1)
            throw ArgumentError("empty subtensor range");
        extents_.push_back(r.size());
    }
    if (static_cast<Index>(values_.size()) != element_count())
        throw ArgumentError("dense storage size does not match range lengths");
}

Index Subtensor::element_count() const { return checked_product(extents_); }

bool Subtensor::owns(std::span<const Index> global) const noexcept {
    if (global.size() != ranges_.size())
        return false;
    for (std::size_t j = 0; j < global.size(); ++j)
        if (!ranges_[j].contains(global[j]))
            return false;
    return true;
}

void Subtensor::materialize() {
    if (oracle_ == nullptr || !values_.empty())
        return;
    const Index count = element_count();
    values_.resize(static_cast<std::size_t>(count));
    MultiIndex global(ranges_.size());
    for (Index flat = 0; flat < count; ++flat) {
        Index rest = flat;
        for (std::size_t j = 0; j < ranges_.size(); ++j) {
            global[j] = ranges_[j].begin + rest % extents_[j];
            rest /= extents_[j];
        }
        values_[static_cast<std::size_t>(flat)] = (*oracle_)(global);
    }
}

Index Subtensor::local_offset(std::span<const Index> local) const {
    return linearize(local, extents_);
}

double Subtensor::read(std::span<const Index> global) const {
    if (!owns(global))
        throw OwnershipError("read outside owned subtensor");
    if (!values_.empty()) {
        MultiIndex local(global.begin(), global.end());
        for (std::size_t j = 0; j < local.size(); ++j)
            local[j] -= ranges_[j].begin;
        return values_[static_cast<std::size_t>(local_offset(local))];
    }
    return (*oracle_)(global);
}

double Subtensor::read_local(std::span<const Index> local) const {
    if (local.size() != ranges_.size())
        throw BoundsError("local index arity mismatch");
    MultiIndex global(local.begin(), local.end());
    for (std::size_t j = 0; j < global.size(); ++j) {
        if (local[j] < 0 || local[j] >= extents_[j])
            throw OwnershipError("local index outside subtensor");
        global[j] += ranges_[j].begin;
    }
    return read(global);
}

} // namespace ttx
