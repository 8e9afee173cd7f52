#pragma once

// TT container files and their JSON metadata sidecar.
//
// Container layout, little-endian: "TTX1", u64 d, u64 n[d], u64 s[d+1],
// u64 index_base (always 0), then the cores G_1..G_d, each as row-major
// float64 over (a, i, b).

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "ttx/ttcross.hpp"

namespace ttx::io {

void write_container(std::ostream& out, const TTCores& cores);
void write_container(const std::filesystem::path& path, const TTCores& cores);
/// Throws StructureError on a bad magic, truncated data or inconsistent shapes.
TTCores read_container(std::istream& in);
TTCores read_container(const std::filesystem::path& path);

nlohmann::json pivots_to_json(const PivotSets& pivots);
PivotSets pivots_from_json(const nlohmann::json& j);

/// Sidecar with pivot sets, seed, grid shape, core ranks and erratum flags.
/// `extra` keys are merged on top.
nlohmann::json sidecar(const DecomposeResult& result, const GridConfig& grid, const nlohmann::json& extra = {});

} // namespace ttx::io
