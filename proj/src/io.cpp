#include "ttx/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ttx::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'T', 'X', '1'};

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw StructureError("truncated TT container header");
    return v;
}

} // namespace

void write_container(std::ostream& out, const TTCores& cores) {
    out.write(kMagic, 4);
    const int d = cores.d();
    put_u64(out, static_cast<std::uint64_t>(d));
    for (Index n : cores.mode_sizes())
        put_u64(out, static_cast<std::uint64_t>(n));
    for (Index s : cores.ranks())
        put_u64(out, static_cast<std::uint64_t>(s));
    put_u64(out, 0);
    for (int k = 0; k < d; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const Index sa = cores.ranks()[kk], n = cores.mode_sizes()[kk], sb = cores.ranks()[kk + 1];
        for (Index a = 0; a < sa; ++a)
            for (Index i = 0; i < n; ++i)
                for (Index b = 0; b < sb; ++b) {
                    const double v = cores.at(k, a, i, b);
                    out.write(reinterpret_cast<const char*>(&v), sizeof v);
                }
    }
    if (!out)
        throw Error("failed writing TT container");
}

void write_container(const std::filesystem::path& path, const TTCores& cores) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    write_container(out, cores);
}

TTCores read_container(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw StructureError("not a TTX1 container");
    const std::uint64_t d = get_u64(in);
    if (d < 1 || d > 64)
        throw StructureError("implausible dimension count in container");
    std::vector<Index> n(d), s(d + 1);
    for (auto& v : n)
        v = static_cast<Index>(get_u64(in));
    for (auto& v : s)
        v = static_cast<Index>(get_u64(in));
    if (get_u64(in) != 0)
        throw StructureError("unsupported index base");
    TTCores cores(n, s);
    for (int k = 0; k < static_cast<int>(d); ++k) {
        const auto kk = static_cast<std::size_t>(k);
        for (Index a = 0; a < s[kk]; ++a)
            for (Index i = 0; i < n[kk]; ++i)
                for (Index b = 0; b < s[kk + 1]; ++b) {
                    double v;
                    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
                        throw StructureError("truncated TT container data");
                    cores.at(k, a, i, b) = v;
                }
    }
    return cores;
}

TTCores read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    return read_container(in);
}

nlohmann::json pivots_to_json(const PivotSets& pivots) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t k = 0; k < pivots.i_le.size(); ++k)
        out.push_back({{"k", k + 1}, {"rows", pivots.i_le[k]}, {"cols", pivots.j_gt[k]}});
    return out;
}

PivotSets pivots_from_json(const nlohmann::json& j) {
    PivotSets p;
    for (const auto& e : j) {
        p.i_le.push_back(e.at("rows").get<std::vector<MultiIndex>>());
        p.j_gt.push_back(e.at("cols").get<std::vector<MultiIndex>>());
    }
    return p;
}

nlohmann::json sidecar(const DecomposeResult& result, const GridConfig& grid, const nlohmann::json& extra) {
    nlohmann::json j;
    j["format"] = "TTX1";
    j["index_base"] = 0;
    j["mode_sizes"] = result.cores.mode_sizes();
    j["core_ranks"] = result.cores.ranks();
    j["grid"] = {{"parts", grid.parts}, {"procs", grid.procs}};
    j["pivots"] = pivots_to_json(result.selection.pivots);
    j["seed"] = result.selection.seed;
    j["sweeps"] = result.selection.sweeps;
    j["warnings"] = result.selection.warnings;
    j["access_fraction"] = result.access_fraction;
    j["errata"] = {{"residual_sign", "E = A - approx"}, {"t_update_sign", "+"}};
    nlohmann::json roots = nlohmann::json::array();
    for (const auto& g : result.core_grids.grids)
        roots.push_back({{"members", g.members}, {"root", g.root}});
    j["core_grids"] = roots;
    for (const auto& [key, value] : extra.items())
        j[key] = value;
    return j;
}

} // namespace ttx::io
