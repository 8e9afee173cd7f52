#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <cstring>
#include <sstream>
#include <unistd.h>

#include "ttx/cli.hpp"
#include "ttx/io.hpp"

using namespace ttx;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "ttx");
    std::vector<char*> argv;
    for (auto& a : args)
        argv.push_back(a.data());
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    const int rc = cli::run_cli(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old);
    return rc;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("ttx_cli_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("container round trip") {
    TTCores t({2, 3}, {1, 2, 1});
    double v = 0.5;
    for (int k = 0; k < 2; ++k)
        for (auto& x : t.raw(k))
            x = (v *= -1.25);
    std::stringstream buf;
    io::write_container(buf, t);
    const std::string bytes = buf.str();
    CHECK(bytes.substr(0, 4) == "TTX1");
    CHECK(bytes.size() == 4 + 8 * (1 + 2 + 3 + 1) + 8 * (4 + 6));
    buf.seekg(0);
    CHECK(io::read_container(buf) == t);

    std::stringstream bad("TTX2");
    CHECK_THROWS_AS(io::read_container(bad), StructureError);
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(io::read_container(cut), StructureError);
}

TEST_CASE("container stores cores row-major over (a, i, b)") {
    TTCores t({2}, {1, 1});
    t.at(0, 0, 0, 0) = 1.0;
    t.at(0, 0, 1, 0) = 2.0;
    TTCores u({2, 2}, {1, 2, 1});
    u.at(0, 0, 1, 0) = 3.0; // row-major position 1 * 2 + 0 = 2
    std::stringstream buf;
    io::write_container(buf, u);
    const std::string bytes = buf.str();
    double x;
    std::memcpy(&x, bytes.data() + 4 + 8 * 7 + 8 * 2, 8);
    CHECK(x == 3.0);
}

TEST_CASE("pivot json round trip") {
    PivotSets p;
    p.i_le = {{{1}, {3}}};
    p.j_gt = {{{2, 0}, {1, 1}}};
    CHECK(io::pivots_from_json(io::pivots_to_json(p)) == p);
}

TEST_CASE("decompose writes container, sidecar and stats") {
    TempDir tmp;
    const auto a = (tmp.path / "serial").string();
    const auto b = (tmp.path / "grid").string();
    CHECK(run({"decompose", "--model", "hilbert", "--dims", "3", "--sizes", "40", "--ranks", "5,5", "--grid",
               "1,1,1", "--samples", "1000", "--out", a}) == 0);
    CHECK(run({"decompose", "--model", "hilbert", "--dims", "3", "--sizes", "40", "--ranks", "5,5", "--grid",
               "2,2,2", "--samples", "1000", "--out", b}) == 0);
    const auto cores = io::read_container(fs::path(a + ".ttx"));
    CHECK(cores.ranks() == std::vector<Index>{1, 5, 5, 1});
    CHECK(cores.mode_sizes() == std::vector<Index>{40, 40, 40});
    CHECK(slurp(a + ".ttx") == slurp(b + ".ttx"));

    const auto meta = nlohmann::json::parse(slurp(a + ".json"));
    CHECK(meta.at("format") == "TTX1");
    CHECK(meta.at("core_ranks") == std::vector<Index>{1, 5, 5, 1});
    CHECK(meta.at("pivots").size() == 2);
    CHECK(meta.contains("errata"));
    CHECK(meta.at("access_fraction").get<double>() > 0);

    const auto stats = slurp(b + ".stats.csv");
    CHECK(stats.rfind("rank,elements_sent,elements_received,messages_sent,messages_received\n", 0) == 0);
    CHECK(std::count(stats.begin(), stats.end(), '\n') == 9);
}

TEST_CASE("sweep csv") {
    TempDir tmp;
    const auto out = (tmp.path / "sweep.csv").string();
    CHECK(run({"sweep", "--model", "rank1", "--dims", "3", "--sizes", "10", "--ranks", "3,3", "--samples", "500",
               "--out", out}) == 0);
    std::istringstream in(slurp(out));
    std::string line;
    std::getline(in, line);
    CHECK(line == "schedule_index,r_1,r_2,sampled_rel_err,access_fraction");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        REQUIRE(cells.size() == 5);
        CHECK(std::stod(cells[3]) <= 1e-13);
    }
    CHECK(rows == 2);
    const auto again = (tmp.path / "again.csv").string();
    CHECK(run({"decompose", "--sweep", "--model", "rank1", "--dims", "3", "--sizes", "10", "--ranks", "3,3",
               "--samples", "500", "--out", again}) == 0);
    CHECK(slurp(out) == slurp(again));
}

TEST_CASE("bench csv includes the one-rank baseline") {
    TempDir tmp;
    const auto out = (tmp.path / "bench.csv").string();
    CHECK(run({"bench", "--model", "hilbert", "--dims", "3", "--sizes", "12", "--ranks", "3,3", "--procs", "2,2,2",
               "--repeats", "2", "--out", out}) == 0);
    std::istringstream in(slurp(out));
    std::string line;
    std::getline(in, line);
    CHECK(line == "ranks,partition,t_pivot,t_core,bytes,msgs");
    std::getline(in, line);
    CHECK(line.rfind("1,1x1x1,", 0) == 0);
    CHECK(line.substr(line.size() - 4) == ",0,0");
    std::getline(in, line);
    CHECK(line.rfind("8,2x2x2,", 0) == 0);
    const auto weak = (tmp.path / "weak.csv").string();
    CHECK(run({"bench", "--mode", "weak", "--model", "hilbert", "--dims", "2", "--sizes", "8", "--ranks", "3",
               "--procs", "2,1", "--repeats", "1", "--out", weak}) == 0);
}

TEST_CASE("cost table") {
    TempDir tmp;
    const auto out = (tmp.path / "cost.csv").string();
    CHECK(run({"cost", "--out", out}) == 0);
    CHECK(slurp(out).find("bridge_recv,,48") != std::string::npos);
    CHECK(run({"cost", "--order", "3", "--rank", "2", "--w", "1", "--m", "4", "--P", "2", "--pivots", "5", "--out",
               out}) == 0);
    CHECK(slurp(out).find("neighbor_send,1,52") != std::string::npos);
}

TEST_CASE("exit codes") {
    CHECK(run({"decompose", "--model", "nope"}) == cli::kConfig);
    CHECK(run({"decompose", "--model", "hilbert", "--grid", "1,1"}) == cli::kConfig);
    CHECK(run({"decompose", "--backend", "mpi"}) == cli::kConfig);
    CHECK(run({"decompose", "--bogus-flag"}) == cli::kConfig);
    CHECK(run({"decompose", "--model", "maxwellian-2d2v", "--ordering", "x,x,y,vy"}) == cli::kConfig);
    ::setenv("TTX_RANKS", "3", 1);
    CHECK(run({"decompose", "--model", "hilbert", "--sizes", "8", "--ranks", "2", "--grid", "2,1,1", "--samples",
               "0"}) == cli::kConfig);
    ::setenv("TTX_RANKS", "2", 1);
    CHECK(run({"decompose", "--model", "hilbert", "--sizes", "8", "--ranks", "2", "--grid", "2,1,1", "--samples",
               "0"}) == 0);
    ::unsetenv("TTX_RANKS");
}

TEST_CASE("Maxwellian model sizes") {
    cli::ModelSpec s;
    s.name = "maxwellian-2d2v";
    s.sizes = {8};
    auto o = cli::make_model(s);
    CHECK(std::vector<Index>(o->dims().sizes().begin(), o->dims().sizes().end()) == std::vector<Index>{16, 8, 16, 8});
    s.ordering = "vx,x,vy,y";
    o = cli::make_model(s);
    CHECK(std::vector<Index>(o->dims().sizes().begin(), o->dims().sizes().end()) == std::vector<Index>{8, 16, 8, 16});
    s.name = "maxwellian-3d3v";
    s.ordering.clear();
    s.sizes = {2, 3, 4, 5, 6, 7};
    CHECK(cli::make_model(s)->dims().d() == 6);
    CHECK(cli::parse_list("2,3") == std::vector<Index>{2, 3});
    CHECK_THROWS_AS(cli::parse_list("2,x"), ConfigError);
    CHECK_THROWS_AS(cli::parse_list("0"), ConfigError);
}
