#include "ttx/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "ttx/costmodel.hpp"
#include "ttx/io.hpp"

namespace ttx::cli {

std::vector<Index> parse_list(const std::string& text) {
    std::vector<Index> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &used);
        } catch (const std::exception&) {
            throw ConfigError("not an integer list: '" + text + "'");
        }
        if (used != item.size() || v < 1)
            throw ConfigError("expected positive integers in '" + text + "'");
        out.push_back(static_cast<Index>(v));
    }
    if (out.empty())
        throw ConfigError("empty integer list");
    return out;
}

namespace {

std::vector<Index> broadcast(std::vector<Index> v, std::size_t n, const char* what) {
    if (v.size() == 1)
        v.assign(n, v[0]);
    if (v.size() != n)
        throw ConfigError(std::string(what) + " needs 1 or " + std::to_string(n) + " values");
    return v;
}

} // namespace

std::unique_ptr<ElementOracle> make_model(const ModelSpec& spec) {
    if (spec.name == "hilbert" || spec.name == "rank1") {
        if (spec.dims < 1)
            throw ConfigError("--dims must be >= 1");
        if (!spec.ordering.empty())
            throw ConfigError("--ordering applies to Maxwellian models only");
        DimSpec dims(broadcast(spec.sizes.empty() ? std::vector<Index>{40} : spec.sizes,
                               static_cast<std::size_t>(spec.dims), "--sizes"));
        return spec.name == "hilbert" ? models::make_hilbert(dims) : models::make_rank_one(dims);
    }
    if (spec.name == "maxwellian-2d2v" || spec.name == "maxwellian-3d3v") {
        const bool three = spec.name == "maxwellian-3d3v";
        models::MaxwellianConfig cfg = three ? models::MaxwellianConfig::standard_3d3v(1)
                                             : models::MaxwellianConfig::standard_2d2v(1);
        if (!spec.ordering.empty())
            cfg.ordering = models::parse_ordering(spec.ordering);
        const std::size_t d = cfg.ordering.size();
        if (spec.sizes.size() == 1 || spec.sizes.empty()) {
            // A single n gives 2n points on spatial axes and n on velocity axes.
            const Index n = spec.sizes.empty() ? 32 : spec.sizes[0];
            cfg.sizes.clear();
            for (auto a : cfg.ordering)
                cfg.sizes.push_back(static_cast<int>(a) % 2 == 0 ? 2 * n : n);
        } else {
            cfg.sizes = broadcast(spec.sizes, d, "--sizes");
        }
        cfg.validate();
        return models::make_maxwellian(cfg);
    }
    throw ConfigError("unknown model '" + spec.name + "' (hilbert, maxwellian-2d2v, maxwellian-3d3v, rank1)");
}

namespace {

struct Options {
    ModelSpec model;
    std::string sizes, ranks, grid, procs;
    std::uint64_t seed = 1;
    Index samples = 10000;
    std::string out;
    std::string backend = "sim";
    bool per_dimension = false;
    bool sweep = false;
    int repeats = 10;
    std::string mode = "strong";
};

GridConfig make_grid(const DimSpec& dims, const std::string& grid_text, const std::string& procs_text) {
    const auto d = static_cast<std::size_t>(dims.d());
    GridConfig g;
    g.sizes.assign(dims.sizes().begin(), dims.sizes().end());
    const auto parts = broadcast(grid_text.empty() ? std::vector<Index>{1} : parse_list(grid_text), d, "--grid");
    const auto procs = procs_text.empty() ? parts : broadcast(parse_list(procs_text), d, "--procs");
    for (std::size_t j = 0; j < d; ++j) {
        g.parts.push_back(static_cast<int>(parts[j]));
        g.procs.push_back(static_cast<int>(procs[j]));
    }
    g.validate();
    return g;
}

std::vector<Index> target_ranks(const std::string& text, int d) {
    if (d < 2)
        return {};
    return broadcast(text.empty() ? std::vector<Index>{5} : parse_list(text), static_cast<std::size_t>(d - 1),
                     "--ranks");
}

void check_backend(const Options& o, int ranks) {
    if (o.backend == "mpi")
        throw ConfigError("the mpi backend is not built in this configuration; use --backend sim");
    if (o.backend != "sim")
        throw ConfigError("unknown backend '" + o.backend + "'");
    const int env = ranks_from_env(ranks);
    if (env != ranks)
        throw ConfigError("TTX_RANKS=" + std::to_string(env) + " but the process grid has " + std::to_string(ranks) +
                          " ranks");
}

void prepare(Options& o) {
    if (!o.sizes.empty())
        o.model.sizes = parse_list(o.sizes);
}

std::string join(std::span<const Index> v, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? sep : "") + std::to_string(v[i]);
    return s;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

/// Output stream for CSV: the file named by `path`, or stdout when empty.
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_)
                throw ConfigError("cannot open " + path + " for writing");
        }
    }
    std::ostream& get() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

int cmd_sweep(Options& o);

int cmd_decompose(Options& o) {
    if (o.sweep)
        return cmd_sweep(o);
    prepare(o);
    auto oracle = make_model(o.model);
    const GridConfig grid = make_grid(oracle->dims(), o.grid, o.procs);
    check_backend(o, grid.ranks());
    DecomposeOptions opts;
    opts.ranks = target_ranks(o.ranks, oracle->dims().d());
    opts.pivots.per_dimension_complete = o.per_dimension;
    const DecomposeResult result = decompose(*oracle, grid, opts);
    for (const auto& w : result.selection.warnings)
        std::cerr << "warning: " << w << '\n';
    const double err = o.samples > 0 ? sampled_error(*oracle, result.cores, o.samples, o.seed)
                                     : std::numeric_limits<double>::quiet_NaN();
    std::cout << "core_ranks " << join(result.cores.ranks(), ",") << '\n'
              << "sampled_rel_err " << fmt(err) << '\n'
              << "access_fraction " << fmt(result.access_fraction) << '\n'
              << "t_pivot " << result.seconds_pivots << '\n'
              << "t_core " << result.seconds_cores << '\n';
    if (!o.out.empty()) {
        io::write_container(o.out + ".ttx", result.cores);
        nlohmann::json extra;
        extra["model"] = o.model.name;
        extra["ordering"] = o.model.ordering;
        extra["samples"] = o.samples;
        extra["sample_seed"] = o.seed;
        if (o.samples > 0)
            extra["sampled_rel_err"] = err;
        std::ofstream js(o.out + ".json", std::ios::binary);
        js << io::sidecar(result, grid, extra).dump(2) << '\n';
        std::ofstream st(o.out + ".stats.csv", std::ios::binary);
        write_stats_csv(st, result.stats);
        if (!js || !st)
            throw ConfigError("failed writing outputs under " + o.out);
    }
    return kOk;
}

int cmd_sweep(Options& o) {
    prepare(o);
    auto probe = make_model(o.model);
    const int d = probe->dims().d();
    const GridConfig grid = make_grid(probe->dims(), o.grid, o.procs);
    check_backend(o, grid.ranks());
    if (o.samples < 1)
        throw ConfigError("--samples must be >= 1 for a sweep");
    const auto targets = target_ranks(o.ranks, d);
    Sink sink(o.out);
    auto& out = sink.get();
    out << "schedule_index";
    for (int k = 1; k < d; ++k)
        out << ",r_" << k;
    out << ",sampled_rel_err,access_fraction\n";
    const auto schedule = rank_schedule(targets);
    for (std::size_t s = 0; s < schedule.size(); ++s) {
        auto oracle = make_model(o.model);
        DecomposeOptions opts;
        opts.ranks = schedule[s];
        opts.pivots.per_dimension_complete = o.per_dimension;
        const DecomposeResult result = decompose(*oracle, grid, opts);
        const double err = sampled_error(*oracle, result.cores, o.samples, o.seed);
        out << s << ',' << join(schedule[s], ",") << ',' << fmt(err) << ',' << fmt(result.access_fraction) << '\n';
    }
    return kOk;
}

int cmd_bench(Options& o) {
    prepare(o);
    if (o.repeats < 1)
        throw ConfigError("--repeats must be >= 1");
    if (o.mode != "strong" && o.mode != "weak")
        throw ConfigError("--mode must be strong or weak");
    auto probe = make_model(o.model);
    const DimSpec base = probe->dims();
    const auto d = static_cast<std::size_t>(base.d());

    // Process-grid shapes separated by ':'; the 1-rank baseline always comes first.
    std::vector<std::vector<Index>> shapes{std::vector<Index>(d, 1)};
    std::stringstream ss(o.procs.empty() ? std::string("2") : o.procs);
    for (std::string item; std::getline(ss, item, ':');) {
        auto p = broadcast(parse_list(item), d, "--procs");
        if (std::find(shapes.begin(), shapes.end(), p) == shapes.end())
            shapes.push_back(std::move(p));
    }
    if (o.backend != "sim")
        check_backend(o, 1);

    Sink sink(o.out);
    auto& out = sink.get();
    out << "ranks,partition,t_pivot,t_core,bytes,msgs\n";
    for (const auto& p : shapes) {
        ModelSpec spec = o.model;
        spec.sizes.assign(base.sizes().begin(), base.sizes().end());
        if (o.mode == "weak")
            for (std::size_t j = 0; j < d; ++j)
                spec.sizes[j] *= p[j];
        GridConfig grid;
        grid.sizes = spec.sizes;
        for (Index v : p) {
            grid.parts.push_back(static_cast<int>(v));
            grid.procs.push_back(static_cast<int>(v));
        }
        grid.validate();
        double best_pivot = std::numeric_limits<double>::infinity(), best_core = best_pivot;
        std::uint64_t elements = 0, messages = 0;
        for (int rep = 0; rep < o.repeats; ++rep) {
            auto oracle = make_model(spec);
            DecomposeOptions opts;
            opts.ranks = target_ranks(o.ranks, static_cast<int>(d));
            const DecomposeResult result = decompose(*oracle, grid, opts);
            best_pivot = std::min(best_pivot, result.seconds_pivots);
            best_core = std::min(best_core, result.seconds_cores);
            elements = messages = 0;
            for (const auto& s : result.stats) {
                elements += s.elements_sent;
                messages += s.messages_sent;
            }
        }
        out << grid.ranks() << ',' << join(p, "x") << ',' << fmt(best_pivot) << ',' << fmt(best_core) << ','
            << elements * sizeof(double) << ',' << messages << '\n';
    }
    return kOk;
}

struct CostOptions {
    std::int64_t d = 3, r = 2, w = 1, m = 4, p = 2, n = 5;
    std::string out;
};

int cmd_cost(const CostOptions& c) {
    Sink sink(c.out);
    cost::CostQuery q;
    q.d = c.d;
    q.r = c.r;
    q.w = c.w;
    q.m = c.m;
    q.p = c.p;
    q.n_pivots = c.n;
    cost::write_cost_table(sink.get(), q);
    return kOk;
}

void add_common(CLI::App* app, Options& o) {
    app->add_option("--model", o.model.name, "hilbert, maxwellian-2d2v, maxwellian-3d3v or rank1");
    app->add_option("--dims", o.model.dims, "tensor order for hilbert/rank1");
    app->add_option("--sizes", o.sizes, "mode sizes, one value broadcasts (Maxwellian: n gives 2n/n)");
    app->add_option("--ranks", o.ranks, "target TT ranks r_1..r_{d-1}, one value broadcasts");
    app->add_option("--grid", o.grid, "subtensor partitions per dimension");
    app->add_option("--procs", o.procs, "processes per dimension (default: --grid)");
    app->add_option("--ordering", o.model.ordering, "Maxwellian axis order, e.g. x,vx,y,vy");
    app->add_option("--seed", o.seed, "sampling seed");
    app->add_option("--samples", o.samples, "sample count for the relative error");
    app->add_option("--out", o.out, "output path (prefix for decompose, CSV file otherwise)");
    app->add_option("--backend", o.backend, "sim or mpi");
    app->add_flag("--per-dimension", o.per_dimension, "finish each dimension before the next");
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Subtensor-parallel TT cross approximation"};
    app.require_subcommand(1);
    Options o;
    CostOptions c;

    auto* dec = app.add_subcommand("decompose", "build a TT approximation and write container, sidecar and stats");
    add_common(dec, o);
    dec->add_flag("--sweep", o.sweep, "run the rank-schedule sweep instead");
    auto* sweep = app.add_subcommand("sweep", "sampled error along the incremental rank schedule (CSV)");
    add_common(sweep, o);
    auto* bench = app.add_subcommand("bench", "phase timings and traffic per process grid (CSV)");
    add_common(bench, o);
    bench->add_option("--repeats", o.repeats, "runs per grid; the minimum time is reported");
    bench->add_option("--mode", o.mode, "strong or weak");
    auto* costc = app.add_subcommand("cost", "closed-form communication bounds (CSV)");
    costc->add_option("--order", c.d, "d");
    costc->add_option("--rank", c.r, "r");
    costc->add_option("--w", c.w, "subtensors per process per dimension");
    costc->add_option("--m", c.m, "subtensor mode size");
    costc->add_option("--P", c.p, "processes per dimension");
    costc->add_option("--pivots", c.n, "N for the T-build bound");
    costc->add_option("--out", c.out, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (dec->parsed())
            return cmd_decompose(o);
        if (sweep->parsed())
            return cmd_sweep(o);
        if (bench->parsed())
            return cmd_bench(o);
        return cmd_cost(c);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ArgumentError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DegeneratePivotError& e) {
        std::cerr << "degenerate pivot: " << e.what() << '\n';
        return kDegenerate;
    } catch (const SingularCoreError& e) {
        std::cerr << "singular core: " << e.what() << '\n';
        return kDegenerate;
    } catch (const DeadlockError& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kRuntime;
    } catch (const RuntimeAborted& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kRuntime;
    } catch (const RoutingError& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kRuntime;
    } catch (const CollectiveContractError& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}

} // namespace ttx::cli
