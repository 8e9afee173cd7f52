#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ttx/models.hpp"
#include "ttx/ttcross.hpp"

namespace ttx::cli {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDegenerate = 3, kRuntime = 4 };

struct ModelSpec {
    std::string name = "hilbert"; ///< hilbert, maxwellian-2d2v, maxwellian-3d3v, rank1
    int dims = 3;
    std::vector<Index> sizes;      ///< one value broadcasts
    std::string ordering;          ///< Maxwellian only; empty = standard order
};

/// Throws ConfigError on an unknown model or inconsistent sizes.
std::unique_ptr<ElementOracle> make_model(const ModelSpec& spec);

/// Comma-separated positive integers, e.g. "2,2,2".
std::vector<Index> parse_list(const std::string& text);

int run_cli(int argc, char** argv);

} // namespace ttx::cli
