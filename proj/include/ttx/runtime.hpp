#pragma once

// In-process SPMD runtime: R logical ranks on R threads exchanging flat arrays
// of doubles through blocking FIFO queues.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ttx/errors.hpp"

namespace ttx {

using Payload = std::vector<double>;

struct CommStats {
    std::uint64_t elements_sent = 0;
    std::uint64_t elements_received = 0;
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_received = 0;

    CommStats& operator+=(const CommStats& o) noexcept;
    friend CommStats operator-(CommStats a, const CommStats& b) noexcept;
    friend bool operator==(const CommStats&, const CommStats&) = default;
};

void write_stats_csv(std::ostream& out, std::span<const CommStats> per_rank);

namespace detail {
class Hub;
}

class Communicator {
public:
    int size() const noexcept { return static_cast<int>(members_.size()); }
    int rank() const noexcept { return my_index_; }
    int world_rank() const noexcept { return members_[static_cast<std::size_t>(my_index_)]; }
    int world_rank_of(int r) const { return members_.at(static_cast<std::size_t>(r)); }
    const std::string& context() const noexcept { return context_; }

    /// Point-to-point; messages match on (source, destination, tag), FIFO.
    void send(int dest, std::span<const double> payload, int tag = 0) const;
    Payload receive(int src, int tag = 0) const;

    /// Concatenation of every member's payload in rank order.
    Payload allgather(std::span<const double> payload) const;
    /// Root receives the concatenation; other members get an empty array.
    Payload gather(int root, std::span<const double> payload) const;
    /// Synchronisation only; not counted in CommStats.
    void barrier() const;

    /// Sub-communicator over `members` (ranks of this communicator, any order;
    /// new rank = position in the list). Every member must call with the same
    /// name and list. Throws ArgumentError if the caller is not listed.
    Communicator subgroup(const std::string& name, std::span<const int> members) const;

    /// This rank's counters (world-level, summed over all communicators).
    CommStats stats() const;

private:
    friend class detail::Hub;
    Communicator(std::shared_ptr<detail::Hub> hub, std::vector<int> members, int my_index, std::string context);

    std::shared_ptr<detail::Hub> hub_;
    std::vector<int> members_;
    int my_index_ = 0;
    std::string context_;
};

struct RuntimeOptions {
    /// How long every live rank must stay blocked before a deadlock is declared.
    std::chrono::milliseconds deadlock_timeout{2000};
};

/// Run `body` on `ranks` logical ranks and wait for all of them. The first
/// exception raised by any rank is rethrown here after the others have been
/// aborted. Returns the final per-rank counters.
std::vector<CommStats> run_simulated(int ranks, const std::function<void(Communicator&)>& body,
                                     const RuntimeOptions& options = {});

/// Rank count from TTX_RANKS, or `fallback` when unset. Throws ConfigError on
/// a malformed value.
int ranks_from_env(int fallback);

} // namespace ttx
