#include "ttx/runtime.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace ttx {

CommStats& CommStats::operator+=(const CommStats& o) noexcept {
    elements_sent += o.elements_sent;
    elements_received += o.elements_received;
    messages_sent += o.messages_sent;
    messages_received += o.messages_received;
    return *this;
}

CommStats operator-(CommStats a, const CommStats& b) noexcept {
    a.elements_sent -= b.elements_sent;
    a.elements_received -= b.elements_received;
    a.messages_sent -= b.messages_sent;
    a.messages_received -= b.messages_received;
    return a;
}

void write_stats_csv(std::ostream& out, std::span<const CommStats> per_rank) {
    out << "rank,elements_sent,elements_received,messages_sent,messages_received\n";
    for (std::size_t r = 0; r < per_rank.size(); ++r) {
        const auto& s = per_rank[r];
        out << r << ',' << s.elements_sent << ',' << s.elements_received << ',' << s.messages_sent << ','
            << s.messages_received << '\n';
    }
}

namespace detail {

class Hub {
public:
    Hub(int ranks, RuntimeOptions options)
        : options_(options), stats_(static_cast<std::size_t>(ranks)), waiting_(static_cast<std::size_t>(ranks)),
          live_(ranks) {}

    static Communicator world(const std::shared_ptr<Hub>& hub, int rank, int ranks) {
        std::vector<int> members(static_cast<std::size_t>(ranks));
        for (int r = 0; r < ranks; ++r)
            members[static_cast<std::size_t>(r)] = r;
        return Communicator(hub, std::move(members), rank, "world");
    }

    static Communicator make(const std::shared_ptr<Hub>& hub, std::vector<int> members, int index,
                             std::string context) {
        return Communicator(hub, std::move(members), index, std::move(context));
    }

    void push(int src, int dst, const std::string& channel, Payload payload) {
        std::lock_guard lock(mutex_);
        throw_if_aborted();
        auto& s = stats_[static_cast<std::size_t>(src)];
        s.elements_sent += payload.size();
        s.messages_sent += 1;
        queues_[{src, dst, channel}].push_back(std::move(payload));
        ++epoch_;
        cv_.notify_all();
    }

    Payload pop(int src, int dst, const std::string& channel) {
        std::unique_lock lock(mutex_);
        auto& q = queues_[{src, dst, channel}];
        std::ostringstream what;
        what << "rank " << dst << " waiting for a message from rank " << src << " on " << channel;
        wait(lock, dst, [&] { return !q.empty(); }, what.str());
        Payload p = std::move(q.front());
        q.pop_front();
        auto& s = stats_[static_cast<std::size_t>(dst)];
        s.elements_received += p.size();
        s.messages_received += 1;
        return p;
    }

    void barrier(const std::string& context, int group_size, int world_rank) {
        std::unique_lock lock(mutex_);
        auto& b = barriers_[context];
        const std::uint64_t generation = b.generation;
        if (++b.arrived == group_size) {
            b.arrived = 0;
            ++b.generation;
            ++epoch_;
            cv_.notify_all();
            throw_if_aborted();
            return;
        }
        wait(lock, world_rank, [&] { return b.generation != generation; },
             "rank " + std::to_string(world_rank) + " waiting in barrier of " + context);
    }

    CommStats stats(int world_rank) {
        std::lock_guard lock(mutex_);
        return stats_[static_cast<std::size_t>(world_rank)];
    }

    std::vector<CommStats> all_stats() {
        std::lock_guard lock(mutex_);
        return stats_;
    }

    /// Record a rank failure; the first one becomes the reported cause.
    void fail(int world_rank, const std::string& what) {
        std::lock_guard lock(mutex_);
        if (!aborted_) {
            aborted_ = true;
            origin_ = world_rank;
            reason_ = "rank " + std::to_string(world_rank) + " failed: " + what;
        }
        cv_.notify_all();
    }

    void finished() {
        std::lock_guard lock(mutex_);
        --live_;
        ++epoch_;
        cv_.notify_all();
    }

    int origin() {
        std::lock_guard lock(mutex_);
        return origin_;
    }

private:
    template <typename Pred>
    void wait(std::unique_lock<std::mutex>& lock, int world_rank, Pred ready, const std::string& what) {
        waiting_[static_cast<std::size_t>(world_rank)] = what;
        ++blocked_;
        struct Unblock {
            Hub& h;
            int r;
            ~Unblock() {
                --h.blocked_;
                h.waiting_[static_cast<std::size_t>(r)].clear();
            }
        } unblock{*this, world_rank};
        cv_.notify_all();
        for (;;) {
            throw_if_aborted();
            if (ready())
                return;
            if (blocked_ == live_) {
                const std::uint64_t seen = epoch_;
                const auto deadline = std::chrono::steady_clock::now() + options_.deadlock_timeout;
                while (!aborted_ && !ready() && epoch_ == seen &&
                       cv_.wait_until(lock, deadline) != std::cv_status::timeout) {
                }
                if (!aborted_ && !ready() && blocked_ == live_ && epoch_ == seen)
                    declare_deadlock();
            } else {
                cv_.wait(lock);
            }
        }
    }

    void declare_deadlock() {
        std::ostringstream msg;
        msg << "deadlock: all " << live_ << " live ranks blocked";
        for (const auto& w : waiting_)
            if (!w.empty())
                msg << "; " << w;
        aborted_ = true;
        deadlock_ = true;
        reason_ = msg.str();
        cv_.notify_all();
    }

    void throw_if_aborted() const {
        if (!aborted_)
            return;
        if (deadlock_)
            throw DeadlockError(reason_);
        throw RuntimeAborted(reason_);
    }

    RuntimeOptions options_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::map<std::tuple<int, int, std::string>, std::deque<Payload>> queues_;
    struct BarrierState {
        int arrived = 0;
        std::uint64_t generation = 0;
    };
    std::map<std::string, BarrierState> barriers_;
    std::vector<CommStats> stats_;
    std::vector<std::string> waiting_;
    int live_;
    int blocked_ = 0;
    std::uint64_t epoch_ = 0;
    bool aborted_ = false;
    bool deadlock_ = false;
    int origin_ = -1;
    std::string reason_;
};

} // namespace detail

Communicator::Communicator(std::shared_ptr<detail::Hub> hub, std::vector<int> members, int my_index,
                           std::string context)
    : hub_(std::move(hub)), members_(std::move(members)), my_index_(my_index), context_(std::move(context)) {}

void Communicator::send(int dest, std::span<const double> payload, int tag) const {
    if (dest < 0 || dest >= size())
        throw RoutingError("send to unknown rank " + std::to_string(dest) + " in " + context_);
    if (dest == my_index_)
        throw RoutingError("send to self (rank " + std::to_string(dest) + ") in " + context_);
    hub_->push(world_rank(), world_rank_of(dest), context_ + "#p2p" + std::to_string(tag),
               Payload(payload.begin(), payload.end()));
}

Payload Communicator::receive(int src, int tag) const {
    if (src < 0 || src >= size() || src == my_index_)
        throw RoutingError("receive from invalid rank " + std::to_string(src) + " in " + context_);
    return hub_->pop(world_rank_of(src), world_rank(), context_ + "#p2p" + std::to_string(tag));
}

Payload Communicator::allgather(std::span<const double> payload) const {
    const std::string channel = context_ + "#coll";
    for (int r = 0; r < size(); ++r)
        if (r != my_index_)
            hub_->push(world_rank(), world_rank_of(r), channel, Payload(payload.begin(), payload.end()));
    Payload out;
    out.reserve(payload.size() * static_cast<std::size_t>(size()));
    bool mismatch = false;
    for (int r = 0; r < size(); ++r) {
        if (r == my_index_) {
            out.insert(out.end(), payload.begin(), payload.end());
            continue;
        }
        Payload p = hub_->pop(world_rank_of(r), world_rank(), channel);
        mismatch = mismatch || p.size() != payload.size();
        out.insert(out.end(), p.begin(), p.end());
    }
    if (mismatch)
        throw CollectiveContractError("allgather payload lengths differ in " + context_);
    return out;
}

Payload Communicator::gather(int root, std::span<const double> payload) const {
    if (root < 0 || root >= size())
        throw RoutingError("gather root out of range in " + context_);
    const std::string channel = context_ + "#coll";
    Payload out;
    bool mismatch = false;
    if (my_index_ == root) {
        for (int r = 0; r < size(); ++r) {
            if (r == root) {
                out.insert(out.end(), payload.begin(), payload.end());
                continue;
            }
            Payload p = hub_->pop(world_rank_of(r), world_rank(), channel);
            mismatch = mismatch || p.size() != payload.size();
            out.insert(out.end(), p.begin(), p.end());
        }
    } else {
        hub_->push(world_rank(), world_rank_of(root), channel, Payload(payload.begin(), payload.end()));
    }
    barrier();
    if (mismatch)
        throw CollectiveContractError("gather payload lengths differ in " + context_);
    return out;
}

void Communicator::barrier() const {
    if (size() == 1)
        return;
    hub_->barrier(context_, size(), world_rank());
}

Communicator Communicator::subgroup(const std::string& name, std::span<const int> members) const {
    std::vector<int> world;
    int index = -1;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const int r = members[i];
        if (r < 0 || r >= size())
            throw ArgumentError("subgroup member " + std::to_string(r) + " outside communicator");
        if (std::find(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(i), r) !=
            members.begin() + static_cast<std::ptrdiff_t>(i))
            throw ArgumentError("duplicate subgroup member");
        world.push_back(world_rank_of(r));
        if (r == my_index_)
            index = static_cast<int>(i);
    }
    if (index < 0)
        throw ArgumentError("caller is not a member of subgroup " + name);
    return detail::Hub::make(hub_, std::move(world), index, context_ + "/" + name);
}

CommStats Communicator::stats() const { return hub_->stats(world_rank()); }

std::vector<CommStats> run_simulated(int ranks, const std::function<void(Communicator&)>& body,
                                     const RuntimeOptions& options) {
    if (ranks < 1)
        throw ConfigError("rank count must be >= 1");
    auto hub = std::make_shared<detail::Hub>(ranks, options);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(ranks));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(ranks));
    for (int r = 0; r < ranks; ++r) {
        threads.emplace_back([&, r] {
            Communicator comm = detail::Hub::world(hub, r, ranks);
            try {
                body(comm);
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(r)] = std::current_exception();
                hub->fail(r, e.what());
            } catch (...) {
                errors[static_cast<std::size_t>(r)] = std::current_exception();
                hub->fail(r, "unknown exception");
            }
            hub->finished();
        });
    }
    for (auto& t : threads)
        t.join();
    const int origin = hub->origin();
    if (origin >= 0 && errors[static_cast<std::size_t>(origin)])
        std::rethrow_exception(errors[static_cast<std::size_t>(origin)]);
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return hub->all_stats();
}

int ranks_from_env(int fallback) {
    const char* v = std::getenv("TTX_RANKS");
    if (v == nullptr || *v == '\0')
        return fallback;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1 || n > 4096)
        throw ConfigError(std::string("TTX_RANKS must be a positive integer, got '") + v + "'");
    return static_cast<int>(n);
}

} // namespace ttx
