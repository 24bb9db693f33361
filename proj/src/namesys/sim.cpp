#include "reclaim/namesys/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

#include "reclaim/common/encoding.hpp"
#include "reclaim/common/error.hpp"

namespace reclaim::namesys {

namespace {

int common_prefix_bits(const NodeId& a, const NodeId& b) {
    for (std::size_t i = 0; i < a.bytes.size(); ++i) {
        const std::uint8_t x = a.bytes[i] ^ b.bytes[i];
        if (x != 0) return static_cast<int>(i * 8) + std::countl_zero(x);
    }
    return 256;
}

std::string format_ms(SimTime t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(t / kMicrosPerMs),
                  static_cast<long long>(t % kMicrosPerMs));
    return buf;
}

}  // namespace

QueryKey xor_distance(const NodeId& a, const QueryKey& b) {
    QueryKey d;
    for (std::size_t i = 0; i < d.bytes.size(); ++i) d.bytes[i] = a.bytes[i] ^ b.bytes[i];
    return d;
}

std::string_view topology_name(Topology t) {
    return t == Topology::Clique ? "clique" : "random-regular";
}

Topology parse_topology(std::string_view s) {
    if (s == "clique") return Topology::Clique;
    if (s == "random-regular") return Topology::RandomRegular;
    fail(Errc::InvalidArgument, "unknown topology '" + std::string(s) + "'");
}

std::string trace_csv(const std::vector<TraceEvent>& events, bool header) {
    std::string out;
    if (header) {
        out += kTraceHeader;
        out += '\n';
    }
    for (const auto& e : events) {
        out += format_ms(e.time);
        out += ',';
        out += e.event;
        out += ',';
        out += std::to_string(e.node);
        out += ',';
        out += encoding::hex(e.key.view());
        out += ',';
        out += e.detail;
        out += '\n';
    }
    return out;
}

// --- BlobCache -------------------------------------------------------------

const StoredBlob* BlobCache::find(const QueryKey& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second.second);
    return &it->second.first;
}

const StoredBlob* BlobCache::peek(const QueryKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second.first;
}

StoredBlob* BlobCache::mutable_entry(const QueryKey& key) {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second.first;
}

std::optional<QueryKey> BlobCache::put(const QueryKey& key, StoredBlob blob) {
    if (capacity_ == 0) return std::nullopt;
    if (auto it = entries_.find(key); it != entries_.end()) {
        it->second.first = std::move(blob);
        order_.splice(order_.begin(), order_, it->second.second);
        return std::nullopt;
    }
    std::optional<QueryKey> evicted;
    if (entries_.size() >= capacity_) {
        evicted = order_.back();
        entries_.erase(order_.back());
        order_.pop_back();
    }
    order_.push_front(key);
    entries_.emplace(key, std::make_pair(std::move(blob), order_.begin()));
    return evicted;
}

bool BlobCache::erase(const QueryKey& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return false;
    order_.erase(it->second.second);
    entries_.erase(it);
    return true;
}

std::vector<std::pair<QueryKey, const StoredBlob*>> BlobCache::entries_lru() const {
    std::vector<std::pair<QueryKey, const StoredBlob*>> out;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it)
        out.emplace_back(*it, &entries_.at(*it).first);
    return out;
}

// --- construction ----------------------------------------------------------

SimNetwork::SimNetwork(SimConfig config) : config_(config), rng_(config.seed) {
    if (config_.size < 2) fail(Errc::InvalidArgument, "network needs at least 2 nodes");
    if (config_.replication == 0) fail(Errc::InvalidArgument, "replication factor must be positive");
    config_.replication = std::min(config_.replication, config_.size);
    if (config_.bucket_size == 0) fail(Errc::InvalidArgument, "bucket size must be positive");
    if (config_.latency.median_ms <= 0 || config_.latency.sigma < 0)
        fail(Errc::InvalidArgument, "invalid latency parameters");
    if (config_.lookup_width == 0) fail(Errc::InvalidArgument, "lookup width must be positive");

    nodes_.resize(config_.size);
    for (auto& n : nodes_) {
        for (std::size_t i = 0; i < n.id.bytes.size(); i += 8) {
            const std::uint64_t r = rng_();
            for (std::size_t b = 0; b < 8; ++b) n.id.bytes[i + b] = static_cast<std::uint8_t>(r >> (8 * b));
        }
        n.cache = BlobCache(config_.cache_capacity);
    }
    build_topology();
    build_routing_tables();
}

void SimNetwork::build_topology() {
    const std::size_t n = nodes_.size();
    adjacency_.assign(n, {});
    if (config_.topology == Topology::Clique) {
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
                if (a != b) adjacency_[a].push_back(b);
        return;
    }

    const std::size_t d = config_.degree;
    if (d == 0 || d >= n || (n * d) % 2 != 0)
        fail(Errc::InvalidArgument, "random-regular topology needs 0 < degree < size and size*degree even");

    // Configuration model: pair up stubs, retry on self-loops, multi-edges
    // or a disconnected result.
    for (int attempt = 0; attempt < 10000; ++attempt) {
        std::vector<NodeIndex> stubs;
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t k = 0; k < d; ++k) stubs.push_back(v);
        for (std::size_t i = stubs.size(); i > 1; --i) std::swap(stubs[i - 1], stubs[random_index(i)]);

        std::vector<std::vector<NodeIndex>> adj(n);
        bool ok = true;
        for (std::size_t i = 0; ok && i < stubs.size(); i += 2) {
            const NodeIndex a = stubs[i], b = stubs[i + 1];
            if (a == b || std::find(adj[a].begin(), adj[a].end(), b) != adj[a].end()) ok = false;
            else {
                adj[a].push_back(b);
                adj[b].push_back(a);
            }
        }
        if (!ok) continue;

        distance_.assign(n, std::vector<std::uint16_t>(n, 0));
        bool connected = true;
        for (std::size_t src = 0; src < n && connected; ++src) {
            std::vector<int> dist(n, -1);
            std::queue<NodeIndex> frontier;
            dist[src] = 0;
            frontier.push(src);
            while (!frontier.empty()) {
                auto v = frontier.front();
                frontier.pop();
                for (auto w : adj[v])
                    if (dist[w] < 0) {
                        dist[w] = dist[v] + 1;
                        frontier.push(w);
                    }
            }
            for (std::size_t v = 0; v < n; ++v) {
                if (dist[v] < 0) {
                    connected = false;
                    break;
                }
                distance_[src][v] = static_cast<std::uint16_t>(dist[v]);
            }
        }
        if (!connected) continue;
        for (auto& a : adj) std::sort(a.begin(), a.end());
        adjacency_ = std::move(adj);
        return;
    }
    fail(Errc::InvalidArgument, "could not generate a connected random-regular topology");
}

void SimNetwork::build_routing_tables() {
    const std::size_t n = nodes_.size();
    for (std::size_t x = 0; x < n; ++x) {
        std::map<int, std::vector<NodeIndex>> buckets;
        for (std::size_t y = 0; y < n; ++y)
            if (y != x) buckets[common_prefix_bits(nodes_[x].id, nodes_[y].id)].push_back(y);
        auto& contacts = nodes_[x].contacts;
        contacts.clear();
        for (auto& [cpl, members] : buckets) {
            const std::size_t keep = std::min(members.size(), config_.bucket_size);
            // Partial Fisher-Yates: the first `keep` entries become a uniform sample.
            for (std::size_t i = 0; i < keep; ++i)
                std::swap(members[i], members[i + random_index(members.size() - i)]);
            contacts.insert(contacts.end(), members.begin(), members.begin() + static_cast<long>(keep));
        }
    }
}

std::size_t SimNetwork::link_count() const {
    std::size_t total = 0;
    for (const auto& a : adjacency_) total += a.size();
    return total / 2;
}

std::size_t SimNetwork::physical_distance(NodeIndex a, NodeIndex b) const {
    if (a == b) return 0;
    if (config_.topology == Topology::Clique) return 1;
    return distance_.at(a).at(b);
}

// --- randomness ------------------------------------------------------------

std::size_t SimNetwork::random_index(std::size_t n) {
    if (n == 0) fail(Errc::InvalidArgument, "random_index of empty range");
    // Rejection sampling keeps the draw uniform and independent of the
    // standard library's distribution implementation.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do r = rng_();
    while (r >= limit);
    return static_cast<std::size_t>(r % n);
}

double SimNetwork::uniform01() {
    return static_cast<double>((rng_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
}

SimTime SimNetwork::link_delay() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    const double ms = std::exp(std::log(config_.latency.median_ms) + config_.latency.sigma * z);
    return std::max<SimTime>(1, std::llround(ms * static_cast<double>(kMicrosPerMs)));
}

SimTime SimNetwork::message_delay(NodeIndex from, NodeIndex to) {
    SimTime total = 0;
    for (std::size_t h = physical_distance(from, to); h > 0; --h) total += link_delay();
    return total;
}

// --- event loop ------------------------------------------------------------

void SimNetwork::schedule(SimTime at, bool background, std::function<void()> action) {
    if (at < now_) at = now_;
    if (!background) ++foreground_pending_;
    queue_.push(Event{at, seq_++, background, std::move(action)});
}

std::vector<TraceEvent> SimNetwork::step(SimTime until) {
    if (until < now_) fail(Errc::InvalidArgument, "cannot step the simulation backwards");
    const std::size_t mark = trace_.size();
    while (!queue_.empty() && queue_.top().at <= until) {
        Event ev = queue_.top();
        queue_.pop();
        now_ = ev.at;
        if (!ev.background) --foreground_pending_;
        ev.action();
    }
    now_ = until;
    return {trace_.begin() + static_cast<long>(mark), trace_.end()};
}

void SimNetwork::settle() {
    while (foreground_pending_ > 0 && !queue_.empty()) {
        Event ev = queue_.top();
        queue_.pop();
        now_ = ev.at;
        if (!ev.background) --foreground_pending_;
        ev.action();
    }
}

void SimNetwork::emit(std::string_view event, NodeIndex node, const QueryKey& key, std::string detail) {
    if (!config_.record_trace) return;
    trace_.push_back(TraceEvent{now_, std::string(event), node, key, std::move(detail)});
}

void SimNetwork::send(NodeIndex from, NodeIndex to, const QueryKey& key, std::string_view what,
                      std::function<void()> on_arrival) {
    emit("send", from, key, std::string(what) + ">" + std::to_string(to));
    const SimTime delay = message_delay(from, to);
    schedule(now_ + delay, false,
             [this, from, to, key, what = std::string(what), on_arrival = std::move(on_arrival)] {
                 emit("receive", to, key, what + "<" + std::to_string(from));
                 on_arrival();
             });
}

// --- storage ---------------------------------------------------------------

const StoredBlob* SimNetwork::serve(NodeIndex node, const QueryKey& key, bool& from_cache) {
    auto& n = nodes_.at(node);
    const StoredBlob* best = nullptr;
    from_cache = false;
    if (auto it = n.store.find(key); it != n.store.end() && it->second.expiration_ms * kMicrosPerMs > now_)
        best = &it->second;
    if (const auto* c = n.cache.find(key); c && c->expiration_ms * kMicrosPerMs > now_) {
        if (!best || c->expiration_ms > best->expiration_ms) {
            best = c;
            from_cache = true;
        }
    }
    return best;
}

bool SimNetwork::accept_blob(NodeIndex node, const QueryKey& key, ByteView blob,
                             std::int64_t& expiration_ms, std::string_view what) {
    try {
        const auto header = verify_blob(blob);
        if (header.query_key != key) {
            emit("drop", node, key, std::string(what) + ":key-mismatch");
            return false;
        }
        if (header.expiration_ms * kMicrosPerMs <= now_) {
            emit("drop", node, key, std::string(what) + ":expired");
            return false;
        }
        expiration_ms = header.expiration_ms;
        return true;
    } catch (const Error& e) {
        emit("drop", node, key, std::string(what) + ":" + std::string(errc_name(e.code())));
        return false;
    }
}

void SimNetwork::put_store(NodeIndex node, const QueryKey& key, Bytes blob, std::int64_t expiration_ms) {
    auto& store = nodes_.at(node).store;
    if (auto it = store.find(key); it != store.end() && it->second.expiration_ms > expiration_ms) {
        emit("drop", node, key, "store:older");
        return;
    }
    store[key] = StoredBlob{std::move(blob), now_, expiration_ms};
    emit("store", node, key, "exp=" + std::to_string(expiration_ms));
    schedule_expiry(node, key, expiration_ms, false);
}

void SimNetwork::put_cache(NodeIndex node, const QueryKey& key, Bytes blob, std::int64_t expiration_ms) {
    auto& cache = nodes_.at(node).cache;
    if (const auto* existing = cache.peek(key); existing && existing->expiration_ms >= expiration_ms) return;
    if (auto evicted = cache.put(key, StoredBlob{std::move(blob), now_, expiration_ms}))
        emit("evict", node, *evicted);
    emit("cache", node, key, "exp=" + std::to_string(expiration_ms));
    schedule_expiry(node, key, expiration_ms, true);
}

void SimNetwork::schedule_expiry(NodeIndex node, const QueryKey& key, std::int64_t expiration_ms, bool cached) {
    schedule(expiration_ms * kMicrosPerMs, true, [this, node, key, expiration_ms, cached] {
        auto& n = nodes_.at(node);
        if (cached) {
            if (const auto* c = n.cache.peek(key); c && c->expiration_ms == expiration_ms) {
                n.cache.erase(key);
                emit("expire", node, key, "cache");
            }
        } else if (auto it = n.store.find(key); it != n.store.end() && it->second.expiration_ms == expiration_ms) {
            n.store.erase(it);
            emit("expire", node, key, "store");
        }
    });
}

std::vector<NodeIndex> SimNetwork::holders(const QueryKey& key) const {
    std::vector<NodeIndex> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].store.contains(key)) out.push_back(i);
    return out;
}

std::vector<NodeIndex> SimNetwork::closest_nodes(const QueryKey& key, std::size_t count) const {
    std::vector<NodeIndex> all(nodes_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    count = std::min(count, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<long>(count), all.end(), [&](auto a, auto b) {
        return xor_distance(nodes_[a].id, key) < xor_distance(nodes_[b].id, key);
    });
    all.resize(count);
    return all;
}

std::vector<NodeIndex> SimNetwork::closest_contacts(NodeIndex node, const QueryKey& key, std::size_t count) const {
    std::vector<NodeIndex> c = nodes_.at(node).contacts;
    count = std::min(count, c.size());
    std::partial_sort(c.begin(), c.begin() + static_cast<long>(count), c.end(), [&](auto a, auto b) {
        return xor_distance(nodes_[a].id, key) < xor_distance(nodes_[b].id, key);
    });
    c.resize(count);
    return c;
}

// --- lookups ---------------------------------------------------------------

void SimNetwork::merge_contacts(Lookup& lk, const std::vector<NodeIndex>& contacts) {
    for (auto c : contacts) {
        if (c == lk.origin) continue;
        if (std::any_of(lk.shortlist.begin(), lk.shortlist.end(), [&](const auto& x) { return x.node == c; }))
            continue;
        lk.shortlist.push_back(Candidate{c, xor_distance(nodes_[c].id, lk.key), CandidateState::Fresh});
    }
    std::stable_sort(lk.shortlist.begin(), lk.shortlist.end(),
                     [](const auto& a, const auto& b) { return a.distance < b.distance; });
}

void SimNetwork::query_next(std::uint64_t id) {
    auto& lk = lookups_.at(id);
    Candidate* next = nullptr;
    std::size_t considered = 0;
    for (auto& c : lk.shortlist) {
        if (considered++ >= reply_width()) break;
        if (c.state == CandidateState::Fresh) {
            next = &c;
            break;
        }
    }

    if (!next) {
        std::vector<NodeIndex> pool{lk.origin};
        for (const auto& c : lk.shortlist)
            if (c.state == CandidateState::Queried) pool.push_back(c.node);
        std::stable_sort(pool.begin(), pool.end(), [&](auto a, auto b) {
            return xor_distance(nodes_[a].id, lk.key) < xor_distance(nodes_[b].id, lk.key);
        });
        pool.resize(std::min(pool.size(), config_.replication));
        Lookup done = std::move(lk);
        lookups_.erase(id);
        done.done(std::move(pool));
        return;
    }

    next->state = CandidateState::Queried;
    const NodeIndex target = next->node;
    const QueryKey key = lk.key;
    const NodeIndex origin = lk.origin;
    send(origin, target, key, "find", [this, id, origin, target, key] {
        auto contacts = closest_contacts(target, key, reply_width());
        send(target, origin, key, "nodes", [this, id, contacts = std::move(contacts)] {
            merge_contacts(lookups_.at(id), contacts);
            query_next(id);
        });
    });
}

void SimNetwork::start_find_nodes(NodeIndex origin, const QueryKey& key,
                                  std::function<void(std::vector<NodeIndex>)> done) {
    const auto id = next_lookup_++;
    Lookup lk;
    lk.origin = origin;
    lk.key = key;
    lk.done = std::move(done);
    auto& stored = lookups_.emplace(id, std::move(lk)).first->second;
    merge_contacts(stored, closest_contacts(origin, key, reply_width()));
    query_next(id);
}

// --- recursive get -----------------------------------------------------------

std::size_t SimNetwork::walk_length() {
    if (config_.walk_hops >= 0) return static_cast<std::size_t>(config_.walk_hops);
    // Stochastic rounding keeps the expected walk length a smooth function of size.
    const double mean = config_.walk_scale * std::log2(static_cast<double>(nodes_.size()));
    const double whole = std::floor(mean);
    return static_cast<std::size_t>(whole) + (uniform01() <= mean - whole ? 1 : 0);
}

std::optional<NodeIndex> SimNetwork::next_hop(GetRequest& req) {
    const NodeIndex here = req.path.back();
    const auto& contacts = nodes_[here].contacts;

    if (req.walk_left > 0) {
        --req.walk_left;
        std::vector<NodeIndex> fresh;
        for (auto c : contacts)
            if (std::find(req.path.begin(), req.path.end(), c) == req.path.end()) fresh.push_back(c);
        if (!fresh.empty()) return fresh[random_index(fresh.size())];
    }
    // Greedy phase: strictly closer each hop, so it cannot loop and ends at
    // the node closest to the key.
    std::optional<NodeIndex> best;
    QueryKey best_distance = xor_distance(nodes_[here].id, req.key);
    for (auto c : contacts) {
        const auto d = xor_distance(nodes_[c].id, req.key);
        if (d < best_distance) {
            best = c;
            best_distance = d;
        }
    }
    return best;
}

void SimNetwork::forward_get(std::uint64_t id) {
    auto& req = gets_.at(id);
    const NodeIndex here = req.path.back();
    const auto next = next_hop(req);
    if (!next) {
        emit("not-found", here, req.key, "hops=" + std::to_string(req.path.size() - 1));
        return_reply(id, req.path.size() - 1, {}, false);
        return;
    }
    const NodeIndex to = *next;
    send(here, to, req.key, "get", [this, id, to] {
        auto& req = gets_.at(id);
        req.path.push_back(to);
        bool from_cache = false;
        if (const auto* hit = serve(to, req.key, from_cache)) {
            emit(from_cache ? "cache-hit" : "hit", to, req.key, "hops=" + std::to_string(req.path.size() - 1));
            req.served_by = to;
            req.from_cache = from_cache;
            return_reply(id, req.path.size() - 1, hit->blob, false);
            return;
        }
        forward_get(id);
    });
}

// The reply retraces the request path. Every node on the way verifies the
// blob before caching it and forwards nothing it could not verify.
void SimNetwork::return_reply(std::uint64_t id, std::size_t pos, Bytes blob, bool invalid) {
    auto& req = gets_.at(id);
    if (pos == 0) {
        finish_get(id, std::move(blob), invalid);
        return;
    }
    const NodeIndex from = req.path[pos], to = req.path[pos - 1];
    send(from, to, req.key, "reply", [this, id, pos, to, blob = std::move(blob), invalid]() mutable {
        auto& req = gets_.at(id);
        if (!blob.empty() && to != req.path.front()) {
            std::int64_t exp = 0;
            if (accept_blob(to, req.key, blob, exp, "reply")) {
                put_cache(to, req.key, blob, exp);
            } else {
                blob.clear();
                invalid = true;
            }
        }
        return_reply(id, pos - 1, std::move(blob), invalid);
    });
}

void SimNetwork::finish_get(std::uint64_t id, Bytes blob, bool invalid) {
    GetRequest req = std::move(gets_.at(id));
    gets_.erase(id);
    LookupOutcome out;
    out.hops = static_cast<int>(req.path.size()) - 1;
    out.latency = now_ - req.started;
    out.invalid_seen = invalid;
    if (!blob.empty()) {
        std::int64_t exp = 0;
        if (accept_blob(req.path.front(), req.key, blob, exp, "reply")) {
            put_cache(req.path.front(), req.key, blob, exp);
            out.found = true;
            out.blob = std::move(blob);
            out.served_by = req.served_by;
            out.from_cache = req.from_cache;
        } else {
            out.invalid_seen = true;
        }
    }
    req.done(std::move(out));
}

void SimNetwork::start_get(NodeIndex origin, const QueryKey& key, std::function<void(LookupOutcome)> done) {
    if (origin >= nodes_.size()) fail(Errc::InvalidArgument, "origin node out of range");
    bool from_cache = false;
    if (const auto* local = serve(origin, key, from_cache)) {
        emit(from_cache ? "cache-hit" : "hit", origin, key, "hops=0");
        LookupOutcome out;
        out.found = true;
        out.blob = local->blob;
        out.served_by = origin;
        out.from_cache = from_cache;
        schedule(now_, false, [out = std::move(out), done = std::move(done)]() mutable { done(std::move(out)); });
        return;
    }
    const auto id = next_lookup_++;
    GetRequest req;
    req.key = key;
    req.started = now_;
    req.path.push_back(origin);
    req.walk_left = walk_length();
    req.done = std::move(done);
    gets_.emplace(id, std::move(req));
    forward_get(id);
}

void SimNetwork::start_store(NodeIndex origin, const QueryKey& key, Bytes blob,
                             std::function<void(std::vector<NodeIndex>)> done) {
    if (origin >= nodes_.size()) fail(Errc::InvalidArgument, "origin node out of range");
    start_find_nodes(origin, key, [this, origin, key, blob = std::move(blob),
                                   done = std::move(done)](std::vector<NodeIndex> closest) {
        for (auto target : closest) {
            if (target == origin) {
                std::int64_t exp = 0;
                if (accept_blob(origin, key, blob, exp, "store")) put_store(origin, key, blob, exp);
                continue;
            }
            send(origin, target, key, "store", [this, target, key, blob] {
                std::int64_t exp = 0;
                if (accept_blob(target, key, blob, exp, "store")) put_store(target, key, blob, exp);
            });
        }
        done(std::move(closest));
    });
}

void SimNetwork::start_remove(NodeIndex origin, const QueryKey& key, Bytes request,
                              std::function<void(std::size_t)> done) {
    if (origin >= nodes_.size()) fail(Errc::InvalidArgument, "origin node out of range");
    start_find_nodes(origin, key, [this, origin, key, request = std::move(request),
                                   done = std::move(done)](std::vector<NodeIndex> closest) {
        struct Tally {
            std::size_t outstanding;
            std::size_t removed = 0;
            std::function<void(std::size_t)> done;
        };
        auto tally = std::make_shared<Tally>(Tally{closest.size(), 0, done});
        auto apply = [this, key, request, tally](NodeIndex n) {
            auto& store = nodes_.at(n).store;
            if (auto it = store.find(key); it != store.end() && removal_matches(request, it->second.blob)) {
                store.erase(it);
                emit("remove", n, key);
                ++tally->removed;
            }
            if (--tally->outstanding == 0) tally->done(tally->removed);
        };
        for (auto target : closest) {
            if (target == origin) apply(target);
            else send(origin, target, key, "remove", [apply, target] { apply(target); });
        }
    });
}

// --- persistence -----------------------------------------------------------

nlohmann::json SimNetwork::save() const {
    if (!idle()) fail(Errc::InvalidArgument, "cannot save a network with messages in flight");
    nlohmann::json j;
    j["config"] = {
        {"size", config_.size},
        {"seed", config_.seed},
        {"topology", std::string(topology_name(config_.topology))},
        {"degree", config_.degree},
        {"latency_median_ms", config_.latency.median_ms},
        {"latency_sigma", config_.latency.sigma},
        {"replication", config_.replication},
        {"bucket_size", config_.bucket_size},
        {"lookup_width", config_.lookup_width},
        {"walk_hops", config_.walk_hops},
        {"walk_scale", config_.walk_scale},
        {"cache_capacity", config_.cache_capacity},
    };
    j["now_us"] = now_;
    std::ostringstream rng_state;
    rng_state << rng_;
    j["rng"] = rng_state.str();
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& n : nodes_) {
        nlohmann::json store = nlohmann::json::array();
        for (const auto& [k, b] : n.store)
            store.push_back({{"key", encoding::hex(k.view())},
                             {"blob", encoding::hex(b.blob)},
                             {"arrived_us", b.arrived},
                             {"expiration_ms", b.expiration_ms}});
        nlohmann::json cache = nlohmann::json::array();
        for (const auto& [k, b] : n.cache.entries_lru())
            cache.push_back({{"key", encoding::hex(k.view())},
                             {"blob", encoding::hex(b->blob)},
                             {"arrived_us", b->arrived},
                             {"expiration_ms", b->expiration_ms}});
        nodes.push_back({{"store", std::move(store)}, {"cache", std::move(cache)}});
    }
    return j;
}

std::unique_ptr<SimNetwork> SimNetwork::load(const nlohmann::json& j) {
    const auto& c = j.at("config");
    SimConfig cfg;
    cfg.size = c.at("size");
    cfg.seed = c.at("seed");
    cfg.topology = parse_topology(c.at("topology").get<std::string>());
    cfg.degree = c.at("degree");
    cfg.latency.median_ms = c.at("latency_median_ms");
    cfg.latency.sigma = c.at("latency_sigma");
    cfg.replication = c.at("replication");
    cfg.bucket_size = c.at("bucket_size");
    cfg.lookup_width = c.at("lookup_width");
    cfg.walk_hops = c.at("walk_hops");
    cfg.walk_scale = c.at("walk_scale");
    cfg.cache_capacity = c.at("cache_capacity");
    auto net = std::make_unique<SimNetwork>(cfg);

    net->now_ = j.at("now_us");
    std::istringstream rng_state(j.at("rng").get<std::string>());
    rng_state >> net->rng_;
    const auto& nodes = j.at("nodes");
    if (nodes.size() != net->nodes_.size()) fail(Errc::ParseError, "node count does not match config");
    auto entry = [](const nlohmann::json& e) {
        return std::make_pair(encoding::fixed_from<QueryKey>(encoding::unhex(e.at("key").get<std::string>())),
                              StoredBlob{encoding::unhex(e.at("blob").get<std::string>()), e.at("arrived_us"),
                                         e.at("expiration_ms")});
    };
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (const auto& e : nodes[i].at("store")) {
            auto [key, blob] = entry(e);
            const auto exp = blob.expiration_ms;
            net->nodes_[i].store.emplace(key, std::move(blob));
            net->schedule_expiry(i, key, exp, false);
        }
        for (const auto& e : nodes[i].at("cache")) {
            auto [key, blob] = entry(e);
            const auto exp = blob.expiration_ms;
            net->nodes_[i].cache.put(key, std::move(blob));
            net->schedule_expiry(i, key, exp, true);
        }
    }
    return net;
}

}  // namespace reclaim::namesys
