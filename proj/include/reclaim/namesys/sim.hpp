#pragma once

// Deterministic discrete-event simulation of a replicated DHT.
//
// Overlay routing is XOR-metric: every node keeps up to `bucket_size`
// contacts per prefix bucket. Gets are forwarded hop by hop, first along a
// short random walk and then greedily towards the key; the reply retraces
// the path and every node on it caches the record. Stores locate the
// closest nodes with an iterative lookup. Messages between overlay nodes travel the
// shortest path of the physical topology; each physical link adds an
// independent log-normal delay. All randomness comes from one mt19937_64
// seeded by the config, so a (seed, script) pair fully determines the trace.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "reclaim/common/bytes.hpp"
#include "reclaim/namesys/record.hpp"

namespace reclaim::namesys {

using SimTime = std::int64_t;  // microseconds since simulation start
using NodeIndex = std::size_t;

inline constexpr SimTime kMicrosPerMs = 1000;

struct NodeIdTag {};
using NodeId = FixedBytes<32, NodeIdTag>;

enum class Topology { Clique, RandomRegular };

std::string_view topology_name(Topology t);
Topology parse_topology(std::string_view s);

struct LatencyModel {
    double median_ms = 10.0;
    double sigma = 0.6;  // of the underlying normal
};

struct SimConfig {
    std::size_t size = 50;
    std::uint64_t seed = 1;
    Topology topology = Topology::Clique;
    std::size_t degree = 4;  // random-regular only
    LatencyModel latency;
    std::size_t replication = 3;
    std::size_t bucket_size = 4;
    std::size_t lookup_width = 3;  // node lookups; never below replication
    int walk_hops = -1;            // fixed random-walk length for gets; -1 = derive from size
    double walk_scale = 1.0;       // derived walk length is walk_scale * log2(size) on average
    std::size_t cache_capacity = 1024;
    bool record_trace = true;
};

struct TraceEvent {
    SimTime time = 0;
    std::string event;
    NodeIndex node = 0;
    QueryKey key;
    std::string detail;
};

inline constexpr std::string_view kTraceHeader = "time_ms,event,node,query_key_hex,detail";
std::string trace_csv(const std::vector<TraceEvent>& events, bool header = true);

struct StoredBlob {
    Bytes blob;
    SimTime arrived = 0;
    std::int64_t expiration_ms = 0;
};

/// Bounded LRU map of query key to blob.
class BlobCache {
public:
    explicit BlobCache(std::size_t capacity) : capacity_(capacity) {}

    const StoredBlob* find(const QueryKey& key);  // refreshes recency
    const StoredBlob* peek(const QueryKey& key) const;
    /// Returns the evicted key, if the insert pushed one out.
    std::optional<QueryKey> put(const QueryKey& key, StoredBlob blob);
    bool erase(const QueryKey& key);
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t capacity() const { return capacity_; }

    /// Least recently used first.
    std::vector<std::pair<QueryKey, const StoredBlob*>> entries_lru() const;
    StoredBlob* mutable_entry(const QueryKey& key);

private:
    std::size_t capacity_;
    std::list<QueryKey> order_;  // front = most recent
    std::map<QueryKey, std::pair<StoredBlob, std::list<QueryKey>::iterator>> entries_;
};

struct DhtNode {
    NodeId id;
    std::map<QueryKey, StoredBlob> store;
    BlobCache cache{1024};
    std::vector<NodeIndex> contacts;  // routing table, flattened buckets
};

struct LookupOutcome {
    bool found = false;
    bool invalid_seen = false;
    Bytes blob;
    NodeIndex served_by = 0;
    bool from_cache = false;
    int hops = 0;
    SimTime latency = 0;
};

class SimNetwork {
public:
    /// Throws Errc::InvalidArgument for size < 2 or an unrealisable topology.
    explicit SimNetwork(SimConfig config);
    SimNetwork(const SimNetwork&) = delete;
    SimNetwork& operator=(const SimNetwork&) = delete;

    const SimConfig& config() const { return config_; }
    SimTime now() const { return now_; }
    std::int64_t now_ms() const { return now_ / kMicrosPerMs; }
    std::size_t size() const { return nodes_.size(); }

    const DhtNode& node(NodeIndex i) const { return nodes_.at(i); }
    /// Direct access for fault injection in tests.
    DhtNode& node_mut(NodeIndex i) { return nodes_.at(i); }
    const std::vector<std::vector<NodeIndex>>& adjacency() const { return adjacency_; }
    std::size_t link_count() const;
    std::size_t physical_distance(NodeIndex a, NodeIndex b) const;

    /// Processes every queued event up to and including `until`, then sets
    /// the clock to `until`. Returns the trace events produced.
    std::vector<TraceEvent> step(SimTime until);
    /// Runs until no foreground (message) events remain.
    void settle();
    bool idle() const { return foreground_pending_ == 0; }

    // Asynchronous operations; completion callbacks fire from inside the event loop.
    void start_get(NodeIndex origin, const QueryKey& key, std::function<void(LookupOutcome)> done);
    void start_store(NodeIndex origin, const QueryKey& key, Bytes blob,
                     std::function<void(std::vector<NodeIndex>)> done);
    void start_remove(NodeIndex origin, const QueryKey& key, Bytes request,
                      std::function<void(std::size_t removed)> done);

    void schedule(SimTime at, bool background, std::function<void()> action);

    /// Uniform draw from the simulation stream.
    std::size_t random_index(std::size_t n);

    std::vector<NodeIndex> holders(const QueryKey& key) const;
    std::vector<NodeIndex> closest_nodes(const QueryKey& key, std::size_t count) const;

    const std::vector<TraceEvent>& trace() const { return trace_; }
    void clear_trace() { trace_.clear(); }

    nlohmann::json save() const;
    /// Rebuilds a network from save(); topology and routing are re-derived from the config.
    static std::unique_ptr<SimNetwork> load(const nlohmann::json& j);

private:
    struct Event {
        SimTime at;
        std::uint64_t seq;
        bool background;
        std::function<void()> action;
    };
    struct EventLater {
        bool operator()(const Event& a, const Event& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    enum class CandidateState { Fresh, Queried };
    struct Candidate {
        NodeIndex node;
        QueryKey distance;
        CandidateState state;
    };
    // Iterative lookup for the nodes closest to a key (stores, removals).
    struct Lookup {
        NodeIndex origin = 0;
        QueryKey key;
        std::vector<Candidate> shortlist;
        std::function<void(std::vector<NodeIndex>)> done;
    };
    // Recursive get: a short random walk, then greedy forwarding; the reply
    // travels back along the request path.
    struct GetRequest {
        QueryKey key;
        SimTime started = 0;
        std::vector<NodeIndex> path;  // path[0] is the origin
        std::size_t walk_left = 0;
        NodeIndex served_by = 0;
        bool from_cache = false;
        std::function<void(LookupOutcome)> done;
    };

    void build_topology();
    void build_routing_tables();
    SimTime link_delay();
    SimTime message_delay(NodeIndex from, NodeIndex to);
    double uniform01();

    void send(NodeIndex from, NodeIndex to, const QueryKey& key, std::string_view what,
              std::function<void()> on_arrival);
    void emit(std::string_view event, NodeIndex node, const QueryKey& key, std::string detail = {});

    void start_find_nodes(NodeIndex origin, const QueryKey& key, std::function<void(std::vector<NodeIndex>)> done);
    void query_next(std::uint64_t id);
    void merge_contacts(Lookup& lk, const std::vector<NodeIndex>& contacts);

    std::size_t walk_length();
    std::optional<NodeIndex> next_hop(GetRequest& req);
    void forward_get(std::uint64_t id);
    void return_reply(std::uint64_t id, std::size_t pos, Bytes blob, bool invalid);
    void finish_get(std::uint64_t id, Bytes blob, bool invalid);
    std::vector<NodeIndex> closest_contacts(NodeIndex node, const QueryKey& key, std::size_t count) const;
    std::size_t reply_width() const { return std::max(config_.lookup_width, config_.replication); }

    const StoredBlob* serve(NodeIndex node, const QueryKey& key, bool& from_cache);
    bool accept_blob(NodeIndex node, const QueryKey& key, ByteView blob, std::int64_t& expiration_ms,
                     std::string_view what);
    void put_store(NodeIndex node, const QueryKey& key, Bytes blob, std::int64_t expiration_ms);
    void put_cache(NodeIndex node, const QueryKey& key, Bytes blob, std::int64_t expiration_ms);
    void schedule_expiry(NodeIndex node, const QueryKey& key, std::int64_t expiration_ms, bool cached);

    SimConfig config_;
    std::mt19937_64 rng_;
    std::vector<DhtNode> nodes_;
    std::vector<std::vector<NodeIndex>> adjacency_;
    std::vector<std::vector<std::uint16_t>> distance_;  // physical hops, random-regular only

    SimTime now_ = 0;
    std::uint64_t seq_ = 0;
    std::size_t foreground_pending_ = 0;
    std::priority_queue<Event, std::vector<Event>, EventLater> queue_;

    std::uint64_t next_lookup_ = 0;
    std::map<std::uint64_t, Lookup> lookups_;
    std::map<std::uint64_t, GetRequest> gets_;

    std::vector<TraceEvent> trace_;
};

QueryKey xor_distance(const NodeId& a, const QueryKey& b);

}  // namespace reclaim::namesys
