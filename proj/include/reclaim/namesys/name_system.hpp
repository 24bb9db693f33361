#pragma once

// Blocking publish/resolve/depublish over the simulated DHT.
//
// Each call schedules its messages and then drives the event loop until no
// messages remain in flight. Owners keep a zone of what they published so
// records can be refreshed before they expire and removed later.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reclaim/common/entropy.hpp"
#include "reclaim/crypto/crypto.hpp"
#include "reclaim/namesys/record.hpp"
#include "reclaim/namesys/sim.hpp"

namespace reclaim::namesys {

inline constexpr std::int64_t kDefaultTtlMs = 60 * 60 * 1000;

struct PublishReceipt {
    QueryKey query_key;
    std::int64_t expiration_ms = 0;
    std::vector<NodeIndex> stored_on;
};

struct ResolveResult {
    RecordType type = RecordType::IdAttr;
    Bytes payload;
    std::int64_t expiration_ms = 0;
    int hops = 0;
    SimTime latency = 0;
    bool from_cache = false;
    NodeIndex served_by = 0;
};

struct ZoneEntry {
    RecordType type = RecordType::IdAttr;
    Bytes payload;
    std::int64_t ttl_ms = kDefaultTtlMs;
    NodeIndex home = 0;
    Bytes last_blob;
    std::int64_t published_ms = 0;
    std::uint64_t generation = 0;
};

class NameSystem {
public:
    NameSystem(std::unique_ptr<SimNetwork> network, Entropy& rng);

    SimNetwork& network() { return *network_; }
    const SimNetwork& network() const { return *network_; }
    std::int64_t now_ms() const { return network_->now_ms(); }

    /// Throws Errc::InvalidArgument for a non-positive TTL and
    /// Errc::PayloadTooLarge for an oversize payload. Publishing the same
    /// label again replaces the record.
    PublishReceipt publish(const crypto::SigningKeyPair& owner, const std::string& label, RecordType type,
                           ByteView payload, std::int64_t ttl_ms = kDefaultTtlMs,
                           std::optional<NodeIndex> origin = std::nullopt);

    /// Throws Errc::NotFound when no unexpired record is reachable and
    /// Errc::SignatureInvalid when only tampered copies were seen.
    ResolveResult resolve(const NamespaceId& ns, std::string_view label,
                          std::optional<NodeIndex> origin = std::nullopt);

    /// Removes the authoritative copies and stops refreshing the record.
    /// Cached copies stay until they expire. Throws Errc::NotFound for a
    /// label this owner has not published.
    std::size_t depublish(const crypto::SigningKeyPair& owner, const std::string& label,
                          std::optional<NodeIndex> origin = std::nullopt);

    /// Moves the clock forward, running refreshes and expiries on the way.
    void advance(std::int64_t ms);

    bool has_record(const NamespaceId& ns, const std::string& label) const;
    const ZoneEntry* zone_entry(const NamespaceId& ns, const std::string& label) const;

    /// Periodic refresh at half the TTL; on by default.
    void set_republish(bool enabled) { republish_ = enabled; }
    bool republish() const { return republish_; }
    /// Makes an owner's key available to the refresh timer (needed after load()).
    void register_owner(const crypto::SigningKeyPair& owner);

    NodeIndex random_node() { return network_->random_index(network_->size()); }

    nlohmann::json save() const;
    static std::unique_ptr<NameSystem> load(const nlohmann::json& j, Entropy& rng);

private:
    using ZoneKey = std::pair<NamespaceId, std::string>;

    PublishReceipt store_blob(NodeIndex origin, const QueryKey& key, Bytes blob, std::int64_t expiration_ms);
    void schedule_republish(const ZoneKey& key, const ZoneEntry& entry);
    void refresh(const ZoneKey& key, std::uint64_t generation);

    std::unique_ptr<SimNetwork> network_;
    Entropy* rng_;
    bool republish_ = true;
    std::map<ZoneKey, ZoneEntry> zones_;
    std::map<NamespaceId, crypto::SigningKeyPair> owners_;
};

/// Result of a scenario script run.
struct ScenarioResult {
    std::string trace_csv;
    std::vector<std::string> outcomes;  // one line per resolve
};

/// Runs a line-oriented scenario:
///   publish <ns> <label> <ttl-ms> <hexpayload>
///   resolve <ns> <label> <at-ms>
///   advance <ms>
/// Namespace names are aliases; their keys derive from the seed and alias.
/// Blank lines and lines starting with '#' are ignored.
ScenarioResult run_scenario(std::string_view script, const SimConfig& config);

}  // namespace reclaim::namesys
