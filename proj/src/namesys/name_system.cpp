#include "reclaim/namesys/name_system.hpp"

#include <sstream>

#include "reclaim/common/encoding.hpp"
#include "reclaim/common/error.hpp"

namespace reclaim::namesys {

NameSystem::NameSystem(std::unique_ptr<SimNetwork> network, Entropy& rng)
    : network_(std::move(network)), rng_(&rng) {
    if (!network_) fail(Errc::InvalidArgument, "name system needs a network");
}

void NameSystem::register_owner(const crypto::SigningKeyPair& owner) { owners_[owner.public_key()] = owner; }

PublishReceipt NameSystem::store_blob(NodeIndex origin, const QueryKey& key, Bytes blob,
                                      std::int64_t expiration_ms) {
    PublishReceipt receipt;
    receipt.query_key = key;
    receipt.expiration_ms = expiration_ms;
    network_->start_store(origin, key, std::move(blob),
                          [&receipt](std::vector<NodeIndex> nodes) { receipt.stored_on = std::move(nodes); });
    network_->settle();
    return receipt;
}

PublishReceipt NameSystem::publish(const crypto::SigningKeyPair& owner, const std::string& label, RecordType type,
                                   ByteView payload, std::int64_t ttl_ms, std::optional<NodeIndex> origin) {
    if (ttl_ms <= 0) fail(Errc::InvalidArgument, "TTL must be positive");
    if (label.empty()) fail(Errc::InvalidArgument, "label must not be empty");
    if (origin && *origin >= network_->size()) fail(Errc::InvalidArgument, "origin node out of range");
    register_owner(owner);

    const std::int64_t expiration = now_ms() + ttl_ms;
    Bytes blob = seal_record(owner, label, type, payload, expiration, *rng_);
    const NodeIndex home = origin ? *origin : random_node();

    const ZoneKey zk{owner.public_key(), label};
    auto& entry = zones_[zk];
    entry.type = type;
    entry.payload.assign(payload.begin(), payload.end());
    entry.ttl_ms = ttl_ms;
    entry.home = home;
    entry.last_blob = blob;
    entry.published_ms = now_ms();
    ++entry.generation;
    schedule_republish(zk, entry);
    return store_blob(home, derive_query_key(owner.public_key(), label), std::move(blob), expiration);
}

void NameSystem::schedule_republish(const ZoneKey& key, const ZoneEntry& entry) {
    const std::int64_t at_ms = entry.published_ms + std::max<std::int64_t>(1, entry.ttl_ms / 2);
    network_->schedule(at_ms * kMicrosPerMs, true, [this, key, gen = entry.generation] { refresh(key, gen); });
}

void NameSystem::refresh(const ZoneKey& key, std::uint64_t generation) {
    auto it = zones_.find(key);
    if (it == zones_.end() || it->second.generation != generation) return;
    auto& entry = it->second;
    if (!republish_) {
        // Keep the timer alive so re-enabling takes effect at the next period.
        entry.published_ms = now_ms();
        schedule_republish(key, entry);
        return;
    }
    auto owner = owners_.find(key.first);
    if (owner == owners_.end()) return;
    const std::int64_t expiration = now_ms() + entry.ttl_ms;
    entry.last_blob = seal_record(owner->second, key.second, entry.type, entry.payload, expiration, *rng_);
    entry.published_ms = now_ms();
    ++entry.generation;
    schedule_republish(key, entry);
    network_->start_store(entry.home, derive_query_key(key.first, key.second), entry.last_blob,
                          [](std::vector<NodeIndex>) {});
}

ResolveResult NameSystem::resolve(const NamespaceId& ns, std::string_view label, std::optional<NodeIndex> origin) {
    if (origin && *origin >= network_->size()) fail(Errc::InvalidArgument, "origin node out of range");
    const NodeIndex from = origin ? *origin : random_node();
    std::optional<LookupOutcome> outcome;
    network_->start_get(from, derive_query_key(ns, label), [&outcome](LookupOutcome o) { outcome = std::move(o); });
    network_->settle();
    if (!outcome) fail(Errc::NotFound, "lookup did not complete");
    if (!outcome->found) {
        if (outcome->invalid_seen) fail(Errc::SignatureInvalid, "only invalid records were returned");
        fail(Errc::NotFound, "no record for label '" + std::string(label) + "'");
    }
    auto opened = open_record(ns, label, outcome->blob);
    ResolveResult r;
    r.type = opened.type;
    r.payload = std::move(opened.payload);
    r.expiration_ms = opened.expiration_ms;
    r.hops = outcome->hops;
    r.latency = outcome->latency;
    r.from_cache = outcome->from_cache;
    r.served_by = outcome->served_by;
    return r;
}

std::size_t NameSystem::depublish(const crypto::SigningKeyPair& owner, const std::string& label,
                                  std::optional<NodeIndex> origin) {
    const ZoneKey zk{owner.public_key(), label};
    auto it = zones_.find(zk);
    if (it == zones_.end()) fail(Errc::NotFound, "label '" + label + "' is not published");
    const NodeIndex from = origin ? *origin : it->second.home;
    Bytes request = removal_request(owner, label, it->second.last_blob);
    zones_.erase(it);

    std::size_t removed = 0;
    network_->start_remove(from, derive_query_key(owner.public_key(), label), std::move(request),
                           [&removed](std::size_t n) { removed = n; });
    network_->settle();
    return removed;
}

void NameSystem::advance(std::int64_t ms) {
    if (ms < 0) fail(Errc::InvalidArgument, "cannot advance by a negative duration");
    network_->step(network_->now() + ms * kMicrosPerMs);
    network_->settle();
}

bool NameSystem::has_record(const NamespaceId& ns, const std::string& label) const {
    return zones_.contains(ZoneKey{ns, label});
}

const ZoneEntry* NameSystem::zone_entry(const NamespaceId& ns, const std::string& label) const {
    auto it = zones_.find(ZoneKey{ns, label});
    return it == zones_.end() ? nullptr : &it->second;
}

nlohmann::json NameSystem::save() const {
    nlohmann::json j;
    j["network"] = network_->save();
    j["republish"] = republish_;
    auto& zones = j["zones"] = nlohmann::json::array();
    for (const auto& [key, e] : zones_)
        zones.push_back({{"namespace", encoding::base32(key.first.view())},
                         {"label", key.second},
                         {"type", static_cast<std::uint32_t>(e.type)},
                         {"payload", encoding::hex(e.payload)},
                         {"ttl_ms", e.ttl_ms},
                         {"home", e.home},
                         {"last_blob", encoding::hex(e.last_blob)},
                         {"published_ms", e.published_ms},
                         {"generation", e.generation}});
    return j;
}

std::unique_ptr<NameSystem> NameSystem::load(const nlohmann::json& j, Entropy& rng) {
    auto ns = std::make_unique<NameSystem>(SimNetwork::load(j.at("network")), rng);
    ns->republish_ = j.value("republish", true);
    for (const auto& z : j.at("zones")) {
        ZoneKey key{encoding::fixed_from<NamespaceId>(encoding::unbase32(z.at("namespace").get<std::string>())),
                    z.at("label").get<std::string>()};
        ZoneEntry e;
        const auto type = z.at("type").get<std::uint32_t>();
        if (type != 1 && type != 2) fail(Errc::ParseError, "unknown record type in zone");
        e.type = static_cast<RecordType>(type);
        e.payload = encoding::unhex(z.at("payload").get<std::string>());
        e.ttl_ms = z.at("ttl_ms");
        e.home = z.at("home");
        e.last_blob = encoding::unhex(z.at("last_blob").get<std::string>());
        e.published_ms = z.at("published_ms");
        e.generation = z.at("generation");
        if (e.home >= ns->network_->size()) fail(Errc::ParseError, "zone home node out of range");
        auto [it, _] = ns->zones_.emplace(std::move(key), std::move(e));
        ns->schedule_republish(it->first, it->second);
    }
    return ns;
}

// --- scenario scripts ------------------------------------------------------

namespace {

crypto::SigningKeyPair alias_key(std::uint64_t seed, const std::string& alias) {
    std::uint8_t seed_bytes[8];
    for (int i = 0; i < 8; ++i) seed_bytes[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    auto d = crypto::hash("reclaim-scenario-alias", {ByteView(seed_bytes, 8), as_bytes(alias)});
    crypto::SigningSeed s;
    s.bytes = d.bytes;
    return crypto::SigningKeyPair::from_seed(s);
}

std::int64_t parse_int(const std::string& s, std::size_t line) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size() || v < 0) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(Errc::ParseError, "line " + std::to_string(line) + ": expected a non-negative integer, got '" + s + "'");
    }
}

}  // namespace

ScenarioResult run_scenario(std::string_view script, const SimConfig& config) {
    SeededEntropy rng(config.seed);
    NameSystem ns(std::make_unique<SimNetwork>(config), rng);
    std::map<std::string, crypto::SigningKeyPair> aliases;
    auto key_for = [&](const std::string& alias) -> const crypto::SigningKeyPair& {
        auto it = aliases.find(alias);
        if (it == aliases.end()) it = aliases.emplace(alias, alias_key(config.seed, alias)).first;
        return it->second;
    };

    ScenarioResult result;
    std::istringstream in{std::string(script)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream words(line);
        std::vector<std::string> w;
        for (std::string t; words >> t;) w.push_back(t);
        if (w.empty() || w[0].starts_with('#')) continue;
        const auto where = "line " + std::to_string(lineno) + ": ";

        if (w[0] == "publish" && w.size() == 5) {
            Bytes payload;
            try {
                payload = encoding::unhex(w[4]);
            } catch (const Error&) {
                fail(Errc::ParseError, where + "payload is not hex");
            }
            ns.publish(key_for(w[1]), w[2], RecordType::IdAttr, payload, parse_int(w[3], lineno));
        } else if (w[0] == "resolve" && w.size() == 4) {
            const auto at = parse_int(w[3], lineno);
            if (at > ns.now_ms()) ns.advance(at - ns.now_ms());
            std::string outcome = "t=" + std::to_string(ns.now_ms()) + " resolve " + w[1] + " " + w[2] + ": ";
            try {
                auto r = ns.resolve(key_for(w[1]).public_key(), w[2]);
                outcome += "ok payload=" + encoding::hex(r.payload) + " hops=" + std::to_string(r.hops) +
                           (r.from_cache ? " cached" : "");
            } catch (const Error& e) {
                outcome += std::string(errc_name(e.code()));
            }
            result.outcomes.push_back(std::move(outcome));
        } else if (w[0] == "advance" && w.size() == 2) {
            ns.advance(parse_int(w[1], lineno));
        } else {
            fail(Errc::ParseError, where + "unrecognised command '" + line + "'");
        }
    }
    result.trace_csv = trace_csv(ns.network().trace());
    return result;
}

}  // namespace reclaim::namesys
