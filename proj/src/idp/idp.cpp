#include "reclaim/idp/idp.hpp"

#include <algorithm>

#include "reclaim/common/encoding.hpp"

namespace reclaim::idp {

using nlohmann::json;
using nlohmann::ordered_json;

void validate_attribute_name(std::string_view name) {
    if (name.empty()) fail(Errc::InvalidArgument, "attribute name must not be empty");
    if (name.size() > kMaxNameBytes)
        fail(Errc::InvalidArgument, "attribute name exceeds " + std::to_string(kMaxNameBytes) + " bytes");
    if (name.find(abe::kTagSeparator) != std::string_view::npos)
        fail(Errc::InvalidArgument, "attribute name must not contain 0x1F");
}

std::string random_label(Entropy& rng) { return encoding::base32(rng.bytes(kRndBytes)); }

// --- tickets ---------------------------------------------------------------

std::string Ticket::canonical_json() const {
    ordered_json j;
    j["iss"] = encoding::base32(user.view());
    j["aud"] = encoding::base32(rp.view());
    j["names"] = names;
    j["rnd"] = rnd;
    return j.dump();
}

std::string Ticket::encode() const { return encoding::base64url(as_bytes(canonical_json())); }

namespace {

IdentityId key_from_base32(const json& v, const char* field) {
    if (!v.is_string()) fail(Errc::ParseError, std::string("ticket field '") + field + "' must be a string");
    const auto raw = encoding::unbase32(v.get<std::string>());
    if (raw.size() != IdentityId::size) fail(Errc::ParseError, std::string("ticket field '") + field + "' is not a key");
    return encoding::fixed_from<IdentityId>(raw);
}

void check_rnd(const std::string& rnd) {
    bool ok = rnd.size() == 26 && std::all_of(rnd.begin(), rnd.end(), [](char c) {
                  return (c >= 'a' && c <= 'z') || (c >= '2' && c <= '7');
              });
    if (ok) {
        try {
            ok = encoding::unbase32(rnd).size() == kRndBytes;
        } catch (const Error&) {
            ok = false;
        }
    }
    if (!ok) fail(Errc::ParseError, "ticket rnd must be 26 lowercase base32 characters");
}

}  // namespace

Ticket Ticket::from_json(const json& j) {
    if (!j.is_object() || j.size() != 4 || !j.contains("iss") || !j.contains("aud") || !j.contains("names") ||
        !j.contains("rnd"))
        fail(Errc::ParseError, "ticket must have exactly iss, aud, names and rnd");
    Ticket t;
    t.user = key_from_base32(j["iss"], "iss");
    t.rp = key_from_base32(j["aud"], "aud");
    if (!j["names"].is_array() || j["names"].empty()) fail(Errc::ParseError, "ticket names must be a non-empty list");
    std::set<std::string> seen;
    for (const auto& n : j["names"]) {
        if (!n.is_string()) fail(Errc::ParseError, "ticket names must be strings");
        auto name = n.get<std::string>();
        try {
            validate_attribute_name(name);
        } catch (const Error& e) {
            fail(Errc::ParseError, e.what());
        }
        if (!seen.insert(name).second) fail(Errc::ParseError, "duplicate name in ticket");
        t.names.push_back(std::move(name));
    }
    if (!j["rnd"].is_string()) fail(Errc::ParseError, "ticket rnd must be a string");
    t.rnd = j["rnd"].get<std::string>();
    check_rnd(t.rnd);
    return t;
}

Ticket Ticket::decode(std::string_view encoded) {
    const auto raw = encoding::unbase64url(encoded);
    json j;
    try {
        j = json::parse(raw.begin(), raw.end());
    } catch (const json::exception&) {
        fail(Errc::ParseError, "ticket is not valid JSON");
    }
    Ticket t = from_json(j);
    if (t.encode() != encoded) fail(Errc::ParseError, "ticket is not in canonical form");
    return t;
}

// --- identity state --------------------------------------------------------

IdentityState IdentityState::create(Entropy& rng, namesys::NodeIndex home) {
    const auto keys = crypto::SigningKeyPair::generate(rng);
    return from_keys(keys, abe::setup(keys.public_key(), rng).master, home);
}

IdentityState IdentityState::from_keys(const crypto::SigningKeyPair& keys, const abe::MasterKey& master,
                                       namesys::NodeIndex home) {
    if (master.identity != keys.public_key())
        fail(Errc::BindingMismatch, "ABE master key was set up for a different identity");
    IdentityState s;
    s.keys = keys;
    s.master = master;
    s.params = abe::derive_params(master);
    s.home = home;
    return s;
}

const Attribute* IdentityState::live(std::string_view name) const {
    auto it = attributes.find(std::string(name));
    return it == attributes.end() || it->second.deleted ? nullptr : &it->second;
}

const IssuedTicket* IdentityState::find_ticket(std::string_view rnd) const {
    auto it = std::find_if(tickets.begin(), tickets.end(), [&](const auto& t) { return t.ticket.rnd == rnd; });
    return it == tickets.end() ? nullptr : &*it;
}

namespace {
void raise_version(Attribute& a, std::uint64_t version) {
    if (version < a.version)
        fail(Errc::InvalidArgument, "version of '" + a.name + "' would decrease from " + std::to_string(a.version));
    a.version = version;
}
}  // namespace

void IdentityState::apply(const json& event) {
    const auto op = event.at("op").get<std::string>();
    if (op == "store") {
        const auto name = event.at("name").get<std::string>();
        auto& a = attributes[name];
        a.name = name;
        raise_version(a, event.at("version").get<std::uint64_t>());
        a.value = encoding::unbase64url(event.at("value").get<std::string>());
        a.deleted = false;
    } else if (op == "delete") {
        const auto name = event.at("name").get<std::string>();
        auto it = attributes.find(name);
        if (it == attributes.end()) fail(Errc::UnknownAttribute, "delete of unknown attribute '" + name + "'");
        raise_version(it->second, event.at("version").get<std::uint64_t>());
        it->second.value.clear();
        it->second.deleted = true;
        for (auto& t : tickets) t.authorized.erase(name);
    } else if (op == "authorize") {
        IssuedTicket t;
        t.ticket = Ticket::decode(event.at("ticket").get<std::string>());
        for (const auto& n : event.at("names")) t.authorized.insert(n.get<std::string>());
        tickets.push_back(std::move(t));
    } else if (op == "revoke") {
        const auto rnd = event.at("rnd").get<std::string>();
        for (const auto& [name, v] : event.at("versions").items()) {
            auto it = attributes.find(name);
            if (it == attributes.end()) fail(Errc::UnknownAttribute, "revoke names unknown attribute '" + name + "'");
            raise_version(it->second, v.get<std::uint64_t>());
        }
        std::erase_if(tickets, [&](const auto& t) { return t.ticket.rnd == rnd; });
        revoked.insert(rnd);
    } else {
        fail(Errc::ParseError, "unknown journal operation '" + op + "'");
    }
}

json IdentityState::snapshot() const {
    json j;
    j["id"] = encoding::base32(id().view());
    j["home"] = home;
    j["params"] = encoding::hex(params.serialize());
    auto& attrs = j["attributes"] = json::array();
    for (const auto& [name, a] : attributes)
        attrs.push_back({{"name", name},
                         {"value", encoding::base64url(a.value)},
                         {"version", a.version},
                         {"deleted", a.deleted}});
    auto& ts = j["tickets"] = json::array();
    for (const auto& t : tickets) ts.push_back({{"ticket", t.ticket.encode()}, {"authorized", t.authorized}});
    j["revoked"] = revoked;
    return j;
}

void IdentityState::restore(const json& j) {
    if (j.at("id").get<std::string>() != encoding::base32(id().view()))
        fail(Errc::BindingMismatch, "snapshot belongs to a different identity");
    if (abe::PublicParams::deserialize(encoding::unhex(j.at("params").get<std::string>())) != params)
        fail(Errc::BindingMismatch, "snapshot ABE parameters do not match the master key");
    home = j.at("home");
    attributes.clear();
    for (const auto& a : j.at("attributes")) {
        Attribute attr;
        attr.name = a.at("name");
        attr.value = encoding::unbase64url(a.at("value").get<std::string>());
        attr.version = a.at("version");
        attr.deleted = a.at("deleted");
        attributes.emplace(attr.name, std::move(attr));
    }
    tickets.clear();
    for (const auto& t : j.at("tickets")) {
        IssuedTicket it;
        it.ticket = Ticket::decode(t.at("ticket").get<std::string>());
        it.authorized = t.at("authorized").get<std::set<std::string>>();
        tickets.push_back(std::move(it));
    }
    revoked = j.at("revoked").get<std::set<std::string>>();
}

// --- provider ----------------------------------------------------------------

Provider::Provider(IdentityState& state, namesys::NameSystem& ns, Entropy& rng, ProviderOptions options,
                   Journal journal)
    : state_(state), ns_(ns), rng_(rng), options_(options), journal_(std::move(journal)) {}

void Provider::record(json event) {
    event["ts"] = ns_.now_ms();
    state_.apply(event);
    if (journal_) journal_(event);
}

void Provider::publish_attribute(const Attribute& a) {
    const auto ct = abe::encrypt(state_.master, a.value, abe::Tag::make(a.name, a.version), rng_);
    ns_.publish(state_.keys, a.name, namesys::RecordType::IdAttr, ct.serialize(), options_.ttl_ms, state_.home);
}

void Provider::publish_key(const IssuedTicket& t) {
    std::set<abe::Tag> tags;
    for (const auto& name : t.authorized)
        if (const auto* a = state_.live(name)) tags.insert(abe::Tag::make(name, a->version));
    // A ticket left with no names keeps its handle alive with a key that decrypts nothing.
    const auto key = tags.empty() ? abe::empty_key() : abe::keygen(state_.master, tags);
    const auto wrapped = abe::wrap_for_party(crypto::kx_public_from_signing(t.ticket.rp), key);
    ns_.publish(state_.keys, t.ticket.rnd, namesys::RecordType::AbeKey, wrapped, options_.ttl_ms, state_.home);
}

Attribute Provider::store(const std::string& name, ByteView value) {
    validate_attribute_name(name);
    if (value.size() > abe::kMaxPlaintext)
        fail(Errc::PayloadTooLarge, "attribute value exceeds " + std::to_string(abe::kMaxPlaintext) + " bytes");
    Attribute a;
    a.name = name;
    a.value.assign(value.begin(), value.end());
    if (auto it = state_.attributes.find(name); it != state_.attributes.end()) a.version = it->second.version;
    publish_attribute(a);
    record({{"op", "store"}, {"name", name}, {"version", a.version}, {"value", encoding::base64url(a.value)}});
    return a;
}

Attribute Provider::update(const std::string& name, ByteView value) {
    if (!state_.live(name)) fail(Errc::UnknownAttribute, "no attribute named '" + name + "'");
    return store(name, value);
}

Authorization Provider::authorize(const IdentityId& rp, const std::vector<std::string>& names) {
    if (names.empty()) fail(Errc::InvalidArgument, "authorization needs at least one attribute");
    std::set<std::string> unique(names.begin(), names.end());
    if (unique.size() != names.size()) fail(Errc::InvalidArgument, "duplicate attribute name in authorization");
    for (const auto& n : names)
        if (!state_.live(n)) fail(Errc::UnknownAttribute, "no attribute named '" + n + "'");

    IssuedTicket issued;
    issued.ticket = Ticket{state_.id(), rp, names, random_label(rng_)};
    issued.authorized = unique;

    std::set<abe::Tag> tags;
    for (const auto& n : names) tags.insert(abe::Tag::make(n, state_.live(n)->version));
    const auto wrapped = abe::wrap_for_party(crypto::kx_public_from_signing(rp), abe::keygen(state_.master, tags));
    ns_.publish(state_.keys, issued.ticket.rnd, namesys::RecordType::AbeKey, wrapped, options_.ttl_ms, state_.home);
    record({{"op", "authorize"}, {"ticket", issued.ticket.encode()}, {"names", unique}});
    return {issued.ticket, wrapped};
}

void Provider::remove(const std::string& name) {
    const auto* a = state_.live(name);
    if (!a) fail(Errc::UnknownAttribute, "no attribute named '" + name + "'");
    const auto next_version = a->version + 1;
    std::vector<std::string> affected;
    for (const auto& t : state_.tickets)
        if (t.authorized.contains(name)) affected.push_back(t.ticket.rnd);

    if (ns_.has_record(state_.id(), name)) ns_.depublish(state_.keys, name, state_.home);
    record({{"op", "delete"}, {"name", name}, {"version", next_version}});
    for (const auto& rnd : affected) publish_key(*state_.find_ticket(rnd));
}

RevokeReceipt Provider::revoke(const Ticket& ticket) {
    if (state_.revoked.contains(ticket.rnd)) fail(Errc::AlreadyRevoked, "ticket was already revoked");
    const auto* issued = state_.find_ticket(ticket.rnd);
    if (!issued || issued->ticket != ticket) fail(Errc::UnknownTicket, "ticket was not issued by this identity");

    RevokeReceipt receipt;
    json versions = json::object();
    for (const auto& name : issued->authorized)
        if (const auto* a = state_.live(name)) {
            receipt.bumped[name] = a->version + 1;
            versions[name] = a->version + 1;
        }
    record({{"op", "revoke"}, {"rnd", ticket.rnd}, {"versions", versions}});

    for (const auto& [name, _] : receipt.bumped) publish_attribute(*state_.live(name));
    for (const auto& t : state_.tickets) {
        const bool overlaps = std::any_of(receipt.bumped.begin(), receipt.bumped.end(),
                                          [&](const auto& b) { return t.authorized.contains(b.first); });
        if (!overlaps) continue;
        publish_key(t);
        receipt.rekeyed.push_back(t.ticket.rnd);
    }
    if (ns_.has_record(state_.id(), ticket.rnd)) ns_.depublish(state_.keys, ticket.rnd, state_.home);
    return receipt;
}

// --- retrieval -------------------------------------------------------------

std::map<std::string, Bytes> RetrieveResult::values() const {
    std::map<std::string, Bytes> out;
    for (const auto& a : attributes)
        if (a.value) out.emplace(a.name, *a.value);
    return out;
}

RetrieveResult retrieve(namesys::NameSystem& ns, const crypto::SigningKeyPair& rp, const Ticket& ticket,
                        const std::optional<Bytes>& wrapped_key, std::optional<namesys::NodeIndex> origin) {
    if (ticket.rp != rp.public_key()) fail(Errc::BindingMismatch, "ticket was issued to a different party");
    const namesys::NodeIndex from = origin ? *origin : ns.random_node();
    RetrieveResult result;

    Bytes wrapped;
    if (wrapped_key) {
        wrapped = *wrapped_key;
    } else {
        try {
            auto r = ns.resolve(ticket.user, ticket.rnd, from);
            if (r.type != namesys::RecordType::AbeKey) fail(Errc::KeyRecordMissing, "record under rnd is not a key");
            wrapped = std::move(r.payload);
            result.key_from_network = true;
            result.key_hops = r.hops;
            result.key_from_cache = r.from_cache;
            result.key_latency = r.latency;
        } catch (const Error& e) {
            if (e.code() == Errc::KeyRecordMissing) throw;
            fail(Errc::KeyRecordMissing, std::string("key record unavailable: ") + e.what());
        }
    }

    abe::UserKey key;
    try {
        key = abe::unwrap_key(crypto::KxKeyPair::from_signing(rp), wrapped);
    } catch (const Error& e) {
        fail(Errc::UnwrapFailure, std::string("cannot unwrap key: ") + e.what());
    }

    for (const auto& name : ticket.names) {
        AttributeResult ar;
        ar.name = name;
        try {
            auto r = ns.resolve(ticket.user, name, from);
            ar.hops = r.hops;
            ar.latency = r.latency;
            ar.from_cache = r.from_cache;
            if (r.type != namesys::RecordType::IdAttr) fail(Errc::ParseError, "record is not an attribute");
            const auto ct = abe::Ciphertext::deserialize(r.payload);
            if (ct.policy.name != name) fail(Errc::IntegrityFailure, "ciphertext policy names another attribute");
            ar.value = abe::decrypt(key, ct);
        } catch (const Error& e) {
            ar.error = e.code();
            ar.detail = e.what();
        }
        result.attributes.push_back(std::move(ar));
    }
    return result;
}

}  // namespace reclaim::idp
