#pragma once

// Identity provider: attribute storage, authorization tickets, deletion,
// update and revocation on top of the name system and the ABE layer.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "reclaim/abe/abe.hpp"
#include "reclaim/common/bytes.hpp"
#include "reclaim/common/entropy.hpp"
#include "reclaim/common/error.hpp"
#include "reclaim/crypto/crypto.hpp"
#include "reclaim/namesys/name_system.hpp"

namespace reclaim::idp {

using IdentityId = crypto::SigningPublicKey;

inline constexpr std::size_t kMaxNameBytes = 63;
inline constexpr std::size_t kRndBytes = 16;  // 128 bits, 26 base32 characters

/// Throws Errc::InvalidArgument for empty names, names over 63 bytes or
/// names containing 0x1F.
void validate_attribute_name(std::string_view name);
std::string random_label(Entropy& rng);

struct Attribute {
    std::string name;
    Bytes value;
    std::uint64_t version = 0;
    bool deleted = false;  // tombstone: version already bumped past the deleted value
};

struct Ticket {
    IdentityId user;
    IdentityId rp;
    std::vector<std::string> names;
    std::string rnd;

    /// {"iss","aud","names","rnd"} with base32 keys, compact, in that order.
    std::string canonical_json() const;
    /// base64url(canonical_json())
    std::string encode() const;
    /// Throws Errc::ParseError for anything that is not a well-formed ticket.
    static Ticket decode(std::string_view encoded);
    static Ticket from_json(const nlohmann::json& j);

    bool operator==(const Ticket&) const = default;
};

struct IssuedTicket {
    Ticket ticket;
    std::set<std::string> authorized;  // shrinks when attributes are deleted
};

/// Everything one identity owner keeps locally.
struct IdentityState {
    crypto::SigningKeyPair keys;
    abe::MasterKey master;
    abe::PublicParams params;
    namesys::NodeIndex home = 0;
    std::map<std::string, Attribute> attributes;
    std::vector<IssuedTicket> tickets;
    std::set<std::string> revoked;

    static IdentityState create(Entropy& rng, namesys::NodeIndex home);
    /// Throws Errc::BindingMismatch when the master key belongs to another identity.
    static IdentityState from_keys(const crypto::SigningKeyPair& keys, const abe::MasterKey& master,
                                   namesys::NodeIndex home);

    IdentityId id() const { return keys.public_key(); }
    const Attribute* live(std::string_view name) const;
    const IssuedTicket* find_ticket(std::string_view rnd) const;

    /// Applies one journal event. Used both for live operations and replay.
    void apply(const nlohmann::json& event);

    /// Public state only; private keys are stored separately.
    nlohmann::json snapshot() const;
    void restore(const nlohmann::json& snapshot);
};

struct Authorization {
    Ticket ticket;
    Bytes wrapped_key;  // handed to the RP out of band
};

struct RevokeReceipt {
    std::map<std::string, std::uint64_t> bumped;  // name -> new version
    std::vector<std::string> rekeyed;             // rnd of re-keyed tickets
};

struct ProviderOptions {
    std::int64_t ttl_ms = namesys::kDefaultTtlMs;
};

/// User-side operations. Every state change is applied through
/// IdentityState::apply and handed to the journal callback.
class Provider {
public:
    using Journal = std::function<void(const nlohmann::json&)>;

    Provider(IdentityState& state, namesys::NameSystem& ns, Entropy& rng, ProviderOptions options = {},
             Journal journal = {});

    /// Creates or overwrites an attribute. A live attribute keeps its
    /// version; a deleted one resumes at its tombstone version.
    Attribute store(const std::string& name, ByteView value);
    /// Throws Errc::UnknownAttribute unless the attribute is live.
    Attribute update(const std::string& name, ByteView value);
    /// Throws Errc::UnknownAttribute for missing or deleted names and
    /// Errc::InvalidArgument for an empty or duplicated name list.
    Authorization authorize(const IdentityId& rp, const std::vector<std::string>& names);
    /// Depublishes, bumps the version and re-keys every ticket naming it.
    void remove(const std::string& name);
    /// Throws Errc::UnknownTicket or Errc::AlreadyRevoked.
    RevokeReceipt revoke(const Ticket& ticket);

private:
    void publish_attribute(const Attribute& a);
    void publish_key(const IssuedTicket& t);
    void record(nlohmann::json event);

    IdentityState& state_;
    namesys::NameSystem& ns_;
    Entropy& rng_;
    ProviderOptions options_;
    Journal journal_;
};

struct AttributeResult {
    std::string name;
    std::optional<Bytes> value;
    std::optional<Errc> error;
    std::string detail;
    int hops = 0;
    namesys::SimTime latency = 0;
    bool from_cache = false;
};

struct RetrieveResult {
    std::vector<AttributeResult> attributes;
    bool key_from_network = false;
    bool key_from_cache = false;
    int key_hops = 0;
    namesys::SimTime key_latency = 0;

    std::map<std::string, Bytes> values() const;
};

/// RP-side retrieval. Resolves the key record under the ticket's rnd unless
/// a wrapped key is supplied. Throws Errc::BindingMismatch when the RP keys
/// do not match the ticket audience, Errc::KeyRecordMissing when the key
/// record cannot be resolved and Errc::UnwrapFailure when it does not open.
/// Per-attribute failures are reported in the result.
RetrieveResult retrieve(namesys::NameSystem& ns, const crypto::SigningKeyPair& rp, const Ticket& ticket,
                        const std::optional<Bytes>& wrapped_key = std::nullopt,
                        std::optional<namesys::NodeIndex> origin = std::nullopt);

}  // namespace reclaim::idp
