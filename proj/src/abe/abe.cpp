#include "reclaim/abe/abe.hpp"

#include <charconv>

#include "reclaim/common/encoding.hpp"
#include "reclaim/common/error.hpp"

namespace reclaim::abe {

namespace {
constexpr std::string_view kTagKeyDomain = "reclaim-abe-tag-key";
constexpr std::string_view kFingerprintDomain = "reclaim-abe-params";
}  // namespace

Tag Tag::make(std::string name, std::uint64_t version) {
    if (name.empty()) fail(Errc::InvalidArgument, "tag name must not be empty");
    if (name.find(kTagSeparator) != std::string::npos)
        fail(Errc::InvalidArgument, "tag name must not contain 0x1F");
    return Tag{std::move(name), version};
}

std::string Tag::encode() const {
    std::string out = name;
    out.push_back(kTagSeparator);
    out += std::to_string(version);
    return out;
}

Tag Tag::decode(ByteView encoded) {
    const std::string s = reclaim::to_string(encoded);
    const auto sep = s.rfind(kTagSeparator);
    if (sep == std::string::npos || sep == 0) fail(Errc::ParseError, "malformed tag encoding");
    const std::string_view digits(s.data() + sep + 1, s.size() - sep - 1);
    // Decimal without leading zeros keeps the encoding injective both ways.
    if (digits.empty() || (digits.size() > 1 && digits.front() == '0'))
        fail(Errc::ParseError, "malformed tag version");
    std::uint64_t version = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), version);
    if (ec != std::errc{} || ptr != digits.data() + digits.size())
        fail(Errc::ParseError, "malformed tag version");
    std::string name = s.substr(0, sep);
    if (name.find(kTagSeparator) != std::string::npos) fail(Errc::ParseError, "malformed tag name");
    return Tag{std::move(name), version};
}

std::string to_string(const Tag& tag) { return tag.name + ":" + std::to_string(tag.version); }

Bytes PublicParams::serialize() const {
    ByteWriter w;
    w.raw(identity.view());
    w.raw(fingerprint.view());
    return std::move(w).bytes();
}

PublicParams PublicParams::deserialize(ByteView in) {
    ByteReader r(in);
    PublicParams p;
    p.identity = encoding::fixed_from<IdentityId>(r.raw(32));
    p.fingerprint = encoding::fixed_from<crypto::Digest>(r.raw(32));
    if (!r.done()) fail(Errc::ParseError, "trailing bytes after params");
    return p;
}

std::set<Tag> UserKey::tags() const {
    std::set<Tag> out;
    for (const auto& [tag, _] : entries_) out.insert(tag);
    return out;
}

Bytes UserKey::serialize() const {
    // Ordering by encoded bytes keeps the serialization canonical.
    std::map<std::string, const crypto::SymmetricKey*> ordered;
    for (const auto& [tag, key] : entries_) ordered.emplace(tag.encode(), &key);
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(ordered.size()));
    for (const auto& [enc, key] : ordered) {
        w.prefixed(as_bytes(enc));
        w.raw(key->view());
    }
    return std::move(w).bytes();
}

UserKey UserKey::deserialize(ByteView in) {
    ByteReader r(in);
    const std::uint32_t count = r.u32();
    // Each entry needs at least 4 + 3 + 32 bytes; reject absurd counts before looping.
    if (count > r.remaining() / 39 + 1) fail(Errc::ParseError, "user key entry count exceeds input");
    UserKey key;
    for (std::uint32_t i = 0; i < count; ++i) {
        Tag tag = Tag::decode(r.prefixed());
        auto material = encoding::fixed_from<crypto::SymmetricKey>(r.raw(32));
        if (!key.entries_.emplace(std::move(tag), material).second)
            fail(Errc::ParseError, "duplicate tag in user key");
    }
    if (!r.done()) fail(Errc::ParseError, "trailing bytes after user key");
    return key;
}

Bytes Ciphertext::serialize() const {
    ByteWriter w;
    w.prefixed(as_bytes(policy.encode()));
    w.raw(nonce);
    w.raw(body);
    return std::move(w).bytes();
}

Ciphertext Ciphertext::deserialize(ByteView in) {
    ByteReader r(in);
    Ciphertext ct;
    ct.policy = Tag::decode(r.prefixed());
    auto nonce = r.raw(kNonceBytes);
    std::copy(nonce.begin(), nonce.end(), ct.nonce.begin());
    auto body = r.rest();
    if (body.size() < crypto::kAeadTagBytes) fail(Errc::ParseError, "ciphertext body too short");
    ct.body.assign(body.begin(), body.end());
    return ct;
}

namespace {
crypto::SymmetricKey tag_key(const MasterKey& master, const Tag& tag) {
    const std::string enc = tag.encode();
    return crypto::keyed_hash(master.secret.view(), kTagKeyDomain, {as_bytes(enc)});
}
}  // namespace

SetupResult setup(const IdentityId& identity, Entropy& rng) {
    MasterKey master;
    master.identity = identity;
    rng.fill(master.secret.bytes);
    return {master, derive_params(master)};
}

PublicParams derive_params(const MasterKey& master) {
    return PublicParams{master.identity,
                        crypto::hash(kFingerprintDomain, {master.secret.view(), master.identity.view()})};
}

UserKey keygen(const MasterKey& master, const std::set<Tag>& tags) {
    if (tags.empty()) fail(Errc::InvalidArgument, "keygen requires at least one tag");
    UserKey key;
    for (const auto& tag : tags) key.entries_.emplace(tag, tag_key(master, tag));
    return key;
}

UserKey empty_key() { return UserKey{}; }

Ciphertext encrypt(const MasterKey& master, ByteView plaintext, const Tag& policy, Entropy& rng) {
    std::array<std::uint8_t, kNonceBytes> nonce{};
    rng.fill(nonce);
    return encrypt_with_nonce(master, plaintext, policy, nonce);
}

Ciphertext encrypt_with_nonce(const MasterKey& master, ByteView plaintext, const Tag& policy,
                              ByteView nonce) {
    if (plaintext.size() > kMaxPlaintext)
        fail(Errc::PayloadTooLarge, "plaintext exceeds " + std::to_string(kMaxPlaintext) + " bytes");
    if (nonce.size() != kNonceBytes) fail(Errc::InvalidArgument, "nonce must be 24 bytes");
    Ciphertext ct;
    ct.policy = policy;
    std::copy(nonce.begin(), nonce.end(), ct.nonce.begin());
    const std::string ad = policy.encode();
    ct.body = crypto::aead_seal(tag_key(master, policy), nonce, plaintext, as_bytes(ad));
    return ct;
}

Bytes decrypt(const UserKey& key, const Ciphertext& ct) {
    auto it = key.entries().find(ct.policy);
    if (it == key.entries().end())
        fail(Errc::PolicyNotSatisfied, "key does not hold tag " + to_string(ct.policy));
    const std::string ad = ct.policy.encode();
    return crypto::aead_open(it->second, ct.nonce, ct.body, as_bytes(ad));
}

// Wrapped form: u32 length ‖ sealed box, so truncation is a framing error
// rather than an authentication failure.
Bytes wrap_for_party(const crypto::KxPublicKey& recipient, const UserKey& key) {
    ByteWriter w;
    w.prefixed(crypto::seal_to(recipient, key.serialize()));
    return std::move(w).bytes();
}

UserKey unwrap_key(const crypto::KxKeyPair& recipient, ByteView blob) {
    if (blob.empty()) fail(Errc::ParseError, "empty wrapped key");
    ByteReader r(blob);
    auto sealed = r.prefixed();
    if (!r.done()) fail(Errc::ParseError, "trailing bytes after wrapped key");
    if (sealed.size() < crypto::kSealOverhead) fail(Errc::ParseError, "wrapped key too short");
    return UserKey::deserialize(crypto::open_sealed(recipient, sealed));
}

}  // namespace reclaim::abe
