#pragma once

// Single-tag ciphertext-policy encryption.
//
// Every policy in the identity layer is exactly one tag, "name<US>version".
// The reference backend therefore derives one symmetric content key per tag
// from the owner's master secret; a user key is the set of derived keys for
// its tags, and a ciphertext is XChaCha20-Poly1305 under the policy tag's key
// with the tag bound as associated data.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "reclaim/common/bytes.hpp"
#include "reclaim/common/entropy.hpp"
#include "reclaim/crypto/crypto.hpp"

namespace reclaim::abe {

inline constexpr char kTagSeparator = '\x1f';
inline constexpr std::size_t kMaxPlaintext = 62 * 1024;
inline constexpr std::size_t kNonceBytes = crypto::kAeadNonceBytes;

struct Tag {
    std::string name;
    std::uint64_t version = 0;

    /// Throws Errc::InvalidArgument for an empty name or one containing 0x1F.
    static Tag make(std::string name, std::uint64_t version);
    static Tag decode(ByteView encoded);

    /// name ‖ 0x1F ‖ decimal version
    std::string encode() const;

    auto operator<=>(const Tag&) const = default;
};

std::string to_string(const Tag& tag);  // "name:version", for diagnostics only

using IdentityId = crypto::SigningPublicKey;

struct MasterKey {
    crypto::SymmetricKey secret;
    IdentityId identity;
};

struct PublicParams {
    IdentityId identity;
    crypto::Digest fingerprint;

    auto operator<=>(const PublicParams&) const = default;
    Bytes serialize() const;
    static PublicParams deserialize(ByteView in);
};

class UserKey {
public:
    UserKey() = default;

    const std::map<Tag, crypto::SymmetricKey>& entries() const { return entries_; }
    std::set<Tag> tags() const;
    bool holds(const Tag& tag) const { return entries_.contains(tag); }
    bool empty() const { return entries_.empty(); }

    /// u32 count, then per tag (sorted by tag): u32 length ‖ tag encoding ‖ 32-byte key.
    Bytes serialize() const;
    static UserKey deserialize(ByteView in);

    bool operator==(const UserKey&) const = default;

private:
    friend UserKey keygen(const MasterKey&, const std::set<Tag>&);
    friend UserKey empty_key();
    std::map<Tag, crypto::SymmetricKey> entries_;
};

struct Ciphertext {
    Tag policy;
    std::array<std::uint8_t, kNonceBytes> nonce{};
    Bytes body;

    /// u32 length ‖ tag encoding ‖ 24-byte nonce ‖ body
    Bytes serialize() const;
    static Ciphertext deserialize(ByteView in);

    bool operator==(const Ciphertext&) const = default;
};

struct SetupResult {
    MasterKey master;
    PublicParams params;
};

SetupResult setup(const IdentityId& identity, Entropy& rng = system_entropy());
PublicParams derive_params(const MasterKey& master);

/// Throws Errc::InvalidArgument for an empty tag set.
UserKey keygen(const MasterKey& master, const std::set<Tag>& tags);
/// The degenerate key with no tags; decrypts nothing.
UserKey empty_key();

/// Encryption needs the owner's master key in this backend (the owner is the
/// only encrypter). Throws Errc::PayloadTooLarge above kMaxPlaintext.
Ciphertext encrypt(const MasterKey& master, ByteView plaintext, const Tag& policy,
                   Entropy& rng = system_entropy());
Ciphertext encrypt_with_nonce(const MasterKey& master, ByteView plaintext, const Tag& policy,
                              ByteView nonce);

/// Throws Errc::PolicyNotSatisfied when the key lacks the policy tag and
/// Errc::IntegrityFailure when authentication fails.
Bytes decrypt(const UserKey& key, const Ciphertext& ct);

/// Sealed-box wrap of a serialized user key to a requesting party.
Bytes wrap_for_party(const crypto::KxPublicKey& recipient, const UserKey& key);
UserKey unwrap_key(const crypto::KxKeyPair& recipient, ByteView blob);

}  // namespace reclaim::abe
