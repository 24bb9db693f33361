#pragma once

#include <array>
#include <string_view>

#include "reclaim/common/bytes.hpp"
#include "reclaim/common/entropy.hpp"

namespace reclaim::crypto {

struct SigningPublicKeyTag {};
struct SigningSeedTag {};
struct SignatureTag {};
struct KxPublicKeyTag {};
struct KxSecretKeyTag {};
struct SymmetricKeyTag {};
struct DigestTag {};

using SigningPublicKey = FixedBytes<32, SigningPublicKeyTag>;
using SigningSeed = FixedBytes<32, SigningSeedTag>;
using Signature = FixedBytes<64, SignatureTag>;
using KxPublicKey = FixedBytes<32, KxPublicKeyTag>;
using KxSecretKey = FixedBytes<32, KxSecretKeyTag>;
using SymmetricKey = FixedBytes<32, SymmetricKeyTag>;
using Digest = FixedBytes<32, DigestTag>;

inline constexpr std::size_t kAeadNonceBytes = 24;
inline constexpr std::size_t kAeadTagBytes = 16;
inline constexpr std::size_t kSealOverhead = 48;

/// Ed25519 key pair. The seed is the only secret; everything else is derived.
class SigningKeyPair {
public:
    static SigningKeyPair generate(Entropy& rng);
    static SigningKeyPair from_seed(const SigningSeed& seed);

    const SigningPublicKey& public_key() const { return public_; }
    const SigningSeed& seed() const { return seed_; }

    Signature sign(ByteView message) const;

private:
    SigningSeed seed_;
    SigningPublicKey public_;
};

bool verify(const SigningPublicKey& key, ByteView message, const Signature& sig);

/// X25519 key pair derived from an Ed25519 identity, so a namespace id alone
/// is enough to encrypt to its owner.
class KxKeyPair {
public:
    static KxKeyPair from_signing(const SigningKeyPair& identity);

    const KxPublicKey& public_key() const { return public_; }
    const KxSecretKey& secret_key() const { return secret_; }

private:
    KxPublicKey public_;
    KxSecretKey secret_;
};

KxPublicKey kx_public_from_signing(const SigningPublicKey& identity);

/// Signing key blinded by a label. The blinded public key can be computed
/// from the namespace public key and the label alone, and signatures made
/// with the blinded scalar verify as ordinary Ed25519 signatures.
class BlindedSigner {
public:
    BlindedSigner(const SigningKeyPair& owner, std::string_view label);

    const SigningPublicKey& public_key() const { return public_; }
    Signature sign(ByteView message) const;

private:
    std::array<std::uint8_t, 32> scalar_{};
    std::array<std::uint8_t, 32> nonce_prefix_{};
    SigningPublicKey public_;
};

SigningPublicKey blind_public(const SigningPublicKey& owner, std::string_view label);

// XChaCha20-Poly1305 with an explicit 24-byte nonce.
Bytes aead_seal(const SymmetricKey& key, ByteView nonce, ByteView plaintext, ByteView ad);
// Throws Errc::IntegrityFailure when authentication fails.
Bytes aead_open(const SymmetricKey& key, ByteView nonce, ByteView ciphertext, ByteView ad);

// Anonymous sealed box to an X25519 key. Throws Errc::InvalidKey for keys
// that yield a degenerate shared secret.
Bytes seal_to(const KxPublicKey& recipient, ByteView plaintext);
// Throws Errc::UnwrapFailure on any failure.
Bytes open_sealed(const KxKeyPair& recipient, ByteView blob);

/// BLAKE2b-256 over the concatenation of parts, with a domain-separation string.
Digest hash(std::string_view domain, std::initializer_list<ByteView> parts);
/// Keyed BLAKE2b-256.
SymmetricKey keyed_hash(ByteView key, std::string_view domain, std::initializer_list<ByteView> parts);

bool constant_time_equal(ByteView a, ByteView b);

}  // namespace reclaim::crypto
