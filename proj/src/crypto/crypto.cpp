#include "reclaim/crypto/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <mutex>

#include "reclaim/common/error.hpp"

namespace reclaim::crypto {

namespace {

void ensure_init() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) fail(Errc::EntropyFailure, "libsodium initialisation failed");
    });
}

using Scalar = std::array<std::uint8_t, 32>;

Scalar reduce_wide(const std::array<std::uint8_t, 64>& wide) {
    Scalar out;
    crypto_core_ed25519_scalar_reduce(out.data(), wide.data());
    return out;
}

Scalar reduce_narrow(const std::uint8_t* s) {
    std::array<std::uint8_t, 64> wide{};
    std::copy_n(s, 32, wide.begin());
    return reduce_wide(wide);
}

// Label tweak h = H(pub || label) mod L.
Scalar blinding_factor(const SigningPublicKey& owner, std::string_view label) {
    std::array<std::uint8_t, 64> wide{};
    crypto_hash_sha512_state st;
    crypto_hash_sha512_init(&st);
    static constexpr std::string_view kDomain = "reclaim-label-blind";
    crypto_hash_sha512_update(&st, reinterpret_cast<const unsigned char*>(kDomain.data()), kDomain.size());
    crypto_hash_sha512_update(&st, owner.bytes.data(), owner.bytes.size());
    crypto_hash_sha512_update(&st, reinterpret_cast<const unsigned char*>(label.data()), label.size());
    crypto_hash_sha512_final(&st, wide.data());
    return reduce_wide(wide);
}

void sha512_parts(std::array<std::uint8_t, 64>& out, std::initializer_list<ByteView> parts) {
    crypto_hash_sha512_state st;
    crypto_hash_sha512_init(&st);
    for (auto p : parts) crypto_hash_sha512_update(&st, p.data(), p.size());
    crypto_hash_sha512_final(&st, out.data());
}

}  // namespace

SigningKeyPair SigningKeyPair::generate(Entropy& rng) {
    SigningSeed seed;
    rng.fill(seed.bytes);
    return from_seed(seed);
}

SigningKeyPair SigningKeyPair::from_seed(const SigningSeed& seed) {
    ensure_init();
    SigningKeyPair kp;
    kp.seed_ = seed;
    std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
    crypto_sign_seed_keypair(kp.public_.bytes.data(), sk.data(), seed.bytes.data());
    sodium_memzero(sk.data(), sk.size());
    return kp;
}

Signature SigningKeyPair::sign(ByteView message) const {
    ensure_init();
    std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
    std::array<std::uint8_t, 32> pk{};
    crypto_sign_seed_keypair(pk.data(), sk.data(), seed_.bytes.data());
    Signature sig;
    crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(), sk.data());
    sodium_memzero(sk.data(), sk.size());
    return sig;
}

bool verify(const SigningPublicKey& key, ByteView message, const Signature& sig) {
    ensure_init();
    return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                       key.bytes.data()) == 0;
}

KxKeyPair KxKeyPair::from_signing(const SigningKeyPair& identity) {
    ensure_init();
    std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
    std::array<std::uint8_t, 32> pk{};
    crypto_sign_seed_keypair(pk.data(), sk.data(), identity.seed().bytes.data());
    KxKeyPair kp;
    crypto_sign_ed25519_sk_to_curve25519(kp.secret_.bytes.data(), sk.data());
    sodium_memzero(sk.data(), sk.size());
    crypto_scalarmult_base(kp.public_.bytes.data(), kp.secret_.bytes.data());
    return kp;
}

KxPublicKey kx_public_from_signing(const SigningPublicKey& identity) {
    ensure_init();
    KxPublicKey out;
    if (crypto_sign_ed25519_pk_to_curve25519(out.bytes.data(), identity.bytes.data()) != 0)
        fail(Errc::InvalidKey, "public key is not a valid Ed25519 point");
    return out;
}

BlindedSigner::BlindedSigner(const SigningKeyPair& owner, std::string_view label) {
    ensure_init();
    const Scalar h = blinding_factor(owner.public_key(), label);

    std::array<std::uint8_t, 64> expanded{};
    crypto_hash_sha512(expanded.data(), owner.seed().bytes.data(), owner.seed().bytes.size());
    expanded[0] &= 248;
    expanded[31] &= 127;
    expanded[31] |= 64;
    const Scalar a = reduce_narrow(expanded.data());
    crypto_core_ed25519_scalar_mul(scalar_.data(), h.data(), a.data());

    std::array<std::uint8_t, 64> prefix{};
    static constexpr std::string_view kDomain = "reclaim-blind-nonce";
    sha512_parts(prefix, {as_bytes(kDomain), ByteView(expanded.data() + 32, 32), ByteView(h)});
    std::copy_n(prefix.begin(), 32, nonce_prefix_.begin());
    sodium_memzero(expanded.data(), expanded.size());

    if (crypto_scalarmult_ed25519_base_noclamp(public_.bytes.data(), scalar_.data()) != 0)
        fail(Errc::InvalidKey, "degenerate blinded key");
}

Signature BlindedSigner::sign(ByteView message) const {
    // Ed25519 signing with an explicit scalar: R = rB, S = r + H(R||A||M)·d.
    std::array<std::uint8_t, 64> wide{};
    sha512_parts(wide, {ByteView(nonce_prefix_), message});
    const Scalar r = reduce_wide(wide);

    Signature sig;
    if (crypto_scalarmult_ed25519_base_noclamp(sig.bytes.data(), r.data()) != 0)
        fail(Errc::InvalidKey, "degenerate signing nonce");

    sha512_parts(wide, {ByteView(sig.bytes.data(), 32), public_.view(), message});
    const Scalar k = reduce_wide(wide);

    Scalar kd;
    crypto_core_ed25519_scalar_mul(kd.data(), k.data(), scalar_.data());
    crypto_core_ed25519_scalar_add(sig.bytes.data() + 32, r.data(), kd.data());
    return sig;
}

SigningPublicKey blind_public(const SigningPublicKey& owner, std::string_view label) {
    ensure_init();
    const Scalar h = blinding_factor(owner, label);
    SigningPublicKey out;
    if (crypto_scalarmult_ed25519_noclamp(out.bytes.data(), h.data(), owner.bytes.data()) != 0)
        fail(Errc::InvalidKey, "namespace key is not a valid Ed25519 point");
    return out;
}

Bytes aead_seal(const SymmetricKey& key, ByteView nonce, ByteView plaintext, ByteView ad) {
    ensure_init();
    if (nonce.size() != kAeadNonceBytes) fail(Errc::InvalidArgument, "AEAD nonce must be 24 bytes");
    Bytes out(plaintext.size() + kAeadTagBytes);
    unsigned long long len = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(out.data(), &len, plaintext.data(), plaintext.size(),
                                               ad.data(), ad.size(), nullptr, nonce.data(),
                                               key.bytes.data());
    out.resize(static_cast<std::size_t>(len));
    return out;
}

Bytes aead_open(const SymmetricKey& key, ByteView nonce, ByteView ciphertext, ByteView ad) {
    ensure_init();
    if (nonce.size() != kAeadNonceBytes) fail(Errc::InvalidArgument, "AEAD nonce must be 24 bytes");
    if (ciphertext.size() < kAeadTagBytes) fail(Errc::IntegrityFailure, "ciphertext shorter than tag");
    Bytes out(ciphertext.size() - kAeadTagBytes);
    unsigned long long len = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(out.data(), &len, nullptr, ciphertext.data(),
                                                   ciphertext.size(), ad.data(), ad.size(),
                                                   nonce.data(), key.bytes.data()) != 0)
        fail(Errc::IntegrityFailure, "authentication failed");
    out.resize(static_cast<std::size_t>(len));
    return out;
}

Bytes seal_to(const KxPublicKey& recipient, ByteView plaintext) {
    ensure_init();
    Bytes out(plaintext.size() + crypto_box_SEALBYTES);
    if (crypto_box_seal(out.data(), plaintext.data(), plaintext.size(), recipient.bytes.data()) != 0)
        fail(Errc::InvalidKey, "recipient key rejected");
    return out;
}

Bytes open_sealed(const KxKeyPair& recipient, ByteView blob) {
    ensure_init();
    if (blob.size() < crypto_box_SEALBYTES) fail(Errc::UnwrapFailure, "sealed blob too short");
    Bytes out(blob.size() - crypto_box_SEALBYTES);
    if (crypto_box_seal_open(out.data(), blob.data(), blob.size(), recipient.public_key().bytes.data(),
                             recipient.secret_key().bytes.data()) != 0)
        fail(Errc::UnwrapFailure, "sealed blob does not open with this key");
    return out;
}

Digest hash(std::string_view domain, std::initializer_list<ByteView> parts) {
    ensure_init();
    Digest out;
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, out.size);
    crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(domain.data()), domain.size());
    for (auto p : parts) crypto_generichash_update(&st, p.data(), p.size());
    crypto_generichash_final(&st, out.bytes.data(), out.size);
    return out;
}

SymmetricKey keyed_hash(ByteView key, std::string_view domain, std::initializer_list<ByteView> parts) {
    ensure_init();
    if (key.size() < crypto_generichash_KEYBYTES_MIN || key.size() > crypto_generichash_KEYBYTES_MAX)
        fail(Errc::InvalidKey, "keyed hash key length out of range");
    SymmetricKey out;
    crypto_generichash_state st;
    crypto_generichash_init(&st, key.data(), key.size(), out.size);
    crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(domain.data()), domain.size());
    for (auto p : parts) crypto_generichash_update(&st, p.data(), p.size());
    crypto_generichash_final(&st, out.bytes.data(), out.size);
    return out;
}

bool constant_time_equal(ByteView a, ByteView b) {
    return a.size() == b.size() && sodium_memcmp(a.data(), b.data(), a.size()) == 0;
}

}  // namespace reclaim::crypto
