#include <gtest/gtest.h>

#include "reclaim/common/encoding.hpp"
#include "reclaim/common/error.hpp"
#include "reclaim/crypto/crypto.hpp"

using namespace reclaim;

namespace {
Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::InvalidArgument;
}
}  // namespace

TEST(Encoding, HexRoundTrip) {
    const Bytes b{0x00, 0x7f, 0x80, 0xff};
    EXPECT_EQ(encoding::hex(b), "007f80ff");
    EXPECT_EQ(encoding::unhex("007F80ff"), b);
    EXPECT_EQ(code_of([] { encoding::unhex("abc"); }), Errc::ParseError);
    EXPECT_EQ(code_of([] { encoding::unhex("zz"); }), Errc::ParseError);
}

TEST(Encoding, Base32MatchesRfc4648) {
    // RFC 4648 section 10 vectors, lowercased and unpadded.
    const std::pair<const char*, const char*> vectors[] = {
        {"", ""},          {"f", "my"},           {"fo", "mzxq"},           {"foo", "mzxw6"},
        {"foob", "mzxw6yq"}, {"fooba", "mzxw6ytb"}, {"foobar", "mzxw6ytboi"},
    };
    for (auto [plain, enc] : vectors) {
        EXPECT_EQ(encoding::base32(as_bytes(plain)), enc);
        EXPECT_EQ(to_string(encoding::unbase32(enc)), plain);
    }
    EXPECT_EQ(to_string(encoding::unbase32("MZXW6YTBOI")), "foobar");
    EXPECT_EQ(code_of([] { encoding::unbase32("mz1"); }), Errc::ParseError);
    EXPECT_EQ(code_of([] { encoding::unbase32("mz"); }), Errc::ParseError);  // non-canonical trailing bits
}

TEST(Encoding, Base64UrlMatchesRfc4648) {
    const std::pair<const char*, const char*> vectors[] = {
        {"", ""}, {"f", "Zg"}, {"fo", "Zm8"}, {"foo", "Zm9v"}, {"foob", "Zm9vYg"}, {"foobar", "Zm9vYmFy"},
    };
    for (auto [plain, enc] : vectors) {
        EXPECT_EQ(encoding::base64url(as_bytes(plain)), enc);
        EXPECT_EQ(to_string(encoding::unbase64url(enc)), plain);
    }
    EXPECT_EQ(encoding::base64url(Bytes{0xfb, 0xff}), "-_8");
    EXPECT_EQ(code_of([] { encoding::unbase64url("Zm9v="); }), Errc::ParseError);
}

TEST(Bytes, ReaderRejectsOverruns) {
    ByteWriter w;
    w.u32(7);
    w.prefixed(as_bytes("abc"));
    const auto b = std::move(w).bytes();
    ByteReader r(b);
    EXPECT_EQ(r.u32(), 7u);
    EXPECT_EQ(to_string(r.prefixed()), "abc");
    EXPECT_TRUE(r.done());
    EXPECT_EQ(code_of([&] { r.u32(); }), Errc::ParseError);

    ByteReader lying(Bytes{9, 0, 0, 0, 1});
    EXPECT_EQ(code_of([&] { lying.prefixed(); }), Errc::ParseError);
}

TEST(Entropy, SeededStreamIsReproducible) {
    SeededEntropy a(5), b(5), c(6);
    EXPECT_EQ(a.bytes(100), b.bytes(100));
    EXPECT_NE(a.bytes(32), c.bytes(32));
    EXPECT_NE(system_entropy().bytes(32), system_entropy().bytes(32));
}

TEST(Signing, SignVerify) {
    SeededEntropy rng(1);
    const auto kp = crypto::SigningKeyPair::generate(rng);
    const auto sig = kp.sign(as_bytes("hello"));
    EXPECT_TRUE(crypto::verify(kp.public_key(), as_bytes("hello"), sig));
    EXPECT_FALSE(crypto::verify(kp.public_key(), as_bytes("hellp"), sig));
    EXPECT_EQ(crypto::SigningKeyPair::from_seed(kp.seed()).public_key(), kp.public_key());
}

TEST(Signing, BlindedKeysVerifyAsPlainEd25519) {
    SeededEntropy rng(1);
    const auto kp = crypto::SigningKeyPair::generate(rng);
    for (const char* label : {"email", "name", "", "a-much-longer-label-with-punctuation!"}) {
        crypto::BlindedSigner signer(kp, label);
        EXPECT_EQ(signer.public_key(), crypto::blind_public(kp.public_key(), label));
        EXPECT_NE(signer.public_key(), kp.public_key());
        const auto sig = signer.sign(as_bytes("payload"));
        EXPECT_TRUE(crypto::verify(signer.public_key(), as_bytes("payload"), sig));
        EXPECT_FALSE(crypto::verify(kp.public_key(), as_bytes("payload"), sig));
        EXPECT_EQ(sig, signer.sign(as_bytes("payload")));  // deterministic nonces
    }
    EXPECT_NE(crypto::blind_public(kp.public_key(), "a"), crypto::blind_public(kp.public_key(), "b"));
}

TEST(Aead, RoundTripAndTamper) {
    crypto::SymmetricKey key;
    key.bytes.fill(3);
    const Bytes nonce(24, 9);
    auto ct = crypto::aead_seal(key, nonce, as_bytes("secret"), as_bytes("ad"));
    EXPECT_EQ(ct.size(), 6 + crypto::kAeadTagBytes);
    EXPECT_EQ(to_string(crypto::aead_open(key, nonce, ct, as_bytes("ad"))), "secret");
    EXPECT_EQ(code_of([&] { crypto::aead_open(key, nonce, ct, as_bytes("ae")); }), Errc::IntegrityFailure);
    ct[0] ^= 1;
    EXPECT_EQ(code_of([&] { crypto::aead_open(key, nonce, ct, as_bytes("ad")); }), Errc::IntegrityFailure);
    EXPECT_EQ(code_of([&] { crypto::aead_seal(key, Bytes(12), {}, {}); }), Errc::InvalidArgument);
}

TEST(SealedBox, OnlyRecipientOpens) {
    SeededEntropy rng(1);
    const auto alice = crypto::KxKeyPair::from_signing(crypto::SigningKeyPair::generate(rng));
    const auto bob_sign = crypto::SigningKeyPair::generate(rng);
    const auto bob = crypto::KxKeyPair::from_signing(bob_sign);
    EXPECT_EQ(crypto::kx_public_from_signing(bob_sign.public_key()), bob.public_key());

    const auto sealed = crypto::seal_to(bob.public_key(), as_bytes("key material"));
    EXPECT_EQ(sealed.size(), 12 + crypto::kSealOverhead);
    EXPECT_EQ(to_string(crypto::open_sealed(bob, sealed)), "key material");
    EXPECT_EQ(code_of([&] { crypto::open_sealed(alice, sealed); }), Errc::UnwrapFailure);
    EXPECT_EQ(code_of([&] { crypto::open_sealed(bob, ByteView(sealed).first(10)); }), Errc::UnwrapFailure);
}

TEST(Hash, DomainSeparated) {
    EXPECT_NE(crypto::hash("a", {as_bytes("b")}), crypto::hash("b", {as_bytes("a")}));
    EXPECT_EQ(crypto::hash("ab", {}), crypto::hash("a", {as_bytes("b")}));
    // BLAKE2b-256("abc"), from the reference implementation's test vectors.
    EXPECT_EQ(encoding::hex(crypto::hash("abc", {}).view()),
              "bddd813c634239723171ef3fee98579b94964e3bb1cb3e427262c8c068d52319");
}
