#include <sodium.h>

#include <cstring>
#include <mutex>

#include "reclaim/common/bytes.hpp"
#include "reclaim/common/encoding.hpp"
#include "reclaim/common/entropy.hpp"
#include "reclaim/common/error.hpp"

namespace reclaim {

std::string_view errc_name(Errc c) {
    switch (c) {
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::PayloadTooLarge: return "PayloadTooLarge";
        case Errc::ParseError: return "ParseError";
        case Errc::InvalidKey: return "InvalidKey";
        case Errc::EntropyFailure: return "EntropyFailure";
        case Errc::PolicyNotSatisfied: return "PolicyNotSatisfied";
        case Errc::IntegrityFailure: return "IntegrityFailure";
        case Errc::UnwrapFailure: return "UnwrapFailure";
        case Errc::NotFound: return "NotFound";
        case Errc::SignatureInvalid: return "SignatureInvalid";
        case Errc::UnknownAttribute: return "UnknownAttribute";
        case Errc::UnknownTicket: return "UnknownTicket";
        case Errc::AlreadyRevoked: return "AlreadyRevoked";
        case Errc::KeyRecordMissing: return "KeyRecordMissing";
        case Errc::BindingMismatch: return "BindingMismatch";
        case Errc::Io: return "Io";
        case Errc::Locked: return "Locked";
    }
    return "Unknown";
}

std::uint32_t ByteReader::u32() {
    auto b = raw(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

std::uint64_t ByteReader::u64() {
    auto b = raw(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

ByteView ByteReader::raw(std::size_t n) {
    if (n > remaining()) fail(Errc::ParseError, "truncated input");
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
}

ByteView ByteReader::prefixed() { return raw(u32()); }

ByteView ByteReader::rest() { return raw(remaining()); }

namespace encoding {

namespace {
constexpr char kHex[] = "0123456789abcdef";
constexpr char kB32[] = "abcdefghijklmnopqrstuvwxyz234567";
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

int b32_digit(char c) {
    if (c >= 'a' && c <= 'z') return c - 'a';
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= '2' && c <= '7') return c - '2' + 26;
    return -1;
}

int b64_digit(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '-') return 62;
    if (c == '_') return 63;
    return -1;
}

// Shared bit-packing for the power-of-two alphabets.
template <int Bits>
std::string pack(ByteView in, const char* alphabet) {
    std::string out;
    out.reserve((in.size() * 8 + Bits - 1) / Bits);
    std::uint32_t acc = 0;
    int have = 0;
    for (auto byte : in) {
        acc = (acc << 8) | byte;
        have += 8;
        while (have >= Bits) {
            have -= Bits;
            out.push_back(alphabet[(acc >> have) & ((1u << Bits) - 1)]);
        }
    }
    if (have > 0) out.push_back(alphabet[(acc << (Bits - have)) & ((1u << Bits) - 1)]);
    return out;
}

template <int Bits>
Bytes unpack(std::string_view in, int (*digit)(char), const char* what) {
    Bytes out;
    out.reserve(in.size() * Bits / 8);
    std::uint32_t acc = 0;
    int have = 0;
    for (char c : in) {
        int d = digit(c);
        if (d < 0) fail(Errc::ParseError, std::string("invalid ") + what + " character");
        acc = (acc << Bits) | static_cast<std::uint32_t>(d);
        have += Bits;
        if (have >= 8) {
            have -= 8;
            out.push_back(static_cast<std::uint8_t>(acc >> have));
        }
        acc &= (1u << have) - 1;
    }
    // Leftover bits must be zero padding shorter than one symbol.
    if (have >= Bits || acc != 0) fail(Errc::ParseError, std::string("non-canonical ") + what);
    return out;
}
}  // namespace

std::string hex(ByteView in) {
    std::string out;
    out.reserve(in.size() * 2);
    for (auto b : in) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xf]);
    }
    return out;
}

Bytes unhex(std::string_view in) {
    if (in.size() % 2 != 0) fail(Errc::ParseError, "odd-length hex");
    Bytes out(in.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_digit(in[2 * i]);
        int lo = hex_digit(in[2 * i + 1]);
        if (hi < 0 || lo < 0) fail(Errc::ParseError, "invalid hex character");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

std::string base32(ByteView in) { return pack<5>(in, kB32); }
Bytes unbase32(std::string_view in) { return unpack<5>(in, b32_digit, "base32"); }

std::string base64url(ByteView in) { return pack<6>(in, kB64); }
Bytes unbase64url(std::string_view in) { return unpack<6>(in, b64_digit, "base64url"); }

void throw_size_mismatch(std::size_t want, std::size_t got) {
    fail(Errc::ParseError,
         "expected " + std::to_string(want) + " bytes, got " + std::to_string(got));
}

}  // namespace encoding

namespace {
void sodium_ready() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) fail(Errc::EntropyFailure, "libsodium initialisation failed");
    });
}
}  // namespace

void SystemEntropy::fill(std::span<std::uint8_t> out) {
    sodium_ready();
    randombytes_buf(out.data(), out.size());
}

SeededEntropy::SeededEntropy(std::uint64_t seed) {
    for (int i = 0; i < 8; ++i) seed_[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(seed >> (8 * i));
}

void SeededEntropy::fill(std::span<std::uint8_t> out) {
    sodium_ready();
    std::array<std::uint8_t, 32> block_seed{};
    std::uint8_t ctr[8];
    for (int i = 0; i < 8; ++i) ctr[i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
    ++counter_;
    crypto_generichash_state st;
    crypto_generichash_init(&st, seed_.data(), seed_.size(), block_seed.size());
    crypto_generichash_update(&st, ctr, sizeof ctr);
    crypto_generichash_final(&st, block_seed.data(), block_seed.size());
    randombytes_buf_deterministic(out.data(), out.size(), block_seed.data());
}

Entropy& system_entropy() {
    static SystemEntropy instance;
    return instance;
}

}  // namespace reclaim
