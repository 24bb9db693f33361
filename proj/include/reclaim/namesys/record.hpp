#pragma once

// Signed, label-encrypted name-system records.
//
// Blob wire format (all integers little-endian):
//   derived public key (32) ‖ record type (4) ‖ expiration epoch-ms (8)
//   ‖ payload length (4) ‖ encrypted payload ‖ signature (64)
//
// The encrypted payload is nonce (24) ‖ XChaCha20-Poly1305 ciphertext under
// a key derived from (namespace public key, label). The signature is made
// with the label-blinded namespace key over every byte before it.

#include <cstdint>
#include <string>
#include <string_view>

#include "reclaim/common/bytes.hpp"
#include "reclaim/common/entropy.hpp"
#include "reclaim/crypto/crypto.hpp"

namespace reclaim::namesys {

enum class RecordType : std::uint32_t {
    IdAttr = 1,
    AbeKey = 2,
};

std::string_view record_type_name(RecordType t);

inline constexpr std::size_t kMaxPayload = 64 * 1024;
inline constexpr std::size_t kBlobOverhead = 32 + 4 + 8 + 4 + 64;

struct QueryKeyTag {};
using QueryKey = FixedBytes<32, QueryKeyTag>;

using NamespaceId = crypto::SigningPublicKey;

/// H(blind(namespace, label)). Computable only by parties knowing both the
/// namespace key and the label; storers can check a blob against it.
QueryKey derive_query_key(const NamespaceId& ns, std::string_view label);
QueryKey query_key_of_derived(const crypto::SigningPublicKey& derived);

crypto::SymmetricKey record_key(const NamespaceId& ns, std::string_view label);

struct BlobHeader {
    crypto::SigningPublicKey derived;
    RecordType type = RecordType::IdAttr;
    std::int64_t expiration_ms = 0;
    QueryKey query_key;
};

/// Parses and checks the signature; no decryption. Throws Errc::ParseError
/// for malformed input and Errc::SignatureInvalid for a bad signature.
BlobHeader verify_blob(ByteView blob);

struct OpenedRecord {
    RecordType type = RecordType::IdAttr;
    Bytes payload;
    std::int64_t expiration_ms = 0;
};

/// Builds a signed, encrypted blob. Throws Errc::PayloadTooLarge.
Bytes seal_record(const crypto::SigningKeyPair& owner, std::string_view label, RecordType type,
                  ByteView payload, std::int64_t expiration_ms, Entropy& rng);

/// Verifies and decrypts a blob as the holder of (namespace, label).
/// Throws Errc::SignatureInvalid if the blob was not made for that pair.
OpenedRecord open_record(const NamespaceId& ns, std::string_view label, ByteView blob);

/// Owner-signed request asking storers to drop one exact blob.
/// Layout: derived public key (32) ‖ signature (64) over the blob digest.
Bytes removal_request(const crypto::SigningKeyPair& owner, std::string_view label, ByteView blob);
bool removal_matches(ByteView request, ByteView stored_blob);

}  // namespace reclaim::namesys
