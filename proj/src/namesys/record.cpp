#include "reclaim/namesys/record.hpp"

#include "reclaim/common/encoding.hpp"
#include "reclaim/common/error.hpp"

namespace reclaim::namesys {

namespace {
constexpr std::string_view kQueryDomain = "reclaim-gns-query";
constexpr std::string_view kRecordKeyDomain = "reclaim-gns-record-key";
constexpr std::string_view kRemoveDomain = "reclaim-gns-remove";

Bytes signed_prefix(const crypto::SigningPublicKey& derived, RecordType type, std::int64_t expiration_ms,
                    ByteView encrypted) {
    ByteWriter w;
    w.raw(derived.view());
    w.u32(static_cast<std::uint32_t>(type));
    w.u64(static_cast<std::uint64_t>(expiration_ms));
    w.prefixed(encrypted);
    return std::move(w).bytes();
}

struct ParsedBlob {
    BlobHeader header;
    ByteView encrypted;
    ByteView signed_part;
    crypto::Signature signature;
};

ParsedBlob parse_blob(ByteView blob) {
    if (blob.size() < kBlobOverhead) fail(Errc::ParseError, "blob shorter than fixed header");
    ByteReader r(blob);
    ParsedBlob p;
    p.header.derived = encoding::fixed_from<crypto::SigningPublicKey>(r.raw(32));
    const std::uint32_t type = r.u32();
    if (type != static_cast<std::uint32_t>(RecordType::IdAttr) &&
        type != static_cast<std::uint32_t>(RecordType::AbeKey))
        fail(Errc::ParseError, "unknown record type " + std::to_string(type));
    p.header.type = static_cast<RecordType>(type);
    p.header.expiration_ms = static_cast<std::int64_t>(r.u64());
    p.encrypted = r.prefixed();
    p.signed_part = blob.first(blob.size() - r.remaining());
    p.signature = encoding::fixed_from<crypto::Signature>(r.raw(64));
    if (!r.done()) fail(Errc::ParseError, "trailing bytes after blob signature");
    p.header.query_key = query_key_of_derived(p.header.derived);
    return p;
}
}  // namespace

std::string_view record_type_name(RecordType t) {
    switch (t) {
        case RecordType::IdAttr: return "ID_ATTR";
        case RecordType::AbeKey: return "ABE_KEY";
    }
    return "UNKNOWN";
}

QueryKey query_key_of_derived(const crypto::SigningPublicKey& derived) {
    auto d = crypto::hash(kQueryDomain, {derived.view()});
    QueryKey q;
    q.bytes = d.bytes;
    return q;
}

QueryKey derive_query_key(const NamespaceId& ns, std::string_view label) {
    return query_key_of_derived(crypto::blind_public(ns, label));
}

crypto::SymmetricKey record_key(const NamespaceId& ns, std::string_view label) {
    auto d = crypto::hash(kRecordKeyDomain, {ns.view(), as_bytes(label)});
    crypto::SymmetricKey k;
    k.bytes = d.bytes;
    return k;
}

BlobHeader verify_blob(ByteView blob) {
    auto p = parse_blob(blob);
    if (!crypto::verify(p.header.derived, p.signed_part, p.signature))
        fail(Errc::SignatureInvalid, "record signature does not verify");
    return p.header;
}

Bytes seal_record(const crypto::SigningKeyPair& owner, std::string_view label, RecordType type,
                  ByteView payload, std::int64_t expiration_ms, Entropy& rng) {
    if (payload.size() > kMaxPayload)
        fail(Errc::PayloadTooLarge, "record payload exceeds " + std::to_string(kMaxPayload) + " bytes");
    const crypto::BlindedSigner signer(owner, label);
    std::array<std::uint8_t, crypto::kAeadNonceBytes> nonce{};
    rng.fill(nonce);
    Bytes encrypted(nonce.begin(), nonce.end());
    append(encrypted, crypto::aead_seal(record_key(owner.public_key(), label), nonce, payload,
                                        signer.public_key().view()));
    Bytes blob = signed_prefix(signer.public_key(), type, expiration_ms, encrypted);
    append(blob, signer.sign(blob).view());
    return blob;
}

OpenedRecord open_record(const NamespaceId& ns, std::string_view label, ByteView blob) {
    auto p = parse_blob(blob);
    if (p.header.derived != crypto::blind_public(ns, label))
        fail(Errc::SignatureInvalid, "record was not published under this namespace and label");
    if (!crypto::verify(p.header.derived, p.signed_part, p.signature))
        fail(Errc::SignatureInvalid, "record signature does not verify");
    if (p.encrypted.size() < crypto::kAeadNonceBytes) fail(Errc::ParseError, "encrypted payload too short");
    OpenedRecord out;
    out.type = p.header.type;
    out.expiration_ms = p.header.expiration_ms;
    out.payload = crypto::aead_open(record_key(ns, label), p.encrypted.first(crypto::kAeadNonceBytes),
                                    p.encrypted.subspan(crypto::kAeadNonceBytes), p.header.derived.view());
    return out;
}

Bytes removal_request(const crypto::SigningKeyPair& owner, std::string_view label, ByteView blob) {
    const crypto::BlindedSigner signer(owner, label);
    auto digest = crypto::hash(kRemoveDomain, {blob});
    Bytes out(signer.public_key().bytes.begin(), signer.public_key().bytes.end());
    append(out, signer.sign(digest.view()).view());
    return out;
}

bool removal_matches(ByteView request, ByteView stored_blob) {
    if (request.size() != 96 || stored_blob.size() < 32) return false;
    if (!crypto::constant_time_equal(request.first(32), stored_blob.first(32))) return false;
    auto key = encoding::fixed_from<crypto::SigningPublicKey>(request.first(32));
    auto sig = encoding::fixed_from<crypto::Signature>(request.subspan(32));
    auto digest = crypto::hash(kRemoveDomain, {stored_blob});
    return crypto::verify(key, digest.view(), sig);
}

}  // namespace reclaim::namesys
