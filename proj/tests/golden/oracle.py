#!/usr/bin/env python3
"""Independent reference computations for the frozen test vectors.

Pure-Python Ed25519 point arithmetic plus hashlib and the `cryptography`
package; shares no code with the C++ implementation. Run it to regenerate
golden.json after a deliberate format change.
"""

import hashlib
import json
import struct
import sys
from pathlib import Path

from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

# --- Ed25519 ----------------------------------------------------------------

P = 2**255 - 19
L = 2**252 + 27742317777372353535851937790883648493
D = -121665 * pow(121666, P - 2, P) % P
I = pow(2, (P - 1) // 4, P)


def inv(x):
    return pow(x, P - 2, P)


def recover_x(y, sign):
    xx = (y * y - 1) * inv(D * y * y + 1)
    x = pow(xx, (P + 3) // 8, P)
    if (x * x - xx) % P != 0:
        x = x * I % P
    if x % 2 != sign:
        x = P - x
    return x


BY = 4 * inv(5) % P
B = (recover_x(BY, 0), BY)


def add(p1, p2):
    x1, y1 = p1
    x2, y2 = p2
    t = D * x1 * x2 * y1 * y2
    x3 = (x1 * y2 + x2 * y1) * inv(1 + t)
    y3 = (y1 * y2 + x1 * x2) * inv(1 - t)
    return (x3 % P, y3 % P)


def mul(k, pt):
    acc = (0, 1)
    while k:
        if k & 1:
            acc = add(acc, pt)
        pt = add(pt, pt)
        k >>= 1
    return acc


def encode(pt):
    x, y = pt
    return (y | ((x & 1) << 255)).to_bytes(32, "little")


def decode(b):
    y = int.from_bytes(b, "little")
    sign = y >> 255
    y &= (1 << 255) - 1
    return (recover_x(y, sign), y)


def secret_scalar(seed):
    h = bytearray(hashlib.sha512(seed).digest()[:32])
    h[0] &= 248
    h[31] &= 127
    h[31] |= 64
    return int.from_bytes(h, "little")


def public_key(seed):
    return encode(mul(secret_scalar(seed), B))


def blind(pub, label):
    h = int.from_bytes(hashlib.sha512(b"reclaim-label-blind" + pub + label.encode()).digest(), "little") % L
    return encode(mul(h, decode(pub)))


def b2b(*parts, key=b""):
    return hashlib.blake2b(b"".join(parts), digest_size=32, key=key).digest()


# --- XChaCha20-Poly1305 -----------------------------------------------------

def rotl(v, n):
    return ((v << n) | (v >> (32 - n))) & 0xFFFFFFFF


def hchacha20(key, nonce16):
    s = list(struct.unpack("<4I", b"expand 32-byte k")) + list(struct.unpack("<8I", key)) + list(
        struct.unpack("<4I", nonce16))

    def qr(a, b, c, d):
        s[a] = (s[a] + s[b]) & 0xFFFFFFFF; s[d] = rotl(s[d] ^ s[a], 16)
        s[c] = (s[c] + s[d]) & 0xFFFFFFFF; s[b] = rotl(s[b] ^ s[c], 12)
        s[a] = (s[a] + s[b]) & 0xFFFFFFFF; s[d] = rotl(s[d] ^ s[a], 8)
        s[c] = (s[c] + s[d]) & 0xFFFFFFFF; s[b] = rotl(s[b] ^ s[c], 7)

    for _ in range(10):
        qr(0, 4, 8, 12); qr(1, 5, 9, 13); qr(2, 6, 10, 14); qr(3, 7, 11, 15)
        qr(0, 5, 10, 15); qr(1, 6, 11, 12); qr(2, 7, 8, 13); qr(3, 4, 9, 14)
    return struct.pack("<8I", *(s[0:4] + s[12:16]))


def xchacha_seal(key, nonce24, pt, ad):
    sub = hchacha20(key, nonce24[:16])
    return ChaCha20Poly1305(sub).encrypt(b"\0" * 4 + nonce24[16:], pt, ad)


# --- vectors ----------------------------------------------------------------

def u32(n):
    return struct.pack("<I", n)


def tag(name, version):
    return name.encode() + b"\x1f" + str(version).encode()


def main():
    seed = bytes(range(32))
    pub = public_key(seed)
    derived = blind(pub, "email")
    query_key = b2b(b"reclaim-gns-query", derived)

    msk = bytes([0x42] * 32)

    def tag_key(t):
        return b2b(b"reclaim-abe-tag-key", t, key=msk)

    tags = sorted([tag("email", 0), tag("name", 3), tag("email", 10)])
    user_key = u32(len(tags)) + b"".join(u32(len(t)) + t + tag_key(t) for t in tags)

    nonce = bytes(range(100, 124))
    policy = tag("email", 2)
    body = xchacha_seal(tag_key(policy), nonce, b"alice@doe.com", policy)
    ciphertext = u32(len(policy)) + policy + nonce + body

    out = {
        "seed_hex": seed.hex(),
        "public_key_hex": pub.hex(),
        "blinded_email_hex": derived.hex(),
        "query_key_email_hex": query_key.hex(),
        "abe_master_hex": msk.hex(),
        "user_key_hex": user_key.hex(),
        "ciphertext_nonce_hex": nonce.hex(),
        "ciphertext_hex": ciphertext.hex(),
    }
    json.dump(out, sys.stdout, indent=2)
    print()


if __name__ == "__main__":
    main()
