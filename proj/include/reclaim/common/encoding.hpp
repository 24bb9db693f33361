#pragma once

#include <algorithm>
#include <string>
#include <string_view>

#include "reclaim/common/bytes.hpp"

namespace reclaim::encoding {

std::string hex(ByteView in);
Bytes unhex(std::string_view in);

// RFC 4648 base32, lowercase, no padding. Decoding accepts either case.
std::string base32(ByteView in);
Bytes unbase32(std::string_view in);

// RFC 4648 base64url, no padding.
std::string base64url(ByteView in);
Bytes unbase64url(std::string_view in);

[[noreturn]] void throw_size_mismatch(std::size_t want, std::size_t got);

template <typename Fixed>
Fixed fixed_from(ByteView in) {
    Fixed out;
    if (in.size() != Fixed::size) throw_size_mismatch(Fixed::size, in.size());
    std::copy(in.begin(), in.end(), out.bytes.begin());
    return out;
}

}  // namespace reclaim::encoding
