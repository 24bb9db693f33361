#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reclaim {

enum class Errc {
    InvalidArgument,
    PayloadTooLarge,
    ParseError,
    InvalidKey,
    EntropyFailure,
    // crypto
    PolicyNotSatisfied,
    IntegrityFailure,
    UnwrapFailure,
    // name system
    NotFound,
    SignatureInvalid,
    // identity provider
    UnknownAttribute,
    UnknownTicket,
    AlreadyRevoked,
    KeyRecordMissing,
    BindingMismatch,
    // infrastructure
    Io,
    Locked,
};

std::string_view errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace reclaim
