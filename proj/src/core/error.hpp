#pragma once

#include <stdexcept>
#include <string>

namespace typoprobe {

// Numeric values are part of the C ABI (see typoprobe.h); do not reorder.
enum class ErrorCode : int {
    kOk = 0,
    kValidation = 1,
    kBadInput = 2,
    kMissingData = 3,
    kNumerical = 4,
    kIo = 5,
    kParse = 6,
    kBadMagic = 7,
    kTruncated = 8,
    kUnsupportedVersion = 9,
    kFormat = 10,
    kDimensionMismatch = 11,
    kInvalidArgument = 12,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace typoprobe
