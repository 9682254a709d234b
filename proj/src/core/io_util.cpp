#include "io_util.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include "error.hpp"

namespace typoprobe {

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::kOk: return "ok";
        case ErrorCode::kValidation: return "validation";
        case ErrorCode::kBadInput: return "bad_input";
        case ErrorCode::kMissingData: return "missing_data";
        case ErrorCode::kNumerical: return "numerical";
        case ErrorCode::kIo: return "io";
        case ErrorCode::kParse: return "parse";
        case ErrorCode::kBadMagic: return "bad_magic";
        case ErrorCode::kTruncated: return "truncated";
        case ErrorCode::kUnsupportedVersion: return "unsupported_version";
        case ErrorCode::kFormat: return "format";
        case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
        case ErrorCode::kInvalidArgument: return "invalid_argument";
    }
    return "unknown";
}

namespace {

std::string read_all(const std::filesystem::path& path, std::ios::openmode mode) {
    std::ifstream in(path, mode);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrorCode::kIo, "read failed: " + path.string());
    return ss.str();
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) { return read_all(path, std::ios::in); }

std::string read_binary_file(const std::filesystem::path& path) {
    return read_all(path, std::ios::in | std::ios::binary);
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) fail(ErrorCode::kIo, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::out | std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot open for writing " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        fail(ErrorCode::kIo, "sha256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file_hex(const std::filesystem::path& path) { return sha256_hex(read_binary_file(path)); }

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) fail(ErrorCode::kFormat, "cannot format double");
    return std::string(buf.data(), ptr);
}

}  // namespace typoprobe
