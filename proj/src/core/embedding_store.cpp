#include "embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "error.hpp"
#include "io_util.hpp"

namespace typoprobe {

using nlohmann::json;

std::size_t dtype_size(DType d) noexcept { return d == DType::kF32 ? 4 : 8; }

const char* dtype_name(DType d) noexcept { return d == DType::kF32 ? "f32" : "f64"; }

namespace {

std::optional<DType> parse_dtype(std::string_view s) {
    if (s == "f32") return DType::kF32;
    if (s == "f64") return DType::kF64;
    return std::nullopt;
}

void check_header(const EmbeddingSetHeader& h) {
    if (h.dim == 0) fail(ErrorCode::kFormat, "embedding dim must be positive");
    if (h.count == 0) fail(ErrorCode::kFormat, "embedding count must be positive");
    if (h.layer_index < 0 || h.layer_index > kMaxLayerIndex) {
        fail(ErrorCode::kFormat, "layer index " + std::to_string(h.layer_index) + " outside 0.." +
                                     std::to_string(kMaxLayerIndex));
    }
    if (h.dim > std::numeric_limits<std::uint32_t>::max()) fail(ErrorCode::kFormat, "embedding dim too large");
    if (h.language.empty()) fail(ErrorCode::kFormat, "embedding set has no language");
    for (const auto* s : {&h.encoder_name, &h.provenance}) {
        if (s->size() > std::numeric_limits<std::uint16_t>::max()) fail(ErrorCode::kFormat, "header string too long");
    }
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void str(const std::string& s) {
        le(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(out_); }
    void reserve(std::size_t n) { out_.reserve(n); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::byte> data) : data_(data) {}

    void need(std::size_t n, const char* what) const {
        if (data_.size() - pos_ < n) fail(ErrorCode::kTruncated, std::string("truncated header: ") + what);
    }
    template <typename T>
    T le(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(std::to_integer<unsigned>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }
    std::string str(const char* what) {
        const auto n = le<std::uint16_t>(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t pos() const noexcept { return pos_; }

private:
    std::span<const std::byte> data_;
    std::size_t pos_ = 0;
};

EmbeddingSetHeader decode_header(Reader& r) {
    r.need(sizeof(kEmbeddingMagic), "magic");
    char magic[8];
    for (char& c : magic) c = static_cast<char>(r.le<std::uint8_t>("magic"));
    if (std::memcmp(magic, kEmbeddingMagic, sizeof magic) != 0) fail(ErrorCode::kBadMagic, "bad magic");

    EmbeddingSetHeader h;
    h.version = r.le<std::uint16_t>("version");
    if (h.version != kEmbeddingVersion) {
        fail(ErrorCode::kUnsupportedVersion, "unsupported embedding file version " + std::to_string(h.version));
    }
    const auto dtype = r.le<std::uint8_t>("dtype");
    if (dtype > 1) fail(ErrorCode::kFormat, "unknown dtype tag " + std::to_string(dtype));
    h.dtype = static_cast<DType>(dtype);
    if (r.le<std::uint8_t>("reserved") != 0) fail(ErrorCode::kFormat, "reserved header byte is not zero");
    h.layer_index = r.le<std::uint16_t>("layer_index");
    h.dim = r.le<std::uint32_t>("dim");
    const auto count = r.le<std::uint64_t>("count");
    if (count > std::numeric_limits<std::size_t>::max()) fail(ErrorCode::kFormat, "count too large");
    h.count = static_cast<std::size_t>(count);
    const auto lang = r.str("language");
    if (!LanguageId::is_valid(lang)) fail(ErrorCode::kFormat, "invalid language code in header");
    h.language = LanguageId(lang);
    h.encoder_name = r.str("encoder_name");
    h.provenance = r.str("provenance");
    check_header(h);
    return h;
}

std::size_t payload_size(const EmbeddingSetHeader& h) {
    const std::size_t elem = dtype_size(h.dtype);
    if (h.count > std::numeric_limits<std::size_t>::max() / h.dim ||
        h.count * h.dim > std::numeric_limits<std::size_t>::max() / elem) {
        fail(ErrorCode::kFormat, "declared payload size overflows");
    }
    return h.count * h.dim * elem;
}

void check_payload_length(const EmbeddingSetHeader& h, std::size_t available) {
    const std::size_t expected = payload_size(h);
    if (available < expected) {
        fail(ErrorCode::kTruncated, "truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                                        std::to_string(available));
    }
    if (available > expected) {
        fail(ErrorCode::kFormat, "trailing data: " + std::to_string(available - expected) + " bytes after payload");
    }
}

}  // namespace

std::vector<double> quantize(std::vector<double> values, DType dtype) {
    if (dtype == DType::kF32) {
        for (double& v : values) v = static_cast<double>(static_cast<float>(v));
    }
    return values;
}

EmbeddingMatrix::EmbeddingMatrix(EmbeddingSetHeader header, std::vector<double> values)
    : header_(std::move(header)), values_(std::move(values)) {
    check_header(header_);
    if (values_.size() / header_.dim != header_.count || values_.size() % header_.dim != 0) {
        fail(ErrorCode::kDimensionMismatch, "matrix has " + std::to_string(values_.size()) + " values, header declares " +
                                                std::to_string(header_.count) + "x" + std::to_string(header_.dim));
    }
    const double limit = header_.dtype == DType::kF32 ? static_cast<double>(std::numeric_limits<float>::max())
                                                       : std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!(std::fabs(values_[i]) <= limit)) {
            fail(ErrorCode::kFormat, std::string(std::isfinite(values_[i]) ? "value out of range for " : "non-finite value for ") +
                                         dtype_name(header_.dtype) + " at row " + std::to_string(i / header_.dim) +
                                         ", column " + std::to_string(i % header_.dim));
        }
    }
    values_ = quantize(std::move(values_), header_.dtype);
}

std::string encode_embeddings(const EmbeddingMatrix& m) {
    const auto& h = m.header();
    check_header(h);
    Writer w;
    w.reserve(64 + h.encoder_name.size() + h.provenance.size() + payload_size(h));
    w.bytes(kEmbeddingMagic, sizeof kEmbeddingMagic);
    w.le<std::uint16_t>(h.version);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(h.dtype));
    w.le<std::uint8_t>(0);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(h.layer_index));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(h.dim));
    w.le<std::uint64_t>(static_cast<std::uint64_t>(h.count));
    w.str(h.language.str());
    w.str(h.encoder_name);
    w.str(h.provenance);
    for (double v : m.values()) {
        if (!std::isfinite(v)) fail(ErrorCode::kFormat, "refusing to write non-finite value");
        if (h.dtype == DType::kF32) {
            w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            w.le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
        }
    }
    return w.take();
}

EmbeddingMatrix decode_embeddings(std::span<const std::byte> bytes) {
    Reader r(bytes);
    EmbeddingSetHeader h = decode_header(r);
    check_payload_length(h, r.remaining());
    std::vector<double> values(h.count * h.dim);
    for (std::size_t i = 0; i < values.size(); ++i) {
        double v = h.dtype == DType::kF32 ? static_cast<double>(std::bit_cast<float>(r.le<std::uint32_t>("payload")))
                                          : std::bit_cast<double>(r.le<std::uint64_t>("payload"));
        if (!std::isfinite(v)) {
            fail(ErrorCode::kFormat, "non-finite value at row " + std::to_string(i / h.dim) + ", column " +
                                         std::to_string(i % h.dim));
        }
        values[i] = v;
    }
    return EmbeddingMatrix(std::move(h), std::move(values));
}

EmbeddingMatrix decode_embeddings(std::string_view bytes) {
    return decode_embeddings(std::as_bytes(std::span<const char>(bytes.data(), bytes.size())));
}

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
    write_file(path, encode_embeddings(matrix));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    const auto bytes = read_binary_file(path);
    try {
        return decode_embeddings(std::string_view(bytes));
    } catch (const Error& e) {
        fail(e.code(), path.string() + ": " + e.what());
    }
}

EmbeddingSetHeader read_embedding_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    // Fixed part plus three maximal strings is an upper bound on header size.
    std::string head(26 + 3 * (2 + 65535), '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    try {
        Reader r(std::as_bytes(std::span<const char>(head.data(), head.size())));
        auto h = decode_header(r);
        const auto file_size = std::filesystem::file_size(path);
        check_payload_length(h, static_cast<std::size_t>(file_size) - r.pos());
        return h;
    } catch (const Error& e) {
        fail(e.code(), path.string() + ": " + e.what());
    }
}

const ManifestEntry* Manifest::find(const LanguageId& language) const {
    for (const auto& e : entries) {
        if (e.language == language) return &e;
    }
    return nullptr;
}

ManifestEntry make_manifest_entry(const EmbeddingMatrix& m, const std::string& relative_path,
                                  const std::string& sha256) {
    const auto& h = m.header();
    return ManifestEntry{h.language, relative_path, sha256, h.encoder_name, h.layer_index, h.dim, h.count, h.dtype};
}

Manifest parse_manifest(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::kParse, std::string("manifest: ") + e.what());
    }
    Manifest m;
    try {
        m.experiment_tag = doc.value("experiment_tag", std::string());
        std::size_t i = 0;
        for (const auto& row : doc.at("entries")) {
            ++i;
            ManifestEntry e;
            const auto lang = row.at("language").get<std::string>();
            if (!LanguageId::is_valid(lang)) {
                fail(ErrorCode::kParse, "manifest entry " + std::to_string(i) + ": invalid language '" + lang + "'");
            }
            e.language = LanguageId(lang);
            e.path = row.at("path").get<std::string>();
            e.sha256 = row.at("sha256").get<std::string>();
            e.encoder_name = row.at("encoder").get<std::string>();
            e.layer_index = row.at("layer").get<int>();
            e.dim = row.at("dim").get<std::size_t>();
            e.count = row.at("count").get<std::size_t>();
            const auto dt = parse_dtype(row.at("dtype").get<std::string>());
            if (!dt) fail(ErrorCode::kParse, "manifest entry " + std::to_string(i) + ": unknown dtype");
            e.dtype = *dt;
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::kParse, std::string("manifest: ") + e.what());
    }
    return m;
}

Manifest load_manifest(const std::filesystem::path& path) { return parse_manifest(read_text_file(path)); }

std::string serialize_manifest(const Manifest& m) {
    json entries = json::array();
    for (const auto& e : m.entries) {
        entries.push_back({{"language", e.language.str()},
                           {"path", e.path},
                           {"sha256", e.sha256},
                           {"encoder", e.encoder_name},
                           {"layer", e.layer_index},
                           {"dim", e.dim},
                           {"count", e.count},
                           {"dtype", dtype_name(e.dtype)}});
    }
    return json{{"experiment_tag", m.experiment_tag}, {"entries", entries}}.dump(2) + "\n";
}

std::string ManifestReport::to_json() const {
    json entries_json = json::array();
    for (const auto& e : entries) {
        entries_json.push_back({{"language", e.language.str()},
                                {"path", e.path},
                                {"readable", e.readable},
                                {"hash_ok", e.hash_ok},
                                {"header_ok", e.header_ok},
                                {"detail", e.detail}});
    }
    json missing = json::array();
    for (const auto& l : missing_languages) missing.push_back(l.str());
    return json{{"ok", ok()},
                {"consistent_headers", consistent_headers},
                {"entries", entries_json},
                {"missing_languages", missing},
                {"findings", findings}}
        .dump(2);
}

ManifestReport validate_manifest(const Manifest& manifest, const std::filesystem::path& base_dir,
                                 const ProbingTaskSpec* task) {
    ManifestReport report;
    std::set<LanguageId> seen;
    for (const auto& e : manifest.entries) {
        ManifestEntryCheck check;
        check.language = e.language;
        check.path = e.path;
        if (!seen.insert(e.language).second) {
            report.findings.push_back("duplicate entry for language " + e.language.str());
        }
        const auto path = base_dir / e.path;
        try {
            const auto bytes = read_binary_file(path);
            const auto digest = sha256_hex(bytes);
            check.hash_ok = digest == e.sha256;
            if (!check.hash_ok) {
                report.findings.push_back("hash mismatch for " + e.language.str() + " (" + e.path + "): manifest " +
                                          e.sha256 + ", file " + digest);
            }
            const auto m = decode_embeddings(std::string_view(bytes));
            check.readable = true;
            const auto& h = m.header();
            check.header_ok = h.language == e.language && h.encoder_name == e.encoder_name &&
                              h.layer_index == e.layer_index && h.dim == e.dim && h.count == e.count &&
                              h.dtype == e.dtype;
            if (!check.header_ok) {
                report.findings.push_back("header of " + e.path + " disagrees with its manifest entry");
            }
        } catch (const Error& err) {
            check.detail = err.what();
            report.findings.push_back(e.language.str() + " (" + e.path + "): " + err.what());
        }
        report.entries.push_back(std::move(check));
    }
    if (!manifest.entries.empty()) {
        const auto& first = manifest.entries.front();
        for (const auto& e : manifest.entries) {
            if (e.encoder_name != first.encoder_name || e.layer_index != first.layer_index || e.dim != first.dim ||
                e.dtype != first.dtype) {
                report.consistent_headers = false;
                report.findings.push_back("entry " + e.language.str() + " (encoder " + e.encoder_name + ", layer " +
                                          std::to_string(e.layer_index) + ", dim " + std::to_string(e.dim) + ", " +
                                          dtype_name(e.dtype) + ") is inconsistent with " + first.language.str() +
                                          " (encoder " + first.encoder_name + ", layer " +
                                          std::to_string(first.layer_index) + ", dim " + std::to_string(first.dim) +
                                          ", " + dtype_name(first.dtype) + ")");
            }
        }
    } else {
        report.findings.push_back("manifest has no entries");
    }
    if (task) {
        for (const auto& [lang, value] : task->language_labels) {
            if (!manifest.find(lang)) {
                report.missing_languages.push_back(lang);
                report.findings.push_back("no entry for language " + lang.str() + " of task " + task->feature.code);
            }
        }
    }
    return report;
}

}  // namespace typoprobe
