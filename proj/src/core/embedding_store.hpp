#pragma once

// Binary per-language embedding files and the manifest that indexes them.
//
// File layout, all integers little-endian:
//
//   offset  size  field
//   0       8     magic "TYPOEMB\0"
//   8       2     version (u16, currently 1)
//   10      1     dtype (u8: 0 = f32, 1 = f64)
//   11      1     reserved, must be 0
//   12      2     layer_index (u16, 0..24)
//   14      4     dim (u32, > 0)
//   18      8     count (u64, > 0)
//   26      ...   language, encoder_name, provenance: each a u16 byte length
//                 followed by UTF-8 bytes
//   ...           count * dim IEEE-754 values, row-major
//
// Nothing may follow the payload.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corpus_model.hpp"

namespace typoprobe {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

std::size_t dtype_size(DType d) noexcept;
const char* dtype_name(DType d) noexcept;

inline constexpr char kEmbeddingMagic[8] = {'T', 'Y', 'P', 'O', 'E', 'M', 'B', '\0'};
inline constexpr std::uint16_t kEmbeddingVersion = 1;
inline constexpr int kMaxLayerIndex = 24;

struct EmbeddingSetHeader {
    std::uint16_t version = kEmbeddingVersion;
    LanguageId language;
    std::string encoder_name;
    int layer_index = 0;
    std::size_t dim = 0;
    std::size_t count = 0;
    DType dtype = DType::kF32;
    // Empty for raw encoder output; "neutralised:<lang>" after centroid subtraction.
    std::string provenance;

    bool operator==(const EmbeddingSetHeader&) const = default;
};

// Row-major count x dim values. Values are kept in double; for f32 sets every
// stored value is exactly representable as a float.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(EmbeddingSetHeader header, std::vector<double> values);

    const EmbeddingSetHeader& header() const noexcept { return header_; }
    std::size_t rows() const noexcept { return header_.count; }
    std::size_t dim() const noexcept { return header_.dim; }
    const LanguageId& language() const noexcept { return header_.language; }

    std::span<const double> row(std::size_t i) const { return {values_.data() + i * header_.dim, header_.dim}; }
    const std::vector<double>& values() const noexcept { return values_; }

    void set_provenance(std::string p) { header_.provenance = std::move(p); }

private:
    EmbeddingSetHeader header_;
    std::vector<double> values_;
};

// Rounds through float for f32 so that in-memory values match what is written.
std::vector<double> quantize(std::vector<double> values, DType dtype);

std::string encode_embeddings(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_embeddings(std::span<const std::byte> bytes);
EmbeddingMatrix decode_embeddings(std::string_view bytes);

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
// Header only; the payload length is still checked against the file size.
EmbeddingSetHeader read_embedding_header(const std::filesystem::path& path);

struct ManifestEntry {
    LanguageId language;
    std::string path;  // relative to the manifest's directory
    std::string sha256;
    std::string encoder_name;
    int layer_index = 0;
    std::size_t dim = 0;
    std::size_t count = 0;
    DType dtype = DType::kF32;
};

struct Manifest {
    std::string experiment_tag;
    std::vector<ManifestEntry> entries;

    const ManifestEntry* find(const LanguageId& language) const;
};

ManifestEntry make_manifest_entry(const EmbeddingMatrix& matrix, const std::string& relative_path,
                                  const std::string& sha256);

Manifest parse_manifest(std::string_view text);
Manifest load_manifest(const std::filesystem::path& path);
std::string serialize_manifest(const Manifest& manifest);

struct ManifestEntryCheck {
    LanguageId language;
    std::string path;
    bool readable = false;
    bool hash_ok = false;
    bool header_ok = false;
    std::string detail;
};

struct ManifestReport {
    std::vector<ManifestEntryCheck> entries;
    bool consistent_headers = true;
    std::vector<LanguageId> missing_languages;  // wrt. the task, if one was supplied
    std::vector<std::string> findings;

    bool ok() const noexcept { return findings.empty(); }
    std::string to_json() const;
};

ManifestReport validate_manifest(const Manifest& manifest, const std::filesystem::path& base_dir,
                                 const ProbingTaskSpec* task = nullptr);

}  // namespace typoprobe
