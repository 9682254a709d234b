#pragma once

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "embedding_store.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace testutil {

// Removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("typoprobe-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path data_dir() { return TYPOPROBE_DATA_DIR; }

inline typoprobe::EmbeddingMatrix make_matrix(const std::string& lang, std::size_t rows, std::size_t dim,
                                               std::vector<double> values,
                                               typoprobe::DType dtype = typoprobe::DType::kF64, int layer = 12) {
    typoprobe::EmbeddingSetHeader h;
    h.language = typoprobe::LanguageId(lang);
    h.encoder_name = "test-encoder";
    h.layer_index = layer;
    h.dim = dim;
    h.count = rows;
    h.dtype = dtype;
    return typoprobe::EmbeddingMatrix(h, std::move(values));
}

inline typoprobe::EmbeddingMatrix random_matrix(typoprobe::Rng& rng, const std::string& lang, std::size_t rows,
                                                 std::size_t dim, typoprobe::DType dtype = typoprobe::DType::kF64,
                                                 double scale = 1.0, double shift = 0.0) {
    std::vector<double> v(rows * dim);
    for (auto& x : v) x = shift + scale * rng.normal();
    return make_matrix(lang, rows, dim, std::move(v), dtype);
}

template <typename F>
typoprobe::ErrorCode error_code_of(F&& f) {
    try {
        f();
    } catch (const typoprobe::Error& e) {
        return e.code();
    }
    return typoprobe::ErrorCode::kOk;
}

template <typename F>
std::string error_message_of(F&& f) {
    try {
        f();
    } catch (const typoprobe::Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace testutil
