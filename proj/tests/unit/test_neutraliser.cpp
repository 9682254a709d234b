#include "support.hpp"

#include <cmath>

#include "neutraliser.hpp"

using namespace typoprobe;
using testutil::error_code_of;
using testutil::make_matrix;
using testutil::random_matrix;

namespace {

double max_abs_column_mean(const EmbeddingMatrix& m) {
    double worst = 0.0;
    for (std::size_t j = 0; j < m.dim(); ++j) {
        long double s = 0;
        for (std::size_t i = 0; i < m.rows(); ++i) s += m.row(i)[j];
        worst = std::max(worst, static_cast<double>(std::fabs(s / m.rows())));
    }
    return worst;
}

double max_abs_diff(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) worst = std::max(worst, std::fabs(a.values()[i] - b.values()[i]));
    return worst;
}

}  // namespace

TEST_CASE("centroid of a 2x2 matrix") {
    const auto m = make_matrix("es", 2, 2, {1, 2, 3, 6});
    const auto c = compute_centroid(m);
    CHECK(c.vector == std::vector<double>{2, 4});
    CHECK(c.source_count == 2);
    CHECK(c.language.str() == "es");
    const auto v = self_neutralise(m);
    CHECK(v.values() == std::vector<double>{-1, -2, 1, 2});
    CHECK(v.header().provenance == "neutralised:es");
}

TEST_CASE("centroid concentrates around the planted offset") {
    const std::size_t n = 10000;
    const std::size_t dim = 16;
    const double sigma = 0.5;
    Rng rng(2024);
    std::vector<double> offset(dim);
    for (auto& o : offset) o = rng.uniform(-3, 3);
    std::vector<double> values(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) values[i * dim + j] = offset[j] + sigma * rng.normal();
    }
    const auto c = compute_centroid(make_matrix("sv", n, dim, std::move(values)));
    for (std::size_t j = 0; j < dim; ++j) CHECK(std::fabs(c.vector[j] - offset[j]) < 4 * sigma / std::sqrt(double(n)));
}

TEST_CASE("self-neutralised columns have zero mean") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        const auto m64 = random_matrix(rng, "pl", 3 + rng.below(200), 1 + rng.below(40), DType::kF64, 5.0, 100.0);
        CHECK(max_abs_column_mean(self_neutralise(m64)) < 1e-9);
        const auto m32 = random_matrix(rng, "pl", 3 + rng.below(200), 1 + rng.below(40), DType::kF32, 5.0, 100.0);
        CHECK(max_abs_column_mean(self_neutralise(m32)) < 1e-3);
    }
}

TEST_CASE("neutralisation is idempotent, shift-invariant and scales linearly") {
    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
        const std::size_t rows = 2 + rng.below(50);
        const std::size_t dim = 1 + rng.below(20);
        const auto m = random_matrix(rng, "bg", rows, dim);
        const auto v = self_neutralise(m);
        CHECK(max_abs_diff(self_neutralise(v), v) < 1e-9);

        std::vector<double> shifted = m.values();
        std::vector<double> shift(dim);
        for (auto& s : shift) s = rng.uniform(-10, 10);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < dim; ++j) shifted[r * dim + j] += shift[j];
        }
        CHECK(max_abs_diff(self_neutralise(make_matrix("bg", rows, dim, shifted)), v) < 1e-9);

        const double a = rng.uniform(-3, 3);
        std::vector<double> scaled = m.values();
        for (auto& x : scaled) x *= a;
        const auto sv = self_neutralise(make_matrix("bg", rows, dim, scaled));
        double worst = 0;
        for (std::size_t k = 0; k < scaled.size(); ++k) worst = std::max(worst, std::fabs(sv.values()[k] - a * v.values()[k]));
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("cross-neutralising with the own centroid equals self-neutralising") {
    Rng rng(9);
    const auto m = random_matrix(rng, "fr", 40, 12, DType::kF32);
    const auto self = self_neutralise(m);
    const auto cross = cross_neutralise(m, compute_centroid(m));
    CHECK(self.values() == cross.values());
    CHECK(self.header() == cross.header());
}

TEST_CASE("cross-neutralising subtracts the other language's centroid") {
    const auto x = make_matrix("es", 2, 2, {0, 0, 2, 4});
    const auto y = make_matrix("pt", 1, 2, {5, 5});
    const auto v = cross_neutralise(y, compute_centroid(x));
    CHECK(v.values() == std::vector<double>{4, 3});
    CHECK(v.language().str() == "pt");
    CHECK(v.header().provenance == "neutralised:es");
}

TEST_CASE("errors") {
    const auto a = make_matrix("es", 2, 2, {1, 2, 3, 4});
    const auto b = make_matrix("pt", 1, 3, {1, 2, 3});
    CHECK(error_code_of([&] { cross_neutralise(a, compute_centroid(b)); }) == ErrorCode::kDimensionMismatch);
    CHECK(error_code_of([&] { compute_centroid(a, 1, 1); }) == ErrorCode::kInvalidArgument);
    CHECK(error_code_of([&] { compute_centroid(a, 0, 3); }) == ErrorCode::kInvalidArgument);
    CHECK(error_code_of([] { compute_centroid(EmbeddingMatrix{}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("partial centroid") {
    const auto m = make_matrix("es", 4, 1, {1, 3, 10, 20});
    CHECK(compute_centroid(m, 0, 2).vector == std::vector<double>{2});
    CHECK(compute_centroid(m, 2, 4).source_count == 2);
}

TEST_CASE("stored centroid round-trip") {
    Rng rng(10);
    const auto m = random_matrix(rng, "mk", 30, 6, DType::kF32);
    const auto c = compute_centroid(m);
    const auto stored = centroid_to_matrix(c);
    CHECK(stored.rows() == 1);
    CHECK(stored.header().dtype == DType::kF64);
    CHECK(stored.header().provenance == "centroid:n=30");
    const auto back = centroid_from_matrix(stored);
    CHECK(back.vector == c.vector);
    CHECK(back.source_count == 30);
    CHECK(back.language.str() == "mk");
    CHECK(error_code_of([&] { centroid_from_matrix(m); }) == ErrorCode::kFormat);
}

TEST_CASE("identical rows neutralise to zero") {
    const auto m = make_matrix("hi", 3, 2, {1.5, -2, 1.5, -2, 1.5, -2});
    const auto v = self_neutralise(m);
    for (double x : v.values()) CHECK(x == 0.0);
}
