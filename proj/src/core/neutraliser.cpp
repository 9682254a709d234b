#include "neutraliser.hpp"

#include <charconv>
#include <cmath>

#include "error.hpp"

namespace typoprobe {

std::string neutralised_provenance(const LanguageId& centroid_language) {
    return "neutralised:" + centroid_language.str();
}

LanguageCentroid compute_centroid(const EmbeddingMatrix& m, std::size_t begin, std::size_t end) {
    if (m.rows() == 0 || m.dim() == 0) fail(ErrorCode::kInvalidArgument, "cannot take the centroid of an empty matrix");
    if (begin >= end || end > m.rows()) {
        fail(ErrorCode::kInvalidArgument, "centroid row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                              ") is empty or out of bounds");
    }
    std::vector<double> sum(m.dim(), 0.0);
    for (std::size_t i = begin; i < end; ++i) {
        const auto r = m.row(i);
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += r[j];
    }
    const double n = static_cast<double>(end - begin);
    for (double& v : sum) v /= n;
    return LanguageCentroid{m.language(), std::move(sum), end - begin, m.header()};
}

LanguageCentroid compute_centroid(const EmbeddingMatrix& m) { return compute_centroid(m, 0, m.rows()); }

EmbeddingMatrix cross_neutralise(const EmbeddingMatrix& m, const LanguageCentroid& c) {
    if (c.vector.size() != m.dim()) {
        fail(ErrorCode::kDimensionMismatch, "centroid of " + c.language.str() + " has dim " +
                                                std::to_string(c.vector.size()) + ", matrix of " + m.language().str() +
                                                " has dim " + std::to_string(m.dim()));
    }
    std::vector<double> out(m.values().size());
    const std::size_t d = m.dim();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        double* o = out.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) o[j] = r[j] - c.vector[j];
    }
    auto header = m.header();
    header.provenance = neutralised_provenance(c.language);
    return EmbeddingMatrix(std::move(header), std::move(out));
}

EmbeddingMatrix self_neutralise(const EmbeddingMatrix& m) { return cross_neutralise(m, compute_centroid(m)); }

EmbeddingMatrix centroid_to_matrix(const LanguageCentroid& c) {
    EmbeddingSetHeader h;
    h.language = c.language;
    h.encoder_name = c.provenance.encoder_name;
    h.layer_index = c.provenance.layer_index;
    h.dim = c.vector.size();
    h.count = 1;
    h.dtype = DType::kF64;
    h.provenance = "centroid:n=" + std::to_string(c.source_count);
    return EmbeddingMatrix(std::move(h), c.vector);
}

LanguageCentroid centroid_from_matrix(const EmbeddingMatrix& m) {
    if (m.rows() != 1) fail(ErrorCode::kFormat, "a stored centroid must have exactly one row");
    LanguageCentroid c{m.language(), m.values(), 0, m.header()};
    const auto& p = m.header().provenance;
    if (p.rfind("centroid:n=", 0) == 0) {
        std::from_chars(p.data() + 11, p.data() + p.size(), c.source_count);
    }
    return c;
}

}  // namespace typoprobe
