#pragma once

// Language centroids and centroid subtraction.
//
// Notation: u = raw sentence representation, v = neutralised one. Self
// neutralisation subtracts a language's own centroid, v_i = u_i - mean(u);
// cross neutralisation subtracts the centroid of another language x from the
// rows of y.

#include <string>
#include <vector>

#include "embedding_store.hpp"

namespace typoprobe {

struct LanguageCentroid {
    LanguageId language;
    std::vector<double> vector;
    std::size_t source_count = 0;
    EmbeddingSetHeader provenance;  // header of the matrix the mean was taken over
};

// Mean over rows [begin, end), accumulated in double.
LanguageCentroid compute_centroid(const EmbeddingMatrix& matrix, std::size_t begin, std::size_t end);
LanguageCentroid compute_centroid(const EmbeddingMatrix& matrix);

EmbeddingMatrix cross_neutralise(const EmbeddingMatrix& matrix, const LanguageCentroid& centroid);
EmbeddingMatrix self_neutralise(const EmbeddingMatrix& matrix);

// Stored as a 1 x dim f64 embedding set.
EmbeddingMatrix centroid_to_matrix(const LanguageCentroid& centroid);
LanguageCentroid centroid_from_matrix(const EmbeddingMatrix& matrix);

std::string neutralised_provenance(const LanguageId& centroid_language);

}  // namespace typoprobe
