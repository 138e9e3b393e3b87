#pragma once

#include "csl/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csl {

enum class EstimatorKind { Mlr, Lda, Cpca, Cov, Leace, Rand };

inline constexpr EstimatorKind kAllEstimators[] = {
    EstimatorKind::Mlr, EstimatorKind::Lda, EstimatorKind::Cpca,
    EstimatorKind::Cov, EstimatorKind::Leace, EstimatorKind::Rand,
};

/// "MLR", "LDA", ...
const char* to_string(EstimatorKind kind);
/// Case-insensitive inverse of to_string; throws Configuration.
EstimatorKind parse_estimator(const std::string& text);

/// Diagnostics recorded while fitting a subspace.
struct FitStats {
    std::map<std::string, double> scalars;
    std::vector<double> singular_values;
    std::vector<std::string> notes;
};

/// A fitted concept subspace: the projector plus how it was obtained.
struct ConceptSubspace {
    Projector projector = Projector::zero(0);
    EstimatorKind estimator = EstimatorKind::Rand;
    std::string concept_name;
    std::optional<Eigen::Index> requested_dim;
    std::optional<std::uint64_t> seed;
    FitStats fit_stats;
    std::string provenance;

    Eigen::Index dim() const { return projector.dim(); }
    Eigen::Index rank() const { return projector.rank(); }
};

/// Serialize as a ".csub" artifact: magic "CSUB", u16 version, u32 JSON
/// header length, JSON header, then P as D*D little-endian float64 row-major.
std::string encode_subspace(const ConceptSubspace& s);
ConceptSubspace decode_subspace(const std::string& bytes);
void save_subspace(const ConceptSubspace& s, const std::filesystem::path& path);
ConceptSubspace load_subspace(const std::filesystem::path& path);

}  // namespace csl
