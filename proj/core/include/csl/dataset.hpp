#pragma once

#include "csl/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace csl {

using Label = std::uint32_t;
using Labels = std::vector<Label>;

/// One discrete labeling of every row.
struct Concept {
    std::string name;
    std::vector<std::string> class_names;   // size = class count
    Labels labels;                          // size = N, each < class count

    std::size_t num_classes() const { return class_names.size(); }
};

/// N x D features plus named concept labelings. Immutable by convention once
/// validated; every factory below returns a validated dataset.
class LabeledDataset {
public:
    LabeledDataset() = default;
    LabeledDataset(Matrix features, std::vector<Concept> concepts, std::string provenance = {});

    Eigen::Index rows() const { return features_.rows(); }
    Eigen::Index dim() const { return features_.cols(); }
    const Matrix& features() const { return features_; }
    const std::vector<Concept>& concepts() const { return concepts_; }
    const std::string& provenance() const { return provenance_; }

    bool has_concept(const std::string& name) const;
    /// Throws Lookup if the concept does not exist.
    const Concept& get_concept(const std::string& name) const;

    /// Rows at the given indices, in the given order.
    LabeledDataset subset(const std::vector<std::size_t>& rows, std::string provenance) const;

    /// Throws InputValidation describing the first violated invariant.
    void validate() const;

private:
    Matrix features_;
    std::vector<Concept> concepts_;
    std::string provenance_;
};

// ---------------------------------------------------------------------------
// container file ("CSLD")

inline constexpr char kContainerMagic[4] = {'C', 'S', 'L', 'D'};
inline constexpr std::uint16_t kContainerVersion = 1;

/// Serialize to the container byte layout. Features are stored as float32.
std::string encode_container(const LabeledDataset& ds);
/// Parse a container. Throws FormatError carrying the failing byte offset.
LabeledDataset decode_container(const std::string& bytes);

void save(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema {
    /// Feature column names; empty means every column not used as a label.
    std::vector<std::string> feature_columns;
    /// Label column names; each becomes a concept of the same name.
    std::vector<std::string> label_columns;
    std::string provenance;
};

/// Import UTF-8 CSV text with a header row. Class names are the distinct
/// label strings, ordered numerically when all are integers and
/// lexicographically otherwise.
LabeledDataset import_csv(const std::string& text, const CsvSchema& schema);
LabeledDataset import_csv_file(const std::filesystem::path& path, const CsvSchema& schema);

/// Features (shortest round-trip float32 text) followed by one class-name
/// column per concept.
std::string export_csv(const LabeledDataset& ds);

// ---------------------------------------------------------------------------
// one-hot

/// N x C indicator matrix. Throws InputValidation on labels >= C.
Matrix one_hot(const Labels& labels, std::size_t num_classes);

// ---------------------------------------------------------------------------
// splitting

enum class SplitMode { RandomStratified, DisjointLabel };

struct SplitFractions {
    double space_train = 0.5;
    double probe_train = 0.3;
    double test = 0.2;
};

struct SplitSpec {
    std::uint64_t seed = 0;
    SplitMode mode = SplitMode::RandomStratified;
    /// Stratification concept (stratified mode, empty = first concept) or
    /// the concept whose label groups are kept disjoint (disjoint mode).
    std::string concept_name;
    SplitFractions fractions;
    /// Identifiers of the files a pre-made split was read from, if any.
    std::vector<std::string> sources;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> space_train;
    std::vector<std::size_t> probe_train;
    std::vector<std::size_t> test;
    /// Disjoint mode: labels assigned wholly to space-train, ascending.
    std::vector<Label> space_labels;
    /// Disjoint mode: labels shared by probe-train and test, ascending.
    std::vector<Label> rest_labels;
};

struct SplitResult {
    LabeledDataset space_train;
    LabeledDataset probe_train;
    LabeledDataset test;
    SplitIndices indices;
};

/// Row indices of the three roles; sorted ascending within each role.
SplitIndices split_indices(const LabeledDataset& ds, const SplitSpec& spec);
SplitResult split(const LabeledDataset& ds, const SplitSpec& spec);

const char* to_string(SplitMode mode);
SplitMode parse_split_mode(const std::string& text);

// ---------------------------------------------------------------------------
// synthetic planted-subspace data

/// Gaussian: i.i.d. normal class-mean coordinates, centered across classes.
/// Simplex: equidistant class means (regular simplex, needs C <= K + 1) in a
/// random orientation, so every planted direction carries equal signal.
enum class MeanLayout { Gaussian, Simplex };

struct PlantedConcept {
    std::string name;
    std::size_t num_classes = 2;
    std::uint64_t basis_seed = 1;
    /// Standard deviation of class-mean coordinates inside the planted basis.
    double mean_scale = 1.0;
    /// Standard deviation of extra noise confined to the planted basis.
    double noise_scale = 0.0;
    MeanLayout layout = MeanLayout::Gaussian;
    /// Fraction of rows whose observed label is redrawn uniformly at random
    /// after the features were generated (keeps classes non-separable).
    double label_noise = 0.0;
    /// When set, this entry reuses the labels and class means of the named
    /// concept (redundant copy of the same signal) and adds no label column.
    std::optional<std::string> mirror_of;
};

enum class OverlapPolicy { Orthogonal, Shared, Random };

struct PlantedSpec {
    Eigen::Index dim = 16;
    Eigen::Index signal_dim = 2;
    std::vector<PlantedConcept> concepts;
    OverlapPolicy overlap = OverlapPolicy::Orthogonal;
    /// Shared policy: dimensions consecutive concepts have in common.
    Eigen::Index shared_dims = 0;
    /// Standard deviation of isotropic noise over all D dimensions.
    double ambient_noise = 1.0;
    /// Standard deviation of additional noise confined to the orthogonal
    /// complement of every planted basis (high-variance nuisance directions).
    double nuisance_noise = 0.0;

    void validate() const;
};

struct PlantedData {
    LabeledDataset dataset;
    /// One D x K orthonormal basis per PlantedSpec entry (mirrors included).
    std::vector<Matrix> bases;
    /// Class means per entry, C x K coordinates in the entry's basis.
    std::vector<Matrix> class_means;
};

PlantedData generate_planted(const PlantedSpec& spec, std::size_t n, std::uint64_t seed);

const char* to_string(OverlapPolicy policy);
const char* to_string(MeanLayout layout);

}  // namespace csl
