#pragma once

#include "csl/dataset.hpp"
#include "csl/estimators.hpp"
#include "csl/probing.hpp"
#include "csl/subspace.hpp"

#include <optional>
#include <string>
#include <vector>

namespace csl {

/// Reference points of the four metrics, all in percent:
///   retention    best = ambient_acc            worst = majority
///   leakage      best = majority               worst = ambient_acc
///   purity       best = majority_err_other     worst = ambient_err_other
///   interference best = ambient_err_other      worst = majority_err_other
struct Bounds {
    double ambient_acc = 0.0;
    double majority = 0.0;
    double ambient_err_other = 0.0;
    double majority_err_other = 0.0;
};

struct Metrics {
    double retention = 0.0;
    double leakage = 0.0;
    double purity = 0.0;
    double interference = 0.0;
};

struct ProbeSummary {
    std::string role;   // retention | leakage | purity | interference
    double final_loss = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    StopReason stop = StopReason::MaxIterations;
    std::optional<Matrix> weights;
    std::optional<Vector> bias;
};

struct MetricReport {
    std::string concept_name;
    std::string other_concept;
    EstimatorKind estimator = EstimatorKind::Rand;
    std::optional<Eigen::Index> requested_dim;
    Eigen::Index rank = 0;
    bool oblique = false;
    std::vector<std::uint64_t> seeds;
    Metrics metrics;                 // mean over seeds
    std::vector<Metrics> per_seed;   // filled when more than one seed ran
    Bounds bounds;
    std::string split_provenance;
    TrainConfig probe_config;
    std::vector<ProbeSummary> probes;
    std::vector<std::string> flags;
    std::optional<std::string> error;
    std::string error_kind;

    bool ok() const { return !error.has_value(); }
};

/// The three data roles.
struct SplitSet {
    LabeledDataset space_train;
    LabeledDataset probe_train;
    LabeledDataset test;
    std::string provenance;
    bool disjoint_label = false;
};

/// All three roles bound to the same dataset.
SplitSet overfit_splits(const LabeledDataset& ds);
SplitSet make_splits(const LabeledDataset& ds, const SplitSpec& spec);

struct ConceptPair {
    std::string concept_name;
    std::string other;
};

struct Containment {
    double retention = 0.0;
    double leakage = 0.0;
};

struct Disentanglement {
    double purity = 0.0;
    double interference = 0.0;
};

/// Accuracy (%) of concept probes trained on projected probe-train
/// features, scored on projected test features.
Containment containment(const ConceptSubspace& s, const LabeledDataset& probe_train,
                        const LabeledDataset& test, const std::string& concept_name,
                        const TrainConfig& config = {});

/// Error (%) of other-concept probes on the subspace and its complement.
Disentanglement disentanglement(const ConceptSubspace& s, const LabeledDataset& probe_train,
                                const LabeledDataset& test, const std::string& other_concept,
                                const TrainConfig& config = {});

Bounds compute_bounds(const LabeledDataset& probe_train, const LabeledDataset& test,
                      const std::string& concept_name, const std::string& other_concept,
                      const TrainConfig& config = {});

/// Four metrics of one fitted subspace (all probes share the projections).
MetricReport evaluate_subspace(const ConceptSubspace& s, const LabeledDataset& probe_train,
                               const LabeledDataset& test, const ConceptPair& pair,
                               const Bounds& bounds, const TrainConfig& config = {},
                               bool keep_probe_weights = false);

struct ProtocolConfig {
    std::vector<EstimatorKind> estimators{std::begin(kAllEstimators), std::end(kAllEstimators)};
    std::vector<ConceptPair> pairs;
    /// Empty: each estimator's natural dimensionality.
    std::vector<Eigen::Index> dims;
    /// RAND is averaged over every seed; other estimators use the first.
    std::vector<std::uint64_t> seeds{0};
    TrainConfig probe;
    Tolerances tol;
    int jobs = 1;
    bool keep_probe_weights = false;
    /// CPCA skips classes absent from space-train (implied by disjoint splits).
    bool allow_missing_classes = false;

    void validate() const;
};

/// Fit every (estimator, concept, dim) on space-train, probe on probe-train,
/// score on test. Reports come back in configuration order; failures are
/// recorded in the report and the batch continues.
std::vector<MetricReport> run_protocol(const SplitSet& splits, const ProtocolConfig& config);
std::vector<MetricReport> run_protocol(const LabeledDataset& ds, const SplitSpec& spec,
                                       const ProtocolConfig& config);

/// One report per requested dimension (ascending, each <= D).
std::vector<MetricReport> sweep_dimension(const SplitSet& splits, const ConceptPair& pair,
                                          const std::vector<Eigen::Index>& dims,
                                          const ProtocolConfig& config,
                                          EstimatorKind estimator = EstimatorKind::Leace);

// ---------------------------------------------------------------------------
// report files

/// JSON array, metrics rounded to one decimal. `run_config_json` must be a
/// JSON document; it is embedded verbatim in every report.
std::string reports_to_json(const std::vector<MetricReport>& reports,
                            const std::string& run_config_json = "{}");
/// One row per report.
std::string reports_to_csv(const std::vector<MetricReport>& reports,
                           const std::string& run_config_json = "{}");
/// Four-panel metric plot with dashed best/worst lines per concept pair.
std::string reports_to_svg(const std::vector<MetricReport>& reports,
                           const std::string& run_config_json = "{}");

/// Library version string.
const char* version();

}  // namespace csl
