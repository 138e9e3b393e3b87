#include "csl/evaluation.hpp"

#include "csl/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <sstream>
#include <thread>
#include <tuple>
#include <variant>

namespace csl {

const char* version() {
#ifdef CSL_VERSION
    return CSL_VERSION;
#else
    return "0.0.0";
#endif
}

namespace {

template <typename Fn>
void parallel_for(int jobs, std::size_t count, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                fn(i);
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
}

void check_compatible(const LabeledDataset& a, const LabeledDataset& b, const std::string& concept_name,
                      const char* a_name, const char* b_name) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorKind::Protocol, std::string(a_name) + " and " + b_name +
                                             " have different feature dimensions");
    }
    if (!a.has_concept(concept_name) || !b.has_concept(concept_name)) {
        throw Error(ErrorKind::Protocol, "concept '" + concept_name + "' missing from " +
                                             (a.has_concept(concept_name) ? b_name : a_name));
    }
    if (a.get_concept(concept_name).class_names != b.get_concept(concept_name).class_names) {
        throw Error(ErrorKind::Protocol, "concept '" + concept_name + "' has different class sets in " +
                                             a_name + " and " + b_name);
    }
}

double percent(double fraction) { return 100.0 * fraction; }

struct ProbeOutcome {
    double accuracy = 0.0;
    Probe probe;
};

ProbeOutcome probe_accuracy(const Matrix& train_x, const Concept& train, const Matrix& test_x,
                            const Concept& test, const TrainConfig& config) {
    ProbeOutcome out;
    out.probe = train_probe(train_x, train.labels, train.num_classes(), config);
    out.accuracy = accuracy(out.probe, test_x, test.labels);
    return out;
}

ProbeSummary summarize(const char* role, const Probe& probe, bool keep_weights) {
    ProbeSummary s;
    s.role = role;
    s.final_loss = probe.final_loss;
    s.grad_norm = probe.grad_norm;
    s.iterations = probe.iterations;
    s.stop = probe.stop;
    if (keep_weights) {
        s.weights = probe.weights;
        s.bias = probe.bias;
    }
    return s;
}

std::vector<std::string> absent_class_flags(const LabeledDataset& probe_train,
                                            const LabeledDataset& test, const std::string& concept_name) {
    const Concept& tr = probe_train.get_concept(concept_name);
    const Concept& te = test.get_concept(concept_name);
    std::vector<bool> in_train(tr.num_classes(), false);
    std::vector<bool> in_test(te.num_classes(), false);
    for (Label y : tr.labels) {
        in_train[y] = true;
    }
    for (Label y : te.labels) {
        in_test[y] = true;
    }
    std::vector<std::string> flags;
    for (std::size_t k = 0; k < in_train.size(); ++k) {
        if (in_train[k] && !in_test[k]) {
            flags.push_back("class '" + tr.class_names[k] + "' of '" + concept_name +
                            "' in probe-train but absent from test");
        }
    }
    return flags;
}

void bound_flags(MetricReport& r) {
    constexpr double kSlack = 2.0;
    const auto& b = r.bounds;
    const auto& m = r.metrics;
    if (m.retention > b.ambient_acc + kSlack) {
        r.flags.push_back("retention exceeds ambient accuracy by more than 2pt");
    }
    if (m.leakage > b.ambient_acc + kSlack) {
        r.flags.push_back("leakage exceeds ambient accuracy by more than 2pt");
    }
    if (m.retention < b.majority - kSlack) {
        r.flags.push_back("retention below majority baseline by more than 2pt");
    }
    if (m.leakage < b.majority - kSlack) {
        r.flags.push_back("leakage below majority baseline by more than 2pt");
    }
}

}  // namespace

SplitSet overfit_splits(const LabeledDataset& ds) {
    return SplitSet{ds, ds, ds, "overfit: space-train = probe-train = test", false};
}

SplitSet make_splits(const LabeledDataset& ds, const SplitSpec& spec) {
    SplitResult r = split(ds, spec);
    std::ostringstream prov;
    prov << "mode=" << to_string(spec.mode) << " seed=" << spec.seed << " fractions="
         << spec.fractions.space_train << "/" << spec.fractions.probe_train << "/"
         << spec.fractions.test;
    if (!spec.concept_name.empty()) {
        prov << " concept=" << spec.concept_name;
    }
    prov << " sizes=" << r.indices.space_train.size() << "/" << r.indices.probe_train.size() << "/"
         << r.indices.test.size();
    return SplitSet{std::move(r.space_train), std::move(r.probe_train), std::move(r.test), prov.str(),
                    spec.mode == SplitMode::DisjointLabel};
}

Containment containment(const ConceptSubspace& s, const LabeledDataset& probe_train,
                        const LabeledDataset& test, const std::string& concept_name,
                        const TrainConfig& config) {
    check_compatible(probe_train, test, concept_name, "probe-train", "test");
    const Concept& tr = probe_train.get_concept(concept_name);
    const Concept& te = test.get_concept(concept_name);
    Containment out;
    out.retention = percent(probe_accuracy(project_features(s, probe_train.features(), Side::Onto), tr,
                                           project_features(s, test.features(), Side::Onto), te, config)
                                .accuracy);
    out.leakage = percent(probe_accuracy(project_features(s, probe_train.features(), Side::Complement), tr,
                                         project_features(s, test.features(), Side::Complement), te, config)
                              .accuracy);
    return out;
}

Disentanglement disentanglement(const ConceptSubspace& s, const LabeledDataset& probe_train,
                                const LabeledDataset& test, const std::string& other_concept,
                                const TrainConfig& config) {
    check_compatible(probe_train, test, other_concept, "probe-train", "test");
    const Concept& tr = probe_train.get_concept(other_concept);
    const Concept& te = test.get_concept(other_concept);
    Disentanglement out;
    out.purity = 100.0 - percent(probe_accuracy(project_features(s, probe_train.features(), Side::Onto), tr,
                                                project_features(s, test.features(), Side::Onto), te, config)
                                     .accuracy);
    out.interference =
        100.0 - percent(probe_accuracy(project_features(s, probe_train.features(), Side::Complement), tr,
                                       project_features(s, test.features(), Side::Complement), te, config)
                            .accuracy);
    return out;
}

Bounds compute_bounds(const LabeledDataset& probe_train, const LabeledDataset& test,
                      const std::string& concept_name, const std::string& other_concept,
                      const TrainConfig& config) {
    check_compatible(probe_train, test, concept_name, "probe-train", "test");
    check_compatible(probe_train, test, other_concept, "probe-train", "test");
    const Concept& y_tr = probe_train.get_concept(concept_name);
    const Concept& y_te = test.get_concept(concept_name);
    const Concept& o_tr = probe_train.get_concept(other_concept);
    const Concept& o_te = test.get_concept(other_concept);
    Bounds b;
    b.ambient_acc = percent(probe_accuracy(probe_train.features(), y_tr, test.features(), y_te, config).accuracy);
    b.majority = percent(majority_baseline(y_te.labels));
    b.ambient_err_other =
        100.0 - percent(probe_accuracy(probe_train.features(), o_tr, test.features(), o_te, config).accuracy);
    b.majority_err_other = 100.0 - percent(majority_baseline(o_te.labels));
    return b;
}

MetricReport evaluate_subspace(const ConceptSubspace& s, const LabeledDataset& probe_train,
                               const LabeledDataset& test, const ConceptPair& pair,
                               const Bounds& bounds, const TrainConfig& config,
                               bool keep_probe_weights) {
    check_compatible(probe_train, test, pair.concept_name, "probe-train", "test");
    check_compatible(probe_train, test, pair.other, "probe-train", "test");
    if (s.dim() != probe_train.dim()) {
        throw Error(ErrorKind::Dimension, "subspace dimension " + std::to_string(s.dim()) +
                                              " does not match features " +
                                              std::to_string(probe_train.dim()));
    }
    const Matrix train_onto = project_features(s, probe_train.features(), Side::Onto);
    const Matrix train_off = project_features(s, probe_train.features(), Side::Complement);
    const Matrix test_onto = project_features(s, test.features(), Side::Onto);
    const Matrix test_off = project_features(s, test.features(), Side::Complement);
    const Concept& y_tr = probe_train.get_concept(pair.concept_name);
    const Concept& y_te = test.get_concept(pair.concept_name);
    const Concept& o_tr = probe_train.get_concept(pair.other);
    const Concept& o_te = test.get_concept(pair.other);

    const ProbeOutcome ret = probe_accuracy(train_onto, y_tr, test_onto, y_te, config);
    const ProbeOutcome leak = probe_accuracy(train_off, y_tr, test_off, y_te, config);
    const ProbeOutcome pur = probe_accuracy(train_onto, o_tr, test_onto, o_te, config);
    const ProbeOutcome inter = probe_accuracy(train_off, o_tr, test_off, o_te, config);

    MetricReport r;
    r.concept_name = pair.concept_name;
    r.other_concept = pair.other;
    r.estimator = s.estimator;
    r.requested_dim = s.requested_dim;
    r.rank = s.rank();
    r.oblique = s.projector.oblique();
    if (s.seed) {
        r.seeds.push_back(*s.seed);
    }
    r.metrics = {percent(ret.accuracy), percent(leak.accuracy), 100.0 - percent(pur.accuracy),
                 100.0 - percent(inter.accuracy)};
    r.bounds = bounds;
    r.probe_config = config;
    r.probes = {summarize("retention", ret.probe, keep_probe_weights),
                summarize("leakage", leak.probe, keep_probe_weights),
                summarize("purity", pur.probe, keep_probe_weights),
                summarize("interference", inter.probe, keep_probe_weights)};
    for (const auto* name : {&pair.concept_name, &pair.other}) {
        for (auto& f : absent_class_flags(probe_train, test, *name)) {
            r.flags.push_back(std::move(f));
        }
    }
    for (const auto& note : s.fit_stats.notes) {
        if (note.rfind("near-degenerate", 0) == 0 || note.rfind("requested dim", 0) == 0) {
            r.flags.push_back(note);
        }
    }
    bound_flags(r);
    return r;
}

void ProtocolConfig::validate() const {
    probe.validate();
    if (estimators.empty()) {
        throw Error(ErrorKind::Configuration, "no estimators selected");
    }
    if (pairs.empty()) {
        throw Error(ErrorKind::Configuration, "no concept pairs selected");
    }
    for (const auto& p : pairs) {
        if (p.concept_name.empty() || p.other.empty()) {
            throw Error(ErrorKind::Configuration, "concept pair names must not be empty");
        }
        if (p.concept_name == p.other) {
            throw Error(ErrorKind::Configuration, "concept pair '" + p.concept_name + "' names the same concept twice");
        }
    }
    if (seeds.empty()) {
        throw Error(ErrorKind::Configuration, "at least one seed is required");
    }
    for (Eigen::Index d : dims) {
        if (d < 0) {
            throw Error(ErrorKind::Configuration, "subspace dimensions must be >= 0");
        }
    }
    if (jobs < 1) {
        throw Error(ErrorKind::Configuration, "jobs must be >= 1");
    }
}

namespace {

struct Failure {
    std::string kind;
    std::string message;
};

Failure capture(const std::exception_ptr& eptr) {
    try {
        std::rethrow_exception(eptr);
    } catch (const Error& e) {
        return {to_string(e.kind()), e.what()};
    } catch (const std::exception& e) {
        return {"internal", e.what()};
    }
    return {"internal", "unknown error"};
}

template <typename T>
using Outcome = std::variant<T, Failure>;

}  // namespace

std::vector<MetricReport> run_protocol(const SplitSet& splits, const ProtocolConfig& config) {
    config.validate();
    std::vector<std::optional<Eigen::Index>> dims;
    if (config.dims.empty()) {
        dims.emplace_back();
    } else {
        dims.assign(config.dims.begin(), config.dims.end());
    }
    const bool allow_missing = config.allow_missing_classes || splits.disjoint_label;

    // bounds, one per pair
    std::vector<Outcome<Bounds>> bounds(config.pairs.size(), Failure{});
    parallel_for(config.jobs, config.pairs.size(), [&](std::size_t i) {
        try {
            const auto& p = config.pairs[i];
            check_compatible(splits.space_train, splits.probe_train, p.concept_name, "space-train", "probe-train");
            bounds[i] = compute_bounds(splits.probe_train, splits.test, p.concept_name, p.other, config.probe);
        } catch (...) {
            bounds[i] = capture(std::current_exception());
        }
    });

    // subspaces, one per (estimator, concept, dim, seed)
    using FitKey = std::tuple<EstimatorKind, std::string, std::optional<Eigen::Index>, std::uint64_t>;
    std::map<FitKey, std::size_t> fit_index;
    std::vector<FitKey> fit_keys;
    for (EstimatorKind kind : config.estimators) {
        for (const auto& p : config.pairs) {
            for (const auto& d : dims) {
                const std::size_t n_seeds = kind == EstimatorKind::Rand ? config.seeds.size() : 1;
                for (std::size_t k = 0; k < n_seeds; ++k) {
                    FitKey key{kind, p.concept_name, d, config.seeds[k]};
                    if (fit_index.emplace(key, fit_keys.size()).second) {
                        fit_keys.push_back(key);
                    }
                }
            }
        }
    }
    std::vector<Outcome<ConceptSubspace>> fits(fit_keys.size(), Failure{});
    parallel_for(config.jobs, fit_keys.size(), [&](std::size_t i) {
        try {
            const auto& [kind, concept_name, dim, seed] = fit_keys[i];
            EstimatorConfig ec;
            ec.probe = config.probe;
            ec.tol = config.tol;
            ec.dim = dim;
            ec.seed = seed;
            ec.allow_missing_classes = allow_missing;
            fits[i] = estimate(kind, splits.space_train, concept_name, ec);
        } catch (...) {
            fits[i] = capture(std::current_exception());
        }
    });

    struct Slot {
        EstimatorKind kind;
        std::size_t pair;
        std::optional<Eigen::Index> dim;
    };
    std::vector<Slot> slots;
    for (EstimatorKind kind : config.estimators) {
        for (std::size_t p = 0; p < config.pairs.size(); ++p) {
            for (const auto& d : dims) {
                slots.push_back({kind, p, d});
            }
        }
    }
    std::vector<MetricReport> reports(slots.size());
    parallel_for(config.jobs, slots.size(), [&](std::size_t i) {
        const Slot& slot = slots[i];
        const ConceptPair& pair = config.pairs[slot.pair];
        MetricReport& out = reports[i];
        out.concept_name = pair.concept_name;
        out.other_concept = pair.other;
        out.estimator = slot.kind;
        out.requested_dim = slot.dim;
        out.split_provenance = splits.provenance;
        out.probe_config = config.probe;
        auto fail = [&](const Failure& f) {
            out.error = f.message;
            out.error_kind = f.kind;
        };
        if (const auto* f = std::get_if<Failure>(&bounds[slot.pair])) {
            fail(*f);
            return;
        }
        const Bounds& b = std::get<Bounds>(bounds[slot.pair]);
        out.bounds = b;
        const std::size_t n_seeds = slot.kind == EstimatorKind::Rand ? config.seeds.size() : 1;
        std::vector<MetricReport> runs;
        for (std::size_t k = 0; k < n_seeds; ++k) {
            const FitKey key{slot.kind, pair.concept_name, slot.dim, config.seeds[k]};
            const auto& fit = fits[fit_index.at(key)];
            if (const auto* f = std::get_if<Failure>(&fit)) {
                fail(*f);
                return;
            }
            try {
                runs.push_back(evaluate_subspace(std::get<ConceptSubspace>(fit), splits.probe_train,
                                                 splits.test, pair, b, config.probe,
                                                 config.keep_probe_weights));
            } catch (...) {
                fail(capture(std::current_exception()));
                return;
            }
        }
        out = std::move(runs.front());
        out.split_provenance = splits.provenance;
        if (slot.kind != EstimatorKind::Rand) {
            out.seeds = {config.seeds.front()};
            return;
        }
        out.seeds = config.seeds;
        if (runs.size() > 1) {
            Metrics mean;
            for (const auto& r : runs) {
                out.per_seed.push_back(r.metrics);
                mean.retention += r.metrics.retention;
                mean.leakage += r.metrics.leakage;
                mean.purity += r.metrics.purity;
                mean.interference += r.metrics.interference;
            }
            const auto n = static_cast<double>(runs.size());
            out.metrics = {mean.retention / n, mean.leakage / n, mean.purity / n, mean.interference / n};
            out.flags.clear();
            for (const auto& r : runs) {
                for (const auto& f : r.flags) {
                    if (std::find(out.flags.begin(), out.flags.end(), f) == out.flags.end()) {
                        out.flags.push_back(f);
                    }
                }
            }
        }
    });
    return reports;
}

std::vector<MetricReport> run_protocol(const LabeledDataset& ds, const SplitSpec& spec,
                                       const ProtocolConfig& config) {
    return run_protocol(make_splits(ds, spec), config);
}

std::vector<MetricReport> sweep_dimension(const SplitSet& splits, const ConceptPair& pair,
                                          const std::vector<Eigen::Index>& dims,
                                          const ProtocolConfig& config, EstimatorKind estimator) {
    if (dims.empty()) {
        throw Error(ErrorKind::Configuration, "dimension sweep needs at least one dimension");
    }
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] > splits.space_train.dim()) {
            throw Error(ErrorKind::Dimension, "sweep dimension " + std::to_string(dims[i]) +
                                                  " exceeds ambient dimension " +
                                                  std::to_string(splits.space_train.dim()));
        }
        if (i > 0 && dims[i] <= dims[i - 1]) {
            throw Error(ErrorKind::Configuration, "sweep dimensions must be strictly ascending");
        }
    }
    ProtocolConfig cfg = config;
    cfg.estimators = {estimator};
    cfg.pairs = {pair};
    cfg.dims = dims;
    return run_protocol(splits, cfg);
}

}  // namespace csl
