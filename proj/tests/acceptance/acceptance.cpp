// Acceptance gate: one PASS/FAIL/SKIP line per criterion, non-zero exit on
// any FAIL.

#include "csl/dataset.hpp"
#include "csl/estimators.hpp"
#include "csl/evaluation.hpp"
#include "csl/probing.hpp"
#include "csl/rng.hpp"

#include "fixtures.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace csl;
using csl::testing::planted_concept;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
    Verdict verdict = Verdict::Fail;
    std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

ConceptSubspace fixed_subspace(Projector p, const std::string& concept_name) {
    ConceptSubspace s;
    s.projector = std::move(p);
    s.concept_name = concept_name;
    return s;
}

// ---------------------------------------------------------------------------

Outcome projector_algebra() {
    constexpr int kFits = 1000;
    double worst_idem = 0.0;
    double worst_sym = 0.0;
    int failures = 0;
    std::string first_failure;
    Xoshiro256 rng(2024, 1);
    for (int i = 0; i < kFits; ++i) {
        const EstimatorKind kind = kAllEstimators[i % 6];
        const auto dim = static_cast<Eigen::Index>(8 + rng.below(57));   // 8..64
        const auto classes = static_cast<std::size_t>(2 + rng.below(5));  // 2..6
        PlantedSpec spec;
        spec.dim = dim;
        spec.signal_dim = std::max<Eigen::Index>(1, std::min<Eigen::Index>(dim / 2, 4));
        spec.overlap = OverlapPolicy::Random;
        spec.concepts = {planted_concept("y", classes, 0.5 + 2.0 * rng.uniform(), rng())};
        const LabeledDataset ds = generate_planted(spec, 150 + rng.below(250), rng()).dataset;
        EstimatorConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(i);
        cfg.allow_missing_classes = true;
        try {
            const ConceptSubspace s = estimate(kind, ds, "y", cfg);
            const Matrix& p = s.projector.onto();
            const double idem = max_abs(p * p - p);
            worst_idem = std::max(worst_idem, idem);
            bool ok = idem <= 1e-6;
            if (kind != EstimatorKind::Leace) {
                const double sym = max_abs(p - p.transpose());
                worst_sym = std::max(worst_sym, sym);
                ok = ok && sym <= 1e-6;
            }
            if (!ok) {
                ++failures;
            }
        } catch (const std::exception& e) {
            if (failures++ == 0) {
                first_failure = std::string(to_string(kind)) + ": " + e.what();
            }
        }
    }
    return pass_if(failures == 0, fmt("%d fits, max|P^2-P|=%.2e, max|P-P^T| (non-LEACE)=%.2e, failures=%d%s", kFits,
                                      worst_idem, worst_sym, failures,
                                      first_failure.empty() ? "" : (" first: " + first_failure).c_str()));
}

Outcome leace_zero_leakage() {
    const std::size_t class_counts[] = {2, 5, 10};
    double worst_gap = -100.0;
    int failures = 0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t c = class_counts[i % 3];
        PlantedSpec spec;
        spec.dim = 32;
        spec.signal_dim = 6;
        spec.concepts = {planted_concept("y", c, 1.0 + 0.25 * i, 100 + i), planted_concept("z", 3, 1.5, 200 + i)};
        spec.overlap = i % 2 == 0 ? OverlapPolicy::Orthogonal : OverlapPolicy::Random;
        const LabeledDataset ds = generate_planted(spec, 5000, 300 + i).dataset;
        ProtocolConfig cfg;
        cfg.estimators = {EstimatorKind::Leace};
        cfg.pairs = {{"y", "z"}};
        const auto reports = run_protocol(overfit_splits(ds), cfg);
        const MetricReport& r = reports.at(0);
        if (!r.ok()) {
            ++failures;
            continue;
        }
        const double gap = r.metrics.leakage - r.bounds.majority;
        worst_gap = std::max(worst_gap, gap);
        if (gap > 0.5) {
            ++failures;
        }
    }
    return pass_if(failures == 0,
                   fmt("20 datasets N=5000 D=32 C in {2,5,10}: max(leakage - majority)=%.3fpt (limit 0.5), failures=%d",
                       worst_gap, failures));
}

Outcome boundary_identities() {
    double worst = 0.0;
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto data = csl::testing::two_concepts(16, 3, 4, 3, 1.5, 4000, 40 + seed);
        SplitSpec sp;
        sp.seed = seed;
        const SplitSet splits = make_splits(data.dataset, sp);
        const ConceptPair pair{"y", "z"};
        const TrainConfig probe;
        const Bounds b = compute_bounds(splits.probe_train, splits.test, "y", "z", probe);
        const auto full = evaluate_subspace(fixed_subspace(Projector::identity(16), "y"), splits.probe_train,
                                            splits.test, pair, b, probe);
        const auto none = evaluate_subspace(fixed_subspace(Projector::zero(16), "y"), splits.probe_train,
                                            splits.test, pair, b, probe);
        const double diffs[] = {
            full.metrics.retention - b.ambient_acc,          full.metrics.leakage - b.majority,
            full.metrics.purity - b.ambient_err_other,       full.metrics.interference - b.majority_err_other,
            none.metrics.retention - b.majority,             none.metrics.leakage - b.ambient_acc,
            none.metrics.purity - b.majority_err_other,      none.metrics.interference - b.ambient_err_other,
        };
        for (double d : diffs) {
            worst = std::max(worst, std::abs(d));
            if (std::abs(d) > 0.5) {
                ++failures;
            }
        }
    }
    return pass_if(failures == 0,
                   fmt("P=I and P=0 on 3 planted fixtures, 8 identities each: max deviation %.3fpt (limit 0.5)", worst));
}

Outcome planted_recovery() {
    // SNR 10: average per-coordinate variance of the class means over the
    // isotropic noise variance. Equidistant class means; nuisance variance
    // lives outside both planted subspaces.
    PlantedSpec spec;
    spec.dim = 64;
    spec.signal_dim = 4;
    spec.ambient_noise = 1.0;
    spec.nuisance_noise = 7.0;
    spec.concepts = {planted_concept("y", 5, std::sqrt(10.0), 8), planted_concept("z", 5, std::sqrt(10.0), 9)};
    for (auto& c : spec.concepts) {
        c.layout = MeanLayout::Simplex;
    }
    const auto data = generate_planted(spec, 50000, 7);
    SplitSpec sp;
    sp.seed = 7;
    ProtocolConfig cfg;
    cfg.pairs = {{"y", "z"}};
    cfg.seeds = {0, 1, 2, 3, 4};   // RAND is averaged over five subspaces
    const auto reports = run_protocol(make_splits(data.dataset, sp), cfg);
    std::ostringstream detail;
    bool ok = true;
    for (const auto& r : reports) {
        if (!r.ok()) {
            detail << to_string(r.estimator) << " error: " << *r.error << "; ";
            ok = false;
            continue;
        }
        const auto& m = r.metrics;
        const auto& b = r.bounds;
        bool row_ok = true;
        if (r.estimator == EstimatorKind::Rand) {
            row_ok = m.retention <= b.majority + 10.0;
        } else {
            row_ok = m.retention >= b.ambient_acc - 2.0 && m.leakage <= b.majority + 3.0 &&
                     m.purity >= b.majority_err_other - 3.0 && m.interference <= b.ambient_err_other + 2.0;
        }
        ok = ok && row_ok;
        detail << fmt("%s %.1f/%.1f/%.1f/%.1f%s; ", to_string(r.estimator), m.retention, m.leakage, m.purity,
                      m.interference, row_ok ? "" : " (out of bounds)");
    }
    const auto& b = reports.front().bounds;
    detail << fmt("bounds acc=%.1f maj=%.1f err'=%.1f majerr'=%.1f", b.ambient_acc, b.majority, b.ambient_err_other,
                  b.majority_err_other);
    return pass_if(ok, detail.str());
}

Outcome redundancy_divergence() {
    PlantedSpec spec;
    spec.dim = 24;
    spec.signal_dim = 4;
    PlantedConcept copy;
    copy.name = "y_copy";
    copy.mirror_of = "y";
    copy.basis_seed = 12;
    copy.noise_scale = 3.0;
    // Relabelling keeps y non-separable; separable data drive the probe towards
    // a max-margin direction that mixes both copies.
    auto y = planted_concept("y", 2, 3.0, 11);
    y.label_noise = 0.1;
    spec.concepts = {y, copy, planted_concept("z", 3, 1.5, 13)};
    const auto data = generate_planted(spec, 12000, 5);
    SplitSpec sp;
    sp.seed = 5;
    ProtocolConfig cfg;
    cfg.estimators = {EstimatorKind::Mlr, EstimatorKind::Leace};
    cfg.pairs = {{"y", "z"}};
    const auto reports = run_protocol(make_splits(data.dataset, sp), cfg);
    const auto& mlr = reports.at(0);
    const auto& leace = reports.at(1);
    if (!mlr.ok() || !leace.ok()) {
        return {Verdict::Fail, "estimator error: " + mlr.error.value_or("") + leace.error.value_or("")};
    }
    const auto& b = mlr.bounds;
    const bool ok = mlr.metrics.leakage >= b.ambient_acc - 5.0 && leace.metrics.leakage <= b.majority + 10.0;
    return pass_if(ok, fmt("ambient=%.1f majority=%.1f MLR leakage=%.1f (>= %.1f) LEACE leakage=%.1f (<= %.1f)",
                           b.ambient_acc, b.majority, mlr.metrics.leakage, b.ambient_acc - 5.0, leace.metrics.leakage,
                           b.majority + 10.0));
}

Outcome gradient_check() {
    double worst = 0.0;
    for (std::uint64_t point = 0; point < 10; ++point) {
        const Eigen::Index n = 40, d = 5;
        const std::size_t c = 3 + point % 3;
        const Matrix x = csl::testing::gaussian(n, d, 900 + point);
        Xoshiro256 rng(point, 77);
        Labels labels(static_cast<std::size_t>(n));
        for (auto& y : labels) {
            y = static_cast<Label>(rng.below(c));
        }
        const Matrix w = csl::testing::gaussian(static_cast<Eigen::Index>(c), d, 1900 + point) * 0.5;
        const Vector b = csl::testing::gaussian(static_cast<Eigen::Index>(c), 1, 2900 + point).col(0) * 0.5;
        const double ridge = 1e-2;
        const LossGradient g = probe_objective(x, labels, w, b, ridge);
        const double h = 1e-5;
        double num = 0.0, den = 0.0;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            Matrix wp = w, wm = w;
            wp.data()[i] += h;
            wm.data()[i] -= h;
            const double fd = (probe_objective(x, labels, wp, b, ridge).loss -
                               probe_objective(x, labels, wm, b, ridge).loss) / (2 * h);
            num = std::max(num, std::abs(fd - g.grad_weights.data()[i]));
            den = std::max(den, std::abs(fd));
        }
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            Vector bp = b, bm = b;
            bp[i] += h;
            bm[i] -= h;
            const double fd = (probe_objective(x, labels, w, bp, ridge).loss -
                               probe_objective(x, labels, w, bm, ridge).loss) / (2 * h);
            num = std::max(num, std::abs(fd - g.grad_bias[i]));
            den = std::max(den, std::abs(fd));
        }
        worst = std::max(worst, num / den);
    }
    return pass_if(worst <= 1e-6, fmt("10 random points: max relative deviation %.2e (limit 1e-6)", worst));
}

// Naive dense LEACE: two-pass covariance, SVD-based inverse square root.
Matrix naive_leace(const Matrix& x, const Labels& labels, std::size_t classes) {
    const auto n = static_cast<double>(x.rows());
    Matrix z = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(classes));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        z(i, labels[static_cast<std::size_t>(i)]) = 1.0;
    }
    const Vector mx = x.colwise().mean();
    const Vector mz = z.colwise().mean();
    const Matrix xc = x.rowwise() - mx.transpose();
    const Matrix zc = z.rowwise() - mz.transpose();
    const Matrix sxx = xc.transpose() * xc / n;
    const Matrix sxz = xc.transpose() * zc / n;
    Eigen::JacobiSVD<Matrix> svd(sxx, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector s = svd.singularValues();
    Vector inv = Vector::Zero(s.size()), root = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > 1e-10 * s[0]) {
            inv[i] = 1.0 / std::sqrt(s[i]);
            root[i] = std::sqrt(s[i]);
        }
    }
    const Matrix w = svd.matrixU() * inv.asDiagonal() * svd.matrixU().transpose();
    const Matrix w_pinv = svd.matrixU() * root.asDiagonal() * svd.matrixU().transpose();
    Eigen::JacobiSVD<Matrix> svd2(w * sxz, Eigen::ComputeFullU);
    const Vector s2 = svd2.singularValues();
    Eigen::Index k = 0;
    while (k < s2.size() && s2[k] > 1e-9 * s2[0]) {
        ++k;
    }
    const Matrix u = svd2.matrixU().leftCols(k);
    return w_pinv * u * u.transpose() * w;
}

Outcome leace_brute_force() {
    double worst = 0.0;
    Xoshiro256 rng(31337, 0);
    for (int t = 0; t < 30; ++t) {
        const auto d = static_cast<Eigen::Index>(2 + rng.below(7));     // 2..8
        const auto n = static_cast<Eigen::Index>(20 + rng.below(181));  // 20..200
        const auto c = static_cast<std::size_t>(2 + rng.below(4));
        Matrix x = csl::testing::gaussian(n, d, 5000 + static_cast<std::uint64_t>(t));
        // correlated, shifted features
        x = x * (Matrix::Identity(d, d) + 0.3 * csl::testing::gaussian(d, d, 6000 + static_cast<std::uint64_t>(t)));
        Labels labels(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            labels[static_cast<std::size_t>(i)] = static_cast<Label>(i % static_cast<Eigen::Index>(c));
            x.row(i).array() += 0.7 * static_cast<double>(labels[static_cast<std::size_t>(i)]) + 1.0;
        }
        // chunk size 7 exercises the streaming merge
        const MomentAccumulator m = accumulate_moments(x, labels, c, 7);
        const ConceptSubspace s = leace_from_moments(m, "y");
        worst = std::max(worst, max_abs(s.projector.onto() - naive_leace(x, labels, c)));
    }
    return pass_if(worst <= 1e-8, fmt("30 fixtures D<=8 N<=200: max entrywise deviation %.2e (limit 1e-8)", worst));
}

Outcome sweep_shape() {
    PlantedSpec spec;
    spec.dim = 64;
    spec.signal_dim = 24;
    spec.concepts = {planted_concept("y", 100, 1.0, 61), planted_concept("z", 4, 1.0, 62)};
    const auto data = generate_planted(spec, 20000, 60);
    SplitSpec sp;
    sp.seed = 60;
    sp.mode = SplitMode::DisjointLabel;
    sp.concept_name = "y";
    // Groups go to space-train greedily by descending size, so a target equal
    // to the row share of the 30 largest classes selects exactly those.
    std::vector<std::size_t> sizes(100, 0);
    for (Label y : data.dataset.get_concept("y").labels) {
        ++sizes[y];
    }
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    const double share =
        static_cast<double>(std::accumulate(sizes.begin(), sizes.begin() + 30, std::size_t{0})) /
        static_cast<double>(data.dataset.rows());
    sp.fractions = {share, 0.6 * (1.0 - share), 0.4 * (1.0 - share)};
    const SplitSet splits = make_splits(data.dataset, sp);
    std::vector<bool> seen(100, false);
    for (Label y : splits.space_train.get_concept("y").labels) {
        seen[y] = true;
    }
    const auto space_classes = std::count(seen.begin(), seen.end(), true);

    ProtocolConfig cfg;
    const std::vector<Eigen::Index> dims{10, 20, 40, 64};
    const auto reports = sweep_dimension(splits, {"y", "z"}, dims, cfg);
    std::ostringstream detail;
    detail << space_classes << " classes in space-train; ";
    bool ok = space_classes == 30;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        if (!r.ok()) {
            return {Verdict::Fail, "M=" + std::to_string(dims[i]) + " error: " + *r.error};
        }
        detail << fmt("M=%ld %.1f/%.1f/%.1f/%.1f; ", static_cast<long>(dims[i]), r.metrics.retention,
                      r.metrics.leakage, r.metrics.purity, r.metrics.interference);
        if (i > 0) {
            ok = ok && r.metrics.retention >= reports[i - 1].metrics.retention - 1.0;
            ok = ok && r.metrics.leakage <= reports[i - 1].metrics.leakage + 1.0;
        }
    }
    // At M = D nothing is left in the complement; the full-space probe is the
    // ambient probe. Compared after the one-decimal report rounding.
    const auto& last = reports.back();
    auto r1 = [](double v) { return std::round(v * 10.0) / 10.0; };
    const bool end_ok = r1(last.metrics.interference) == r1(last.bounds.majority_err_other) &&
                        r1(last.metrics.purity) == r1(last.bounds.ambient_err_other) &&
                        r1(last.metrics.leakage) == r1(last.bounds.majority);
    detail << fmt("M=D: purity %.1f vs ambient err' %.1f, interference %.1f vs majority err' %.1f",
                  last.metrics.purity, last.bounds.ambient_err_other, last.metrics.interference,
                  last.bounds.majority_err_other);
    return pass_if(ok && end_ok, detail.str());
}

Outcome real_data() {
    const char* probe = std::getenv("CSL_ACCEPT_PROBE_TRAIN");
    const char* test = std::getenv("CSL_ACCEPT_TEST");
    const char* space = std::getenv("CSL_ACCEPT_SPACE_TRAIN");
    const char* target = std::getenv("CSL_ACCEPT_TARGET");   // "gender" or "phones"
    if (!probe || !test || !space || !target) {
        return {Verdict::Skip,
                "set CSL_ACCEPT_SPACE_TRAIN, CSL_ACCEPT_PROBE_TRAIN, CSL_ACCEPT_TEST, CSL_ACCEPT_TARGET "
                "(gender|phones) and optionally CSL_ACCEPT_OTHER to run"};
    }
    const std::string t = target;
    struct Target {
        const char* concept_name;
        const char* other;
        double ret, leak, pur, inter, tol;
    };
    const Target spec = t == "phones" ? Target{"phones", "speakers", 82.6, 29.6, 94.3, 21.2, 2.0}
                                      : Target{"gender", "profession", 99.3, 58.6, 70.0, 26.5, 1.5};
    const char* other_env = std::getenv("CSL_ACCEPT_OTHER");
    SplitSet splits{load(space), load(probe), load(test), "user-supplied", false};
    ProtocolConfig cfg;
    cfg.estimators = {EstimatorKind::Leace};
    cfg.pairs = {{spec.concept_name, other_env ? other_env : spec.other}};
    const auto r = run_protocol(splits, cfg).at(0);
    if (!r.ok()) {
        return {Verdict::Fail, "error: " + *r.error};
    }
    const auto& m = r.metrics;
    const bool ok = std::abs(m.retention - spec.ret) <= spec.tol && std::abs(m.leakage - spec.leak) <= spec.tol &&
                    std::abs(m.purity - spec.pur) <= spec.tol && std::abs(m.interference - spec.inter) <= spec.tol;
    return pass_if(ok, fmt("%s: %.1f/%.1f/%.1f/%.1f vs %.1f/%.1f/%.1f/%.1f (tol %.1f)", spec.concept_name, m.retention,
                           m.leakage, m.purity, m.interference, spec.ret, spec.leak, spec.pur, spec.inter, spec.tol));
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"projector-algebra", 60, projector_algebra},
        {"leace-seen-data-zero-leakage", 120, leace_zero_leakage},
        {"boundary-identities", 0, boundary_identities},
        {"planted-subspace-recovery", 300, planted_recovery},
        {"mlr-vs-leace-redundancy", 0, redundancy_divergence},
        {"probe-gradient-check", 0, gradient_check},
        {"leace-brute-force-equivalence", 0, leace_brute_force},
        {"dimension-sweep-shape", 0, sweep_shape},
        {"real-data-targets", 0, real_data},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Verdict::Fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_s > 0 && secs > c.budget_s && o.verdict == Verdict::Pass) {
            o = {Verdict::Fail, o.detail + fmt(" [runtime %.1fs exceeds %.0fs]", secs, c.budget_s)};
        }
        const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Skip ? "SKIP" : "FAIL";
        std::printf("%s %s (%.1fs): %s\n", tag, c.name, secs, o.detail.c_str());
        std::fflush(stdout);
        failed += o.verdict == Verdict::Fail ? 1 : 0;
    }
    return failed == 0 ? 0 : 1;
}
