#include "csl/dataset.hpp"

#include "csl/error.hpp"
#include "csl/rng.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace csl {

const char* to_string(OverlapPolicy policy) {
    switch (policy) {
    case OverlapPolicy::Orthogonal: return "orthogonal";
    case OverlapPolicy::Shared: return "shared";
    case OverlapPolicy::Random: return "random";
    }
    return "unknown";
}

const char* to_string(MeanLayout layout) {
    return layout == MeanLayout::Simplex ? "simplex" : "gaussian";
}

namespace {

constexpr std::uint64_t kBasisStream = 0xB0A5;
constexpr std::uint64_t kMeansStream = 0x3EA5;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Xoshiro256& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = rng.normal();
        }
    }
    return m;
}

Matrix orthonormal_columns(const Matrix& a) {
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
    canonicalize_signs(q);
    return q;
}

// Regular simplex: C vertices, centered, each at squared norm (C-1)/C, in C-1
// coordinates.
Matrix simplex_vertices(std::size_t classes) {
    const auto c = static_cast<Eigen::Index>(classes);
    const Matrix centering = Matrix::Identity(c, c) - Matrix::Constant(c, c, 1.0 / static_cast<double>(c));
    const SymmetricEigen eig = sym_eig(centering);
    return eig.vectors.leftCols(c - 1);
}

}  // namespace

void PlantedSpec::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::Configuration, "planted spec: " + msg); };
    if (dim < 1 || signal_dim < 1) {
        fail("dim and signal_dim must be >= 1");
    }
    if (concepts.empty()) {
        fail("at least one concept is required");
    }
    const auto entries = static_cast<Eigen::Index>(concepts.size());
    if (entries * signal_dim > dim) {
        fail("sum of planted dims " + std::to_string(entries * signal_dim) + " exceeds D=" +
             std::to_string(dim));
    }
    if (overlap == OverlapPolicy::Shared &&
        (shared_dims < 0 || shared_dims >= signal_dim)) {
        fail("shared_dims must lie in [0, signal_dim)");
    }
    if (!(ambient_noise >= 0.0)) {
        fail("ambient_noise must be >= 0");
    }
    if (!(nuisance_noise >= 0.0)) {
        fail("nuisance_noise must be >= 0");
    }
    std::map<std::string, bool> seen;  // name -> is mirror
    for (const auto& c : concepts) {
        if (c.name.empty()) {
            fail("concept names must not be empty");
        }
        if (seen.count(c.name)) {
            fail("duplicate concept name '" + c.name + "'");
        }
        if (c.mirror_of) {
            const auto it = seen.find(*c.mirror_of);
            if (it == seen.end() || it->second) {
                fail("'" + c.name + "' mirrors '" + *c.mirror_of +
                     "', which must be an earlier non-mirror concept");
            }
        } else if (c.num_classes < 1) {
            fail("'" + c.name + "' needs at least one class");
        }
        if (!(c.mean_scale > 0.0)) {
            fail("'" + c.name + "' mean_scale must be positive");
        }
        if (!c.mirror_of && c.layout == MeanLayout::Simplex &&
            static_cast<Eigen::Index>(c.num_classes) > signal_dim + 1) {
            fail("'" + c.name + "' simplex layout needs classes <= signal_dim + 1");
        }
        if (!(c.label_noise >= 0.0 && c.label_noise <= 1.0)) {
            fail("'" + c.name + "' label_noise must lie in [0, 1]");
        }
        if (!(c.noise_scale >= 0.0)) {
            fail("'" + c.name + "' noise_scale must be >= 0");
        }
        seen.emplace(c.name, c.mirror_of.has_value());
    }
}

PlantedData generate_planted(const PlantedSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) {
        throw Error(ErrorKind::Configuration, "planted data needs at least one row");
    }
    const Eigen::Index d = spec.dim;
    const Eigen::Index k = spec.signal_dim;
    const std::size_t entries = spec.concepts.size();

    PlantedData out;
    if (spec.overlap == OverlapPolicy::Random) {
        for (const auto& c : spec.concepts) {
            Xoshiro256 rng(c.basis_seed, kBasisStream);
            out.bases.push_back(orthonormal_columns(gaussian(d, k, rng)));
        }
    } else {
        Xoshiro256 rng(spec.concepts.front().basis_seed, kBasisStream);
        const Matrix q = orthonormal_columns(gaussian(d, d, rng));
        const Eigen::Index stride =
            spec.overlap == OverlapPolicy::Shared ? k - spec.shared_dims : k;
        for (std::size_t e = 0; e < entries; ++e) {
            out.bases.push_back(q.middleCols(static_cast<Eigen::Index>(e) * stride, k));
        }
    }

    std::map<std::string, std::size_t> index_of;
    std::vector<std::size_t> source(entries);   // entry whose labels/means are used
    for (std::size_t e = 0; e < entries; ++e) {
        const auto& c = spec.concepts[e];
        index_of.emplace(c.name, e);
        source[e] = c.mirror_of ? index_of.at(*c.mirror_of) : e;
    }
    out.class_means.resize(entries);
    for (std::size_t e = 0; e < entries; ++e) {
        const auto& c = spec.concepts[e];
        if (source[e] != e) {
            out.class_means[e] = out.class_means[source[e]];
            continue;
        }
        Xoshiro256 rng(c.basis_seed, kMeansStream);
        const auto classes = static_cast<Eigen::Index>(c.num_classes);
        Matrix means;
        if (c.layout == MeanLayout::Simplex) {
            means = Matrix::Zero(classes, k);
            if (classes > 1) {
                means.leftCols(classes - 1) = simplex_vertices(c.num_classes);
                // average squared norm K * mean_scale^2, as in the Gaussian layout
                means *= c.mean_scale * std::sqrt(static_cast<double>(k) * static_cast<double>(classes) /
                                                  static_cast<double>(classes - 1));
                means = means * orthonormal_columns(gaussian(k, k, rng)).transpose();
            }
        } else {
            means = gaussian(classes, k, rng) * c.mean_scale;
            means.rowwise() -= means.colwise().mean();
        }
        out.class_means[e] = std::move(means);
    }

    std::vector<Concept> concepts;
    std::vector<std::size_t> concept_of(entries);
    for (std::size_t e = 0; e < entries; ++e) {
        const auto& c = spec.concepts[e];
        if (source[e] == e) {
            Concept entry{c.name, {}, Labels(n)};
            for (std::size_t j = 0; j < c.num_classes; ++j) {
                entry.class_names.push_back(std::to_string(j));
            }
            concept_of[e] = concepts.size();
            concepts.push_back(std::move(entry));
        }
    }
    for (std::size_t e = 0; e < entries; ++e) {
        concept_of[e] = concept_of[source[e]];
    }

    const auto rows = static_cast<Eigen::Index>(n);
    Matrix features = Matrix::Zero(rows, d);
    std::vector<Matrix> coords(entries, Matrix(rows, k));
    Matrix ambient(rows, d);
    Xoshiro256 rng(seed, 0);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (auto& entry : concepts) {
            entry.labels[static_cast<std::size_t>(i)] =
                static_cast<Label>(rng.below(entry.class_names.size()));
        }
        for (std::size_t e = 0; e < entries; ++e) {
            const Label y = concepts[concept_of[e]].labels[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < k; ++j) {
                coords[e](i, j) = out.class_means[e](y, j) + spec.concepts[e].noise_scale * rng.normal();
            }
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            ambient(i, j) = spec.ambient_noise * rng.normal();
        }
    }
    for (std::size_t e = 0; e < entries; ++e) {
        features.noalias() += coords[e] * out.bases[e].transpose();
    }
    features += ambient;
    if (spec.nuisance_noise > 0.0) {
        Matrix all(d, k * static_cast<Eigen::Index>(entries));
        for (std::size_t e = 0; e < entries; ++e) {
            all.middleCols(static_cast<Eigen::Index>(e) * k, k) = out.bases[e];
        }
        const Matrix span = orthonormal_basis(all);
        const Matrix complement = Matrix::Identity(d, d) - span * span.transpose();
        Xoshiro256 nuisance_rng(seed, 1);
        features.noalias() += gaussian(rows, d, nuisance_rng) * complement * spec.nuisance_noise;
    }

    Xoshiro256 relabel_rng(seed, 2);
    for (std::size_t e = 0; e < entries; ++e) {
        const auto& c = spec.concepts[e];
        if (source[e] != e || c.label_noise <= 0.0) {
            continue;
        }
        auto& entry = concepts[concept_of[e]];
        for (auto& y : entry.labels) {
            if (relabel_rng.uniform() < c.label_noise) {
                y = static_cast<Label>(relabel_rng.below(entry.class_names.size()));
            }
        }
    }

    std::ostringstream prov;
    prov << "planted D=" << d << " K=" << k << " overlap=" << to_string(spec.overlap)
         << " n=" << n << " seed=" << seed;
    if (spec.nuisance_noise > 0.0) {
        prov << " nuisance=" << spec.nuisance_noise;
    }
    out.dataset = LabeledDataset(std::move(features), std::move(concepts), prov.str());
    return out;
}

}  // namespace csl
