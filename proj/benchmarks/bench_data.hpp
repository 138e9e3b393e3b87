#pragma once

#include "csl/dataset.hpp"
#include "csl/rng.hpp"

namespace csl::bench {

inline Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Xoshiro256 rng(seed, 0xBE);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = rng.normal();
        }
    }
    return m;
}

inline LabeledDataset planted(Eigen::Index dim, std::size_t classes, std::size_t rows) {
    PlantedSpec spec;
    spec.dim = dim;
    spec.signal_dim = std::min<Eigen::Index>(dim / 2, static_cast<Eigen::Index>(classes));
    PlantedConcept y;
    y.name = "y";
    y.num_classes = classes;
    y.mean_scale = 1.0;
    PlantedConcept z = y;
    z.name = "z";
    z.num_classes = 3;
    z.basis_seed = 2;
    spec.concepts = {y, z};
    return generate_planted(spec, rows, 1).dataset;
}

}  // namespace csl::bench
