#pragma once

#include "csl/dataset.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace csl::testing {

inline PlantedConcept planted_concept(std::string name, std::size_t classes, double mean_scale,
                                      std::uint64_t basis_seed = 1, double noise = 0.0) {
    PlantedConcept c;
    c.name = std::move(name);
    c.num_classes = classes;
    c.mean_scale = mean_scale;
    c.basis_seed = basis_seed;
    c.noise_scale = noise;
    return c;
}

/// Two orthogonal planted concepts "y" and "z".
inline PlantedData two_concepts(Eigen::Index dim, Eigen::Index k, std::size_t cy, std::size_t cz,
                                double mean_scale, std::size_t n, std::uint64_t seed,
                                double ambient_noise = 1.0) {
    PlantedSpec spec;
    spec.dim = dim;
    spec.signal_dim = k;
    spec.ambient_noise = ambient_noise;
    spec.concepts = {planted_concept("y", cy, mean_scale, seed + 1), planted_concept("z", cz, mean_scale, seed + 2)};
    return generate_planted(spec, n, seed);
}

/// Seeded standard-normal matrix (Eigen's Random is not reproducible).
Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

}  // namespace csl::testing
