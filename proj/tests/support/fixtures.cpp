#include "fixtures.hpp"

#include "csl/rng.hpp"

namespace csl::testing {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Xoshiro256 rng(seed, 0x7E57);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = rng.normal();
        }
    }
    return m;
}

}  // namespace csl::testing
