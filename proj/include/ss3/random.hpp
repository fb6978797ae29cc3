#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace ss3 {

using Rng = std::mt19937_64;

// Mixes a base seed with a stream index (splitmix64 finalizer) so that
// per-trial / per-bag / per-replicate streams are independent and stable.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng);

}  // namespace ss3
