#pragma once

#include <cstdint>
#include <vector>

#include "ss3/linalg.hpp"
#include "ss3/observations.hpp"

namespace ss3 {

/// B bags from B/2 independent complementary half-splits of {0..n-1}.
/// Bags 2j and 2j+1 partition the units; indices within a bag are sorted.
struct BagPlan {
  Index n = 0;
  Index b = 0;
  std::vector<std::vector<Index>> bags;
  std::uint64_t seed = 0;
};

BagPlan complementary_bags(Index n, Index b, std::uint64_t seed);

/// L* = U diag(spectrum) V' with Haar U, V. The full orthogonal matrices are
/// kept so that complement bases (and the denoising perturbation) are fixed.
struct SyntheticTruth {
  Matrix l_star;
  TangentSpace t_star = TangentSpace::zero(1, 1);
  Vector spectrum;
  std::uint64_t seed = 0;
  Matrix u_full;  // p1 x p1, first r columns span C*
  Matrix v_full;  // p2 x p2, first r columns span R*
};

/// Truth record rebuilt from a stored matrix: full SVD frames, rank at rank_tol.
SyntheticTruth truth_from_matrix(const Matrix& l_star, std::uint64_t seed = 0, double rank_tol = kDefaultRankTol);

SyntheticTruth gen_low_rank(Index p1, Index p2, const Vector& spectrum, std::uint64_t seed);

/// Variant whose column and row spaces have incoherence exactly `mu` at
/// coordinate 0: the leading singular vector puts weight mu on e_0 and the
/// remaining singular vectors are orthogonal to e_0.
SyntheticTruth gen_low_rank_coherent(Index p1, Index p2, const Vector& spectrum, double mu, std::uint64_t seed);

/// max_i max(||P_C e_i||^2, ||P_R e_i||^2)
double incoherence(const TangentSpace& t);

/// m entries sampled uniformly without replacement, N(0, sigma^2) noise.
ObservationSet gen_completion(const SyntheticTruth& truth, Index m, double sigma, std::uint64_t seed);
/// Y_i = L* + delta (gamma U* D_i V*' + eps_i), D_i full diagonal N(0,1).
ObservationSet gen_denoise(const SyntheticTruth& truth, Index n, double delta, double gamma, std::uint64_t seed);
/// y_k = <A_k, L*> + N(0, sigma^2), A_k with iid N(0,1) entries.
ObservationSet gen_linear(const SyntheticTruth& truth, Index n, double sigma, std::uint64_t seed);

/// Mean of n denoising replicates drawn directly: L* + delta (gamma U* Dbar V*' + Ebar)
/// with Dbar, Ebar entries N(0, 1/n). Same law as gen_denoise(...).replicate_mean().
Matrix gen_denoise_mean(const SyntheticTruth& truth, Index n, double delta, double gamma, std::uint64_t seed);

/// Observation model and size of a synthetic dataset, used to draw fresh
/// datasets (for example the half-size datasets behind Monte-Carlo bound terms).
struct DataModel {
  ObservationModel model = ObservationModel::entrywise;
  Index n = 0;         // entries, replicates or measurements in the full dataset
  double noise = 0.0;  // sigma (entrywise, linear) or delta (replicate)
  double gamma = 0.0;  // replicate perturbation weight
};

ObservationSet draw_dataset(const SyntheticTruth& truth, const DataModel& model, Index units, std::uint64_t seed);

enum class SnrDefinition {
  frobenius,  // E ||L*||_F / ||eps||_F, eps on the m observed entries
  spectral,   // E ||L*||_2 / ||delta (gamma U* D V*' + eps)||_2
  rms_scalar  // RMS <A, L*> / RMS eps for scalar linear measurements
};

struct SnrModel {
  SnrDefinition definition = SnrDefinition::frobenius;
  Index m = 0;         // observed entries (frobenius)
  double gamma = 0.0;  // perturbation weight (spectral)
};

/// Noise scale (sigma, or delta for the spectral definition) whose Monte-Carlo
/// SNR is within 1% of target, found by bisection with common random numbers.
double calibrate_snr(const SyntheticTruth& truth, const SnrModel& model, double target_snr, int mc_reps,
                     std::uint64_t seed);

/// Monte-Carlo SNR at a given noise scale (the quantity calibrate_snr inverts).
double achieved_snr(const SyntheticTruth& truth, const SnrModel& model, double scale, int mc_reps, std::uint64_t seed);

}  // namespace ss3
