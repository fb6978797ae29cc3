#pragma once

#include "ss3/linalg.hpp"

namespace ss3 {

struct DiscoveryMetrics {
  double fd = 0.0;
  double pw = 0.0;
  double fdr = 0.0;
  Index dim_estimate = 0;
  Index dim_truth = 0;
  Index dim_truth_complement = 0;
};

/// trace(P_T1 P_T2).
double tangent_overlap(const TangentSpace& t1, const TangentSpace& t2);

DiscoveryMetrics discovery_metrics(const TangentSpace& estimate, const TangentSpace& truth);
DiscoveryMetrics column_metrics(const Subspace& estimate, const Subspace& truth);

/// 1 - trace(P_T1 P_T2) / max(dim T1, dim T2).
double misalignment_mu(const TangentSpace& t1, const TangentSpace& t2);

/// ||[A,B]||_F for projector operators A, B.
double commutator_frobenius(const MatrixOperator& a, const MatrixOperator& b);
/// ||[P_T, P_span(uv')]||_F.
double tangent_span_commutator(const TangentSpace& t, const Vector& u, const Vector& v);

}  // namespace ss3
