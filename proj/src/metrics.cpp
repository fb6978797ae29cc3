#include "ss3/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ss3/errors.hpp"

namespace ss3 {

namespace {

void check_dims(const TangentSpace& a, const TangentSpace& b, const char* what) {
  if (a.p1() != b.p1() || a.p2() != b.p2()) throw DimensionMismatch(std::string(what) + ": dimension mismatch");
}

}  // namespace

double tangent_overlap(const TangentSpace& t1, const TangentSpace& t2) {
  check_dims(t1, t2, "tangent_overlap");
  const double p1 = static_cast<double>(t1.p1());
  const double p2 = static_cast<double>(t1.p2());
  const double c1 = static_cast<double>(t1.rank());
  const double r1 = c1;
  const double c2 = static_cast<double>(t2.rank());
  const double r2 = c2;
  const double c = subspace_overlap(t1.col(), t2.col());
  const double r = subspace_overlap(t1.row(), t2.row());
  return c * p2 + c1 * r2 - c * r2 + c2 * r1 + p1 * r - c2 * r - c * r1 - c1 * r + c * r;
}

DiscoveryMetrics discovery_metrics(const TangentSpace& estimate, const TangentSpace& truth) {
  check_dims(estimate, truth, "discovery_metrics");
  const double p1 = static_cast<double>(truth.p1());
  const double p2 = static_cast<double>(truth.p2());
  const double rs = static_cast<double>(truth.rank());
  const double rh = static_cast<double>(estimate.rank());
  // tr(P_Chat P_{C*perp}), tr(P_Rhat P_{R*perp})
  const double ch = std::max(0.0, rh - subspace_overlap(estimate.col(), truth.col()));
  const double rc = std::max(0.0, rh - subspace_overlap(estimate.row(), truth.row()));

  DiscoveryMetrics m;
  m.dim_estimate = estimate.dim();
  m.dim_truth = truth.dim();
  m.dim_truth_complement = truth.complement_dim();
  m.fd = std::clamp(ch * (p2 - rs) + (p1 - rs) * rc - ch * rc, 0.0, static_cast<double>(m.dim_truth_complement));
  m.pw = std::max(0.0, tangent_overlap(estimate, truth));
  m.fdr = m.dim_estimate == 0 ? 0.0 : std::clamp(m.fd / static_cast<double>(m.dim_estimate), 0.0, 1.0);
  return m;
}

DiscoveryMetrics column_metrics(const Subspace& estimate, const Subspace& truth) {
  if (estimate.ambient_dim() != truth.ambient_dim()) throw DimensionMismatch("column_metrics: ambient mismatch");
  DiscoveryMetrics m;
  m.dim_estimate = estimate.rank();
  m.dim_truth = truth.rank();
  m.dim_truth_complement = truth.ambient_dim() - truth.rank();
  m.pw = std::clamp(subspace_overlap(estimate, truth), 0.0, static_cast<double>(m.dim_estimate));
  m.fd = std::clamp(static_cast<double>(m.dim_estimate) - m.pw, 0.0, static_cast<double>(m.dim_truth_complement));
  m.fdr = m.dim_estimate == 0 ? 0.0 : m.fd / static_cast<double>(m.dim_estimate);
  return m;
}

double misalignment_mu(const TangentSpace& t1, const TangentSpace& t2) {
  check_dims(t1, t2, "misalignment_mu");
  const Index d = std::max(t1.dim(), t2.dim());
  if (d == 0) throw InvalidInput("misalignment_mu: undefined for two zero-dimensional tangent spaces");
  return std::clamp(1.0 - tangent_overlap(t1, t2) / static_cast<double>(d), 0.0, 1.0);
}

double commutator_frobenius(const MatrixOperator& a, const MatrixOperator& b) {
  if (a.p1() != b.p1() || a.p2() != b.p2()) throw DimensionMismatch("commutator_frobenius: dimension mismatch");
  const MatrixOperator ab = op_compose(a, b);
  const double sq = 2.0 * op_trace(ab) - 2.0 * op_trace(op_compose(ab, ab));
  return std::sqrt(std::max(0.0, sq));
}

double tangent_span_commutator(const TangentSpace& t, const Vector& u, const Vector& v) {
  if (u.size() != t.p1() || v.size() != t.p2()) throw DimensionMismatch("tangent_span_commutator: vector size mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw InvalidInput("tangent_span_commutator: zero vector");
  // s = |P_T(uv')|^2 and 1 - s = |P_T^perp(uv')|^2, each taken from its own projection
  const double a = t.rank() ? (t.col().basis().transpose() * u).squaredNorm() / (nu * nu) : 0.0;
  const double b = t.rank() ? (t.row().basis().transpose() * v).squaredNorm() / (nv * nv) : 0.0;
  const double ra = t.rank() ? (u - t.col().project(u)).squaredNorm() / (nu * nu) : 1.0;
  const double rb = t.rank() ? (v - t.row().project(v)).squaredNorm() / (nv * nv) : 1.0;
  const double s = std::clamp(a + b - a * b, 0.0, 1.0);
  const double c = std::clamp(ra * rb, 0.0, 1.0);
  return std::sqrt(2.0 * s * c);
}

}  // namespace ss3
