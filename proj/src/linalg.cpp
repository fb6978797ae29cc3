#include "ss3/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ss3/errors.hpp"
#include "ss3/random.hpp"

namespace ss3 {

namespace {

constexpr double kOrthoTol = 1e-10;

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

// Flip column signs so the largest-magnitude entry of each column is positive.
void normalize_signs(Matrix& a, Matrix* partner = nullptr) {
  for (Index j = 0; j < a.cols(); ++j) {
    Index arg = 0;
    a.col(j).cwiseAbs().maxCoeff(&arg);
    if (a(arg, j) < 0.0) {
      a.col(j) *= -1.0;
      if (partner) partner->col(j) *= -1.0;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Subspace

Subspace::Subspace(Matrix basis, bool) : basis_(std::move(basis)) {}

Subspace::Subspace(Matrix basis) : basis_(std::move(basis)) {
  if (basis_.rows() < 1) throw InvalidInput("Subspace: ambient dimension must be positive");
  if (basis_.cols() > basis_.rows()) throw InvalidInput("Subspace: rank exceeds ambient dimension");
  require_finite(basis_, "Subspace");
  if (basis_.cols() > 0) {
    const Matrix gram = basis_.transpose() * basis_;
    const double err = (gram - Matrix::Identity(rank(), rank())).cwiseAbs().maxCoeff();
    if (err > kOrthoTol) throw InvalidInput("Subspace: basis is not orthonormal");
  }
}

Subspace Subspace::zero(Index ambient) {
  if (ambient < 1) throw InvalidInput("Subspace: ambient dimension must be positive");
  return Subspace(Matrix(ambient, 0), true);
}

Subspace Subspace::full(Index ambient) {
  if (ambient < 1) throw InvalidInput("Subspace: ambient dimension must be positive");
  return Subspace(Matrix::Identity(ambient, ambient), true);
}

Subspace Subspace::coordinate(Index ambient, const std::vector<Index>& coords) {
  if (ambient < 1) throw InvalidInput("Subspace: ambient dimension must be positive");
  std::vector<Index> sorted(coords);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidInput("Subspace::coordinate: duplicate coordinate");
  Matrix b = Matrix::Zero(ambient, static_cast<Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) {
    if (coords[k] < 0 || coords[k] >= ambient)
      throw InvalidInput("Subspace::coordinate: coordinate out of range");
    b(coords[k], static_cast<Index>(k)) = 1.0;
  }
  return Subspace(std::move(b), true);
}

Matrix Subspace::projector() const { return basis_ * basis_.transpose(); }

Matrix Subspace::project(const Matrix& x) const {
  if (x.rows() != ambient_dim()) throw DimensionMismatch("Subspace::project: row mismatch");
  return basis_ * (basis_.transpose() * x);
}

Matrix Subspace::complement_basis() const {
  const Index n = ambient_dim();
  const Index r = rank();
  if (r == 0) return Matrix::Identity(n, n);
  if (r == n) return Matrix(n, 0);
  Eigen::HouseholderQR<Matrix> qr(basis_);
  const Matrix q = qr.householderQ();
  return q.rightCols(n - r);
}

Subspace Subspace::complement() const { return Subspace(complement_basis(), true); }

Subspace Subspace::leading(Index k) const {
  if (k < 0 || k > rank()) throw InvalidInput("Subspace::leading: k out of range");
  return Subspace(basis_.leftCols(k), true);
}

// ------------------------------------------------------------ TangentSpace

TangentSpace::TangentSpace(Subspace col, Subspace row) : col_(std::move(col)), row_(std::move(row)) {
  if (col_.rank() != row_.rank())
    throw InvalidInput("TangentSpace: column and row spaces must have equal rank");
  if (col_.ambient_dim() < 1 || row_.ambient_dim() < 1)
    throw InvalidInput("TangentSpace: empty ambient space");
}

TangentSpace TangentSpace::zero(Index p1, Index p2) {
  return TangentSpace(Subspace::zero(p1), Subspace::zero(p2));
}

Index TangentSpace::dim() const {
  const Index r = rank();
  return r * (p1() + p2()) - r * r;
}

Index TangentSpace::complement_dim() const { return (p1() - rank()) * (p2() - rank()); }

// ----------------------------------------------------------- free helpers

ThinSvd thin_svd(const Matrix& a) {
  require_finite(a, "thin_svd");
  ThinSvd out;
  const Index k = std::min(a.rows(), a.cols());
  if (k == 0) {
    out.u = Matrix(a.rows(), 0);
    out.v = Matrix(a.cols(), 0);
    out.s = Vector(0);
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.v = svd.matrixV();
  out.s = svd.singularValues();
  // BDCSVD can return NaNs or lose a singular vector when singular values repeat (e.g. projectors)
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  if (!((a - out.u * out.s.asDiagonal() * out.v.transpose()).norm() <= 1e-10 * scale)) {
    Eigen::JacobiSVD<Matrix> jac(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = jac.matrixU();
    out.v = jac.matrixV();
    out.s = jac.singularValues();
  }
  normalize_signs(out.u, &out.v);
  return out;
}

Subspace orthonormalize(const Matrix& a, double tol) {
  if (!(tol > 0.0)) throw InvalidInput("orthonormalize: tol must be positive");
  require_finite(a, "orthonormalize");
  if (a.rows() < 1) throw InvalidInput("orthonormalize: no rows");
  if (a.cols() == 0) return Subspace::zero(a.rows());
  const ThinSvd svd = thin_svd(a);
  if (svd.s.size() == 0 || svd.s(0) == 0.0) return Subspace::zero(a.rows());
  Index k = 0;
  while (k < svd.s.size() && svd.s(k) > tol * svd.s(0)) ++k;
  return Subspace(svd.u.leftCols(k).eval(), true);
}

Subspace haar_subspace(Index ambient, Index rank, std::uint64_t seed) {
  if (ambient < 1) throw InvalidInput("haar_subspace: ambient must be positive");
  if (rank < 0 || rank > ambient) throw InvalidInput("haar_subspace: rank must lie in [0, ambient]");
  if (rank == 0) return Subspace::zero(ambient);
  Rng rng(seed);
  const Matrix g = standard_normal(ambient, rank, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(ambient, rank);
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < rank; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return Subspace(std::move(q), true);
}

Matrix haar_orthogonal(Index n, std::uint64_t seed) { return haar_subspace(n, n, seed).basis(); }

Matrix tangent_apply(const TangentSpace& t, const Matrix& m) {
  if (m.rows() != t.p1() || m.cols() != t.p2())
    throw DimensionMismatch("tangent_apply: matrix does not match tangent space dimensions");
  const Matrix& u = t.col().basis();
  const Matrix& v = t.row().basis();
  const Matrix a = u * (u.transpose() * m);
  const Matrix d = m - a;
  return a + (d * v) * v.transpose();
}

Matrix tangent_apply_complement(const TangentSpace& t, const Matrix& m) {
  if (m.rows() != t.p1() || m.cols() != t.p2())
    throw DimensionMismatch("tangent_apply_complement: matrix does not match tangent space dimensions");
  const Matrix& u = t.col().basis();
  const Matrix& v = t.row().basis();
  const Matrix d = m - u * (u.transpose() * m);
  return d - (d * v) * v.transpose();
}

Vector principal_angles(const Subspace& s1, const Subspace& s2) {
  if (s1.ambient_dim() != s2.ambient_dim())
    throw DimensionMismatch("principal_angles: ambient dimensions differ");
  const Index k = std::min(s1.rank(), s2.rank());
  if (k == 0) return Vector(0);
  const Matrix c = s1.basis().transpose() * s2.basis();
  Eigen::JacobiSVD<Matrix> svd(c);
  Vector angles(k);
  for (Index i = 0; i < k; ++i) angles(i) = std::acos(std::clamp(svd.singularValues()(i), 0.0, 1.0));
  return angles;
}

double subspace_overlap(const Subspace& s1, const Subspace& s2) {
  if (s1.ambient_dim() != s2.ambient_dim())
    throw DimensionMismatch("subspace_overlap: ambient dimensions differ");
  if (s1.rank() == 0 || s2.rank() == 0) return 0.0;
  return (s1.basis().transpose() * s2.basis()).squaredNorm();
}

SymmetricEigen eigen_descending(const Matrix& sym) {
  if (sym.rows() != sym.cols()) throw DimensionMismatch("eigen_descending: matrix not square");
  if (!sym.allFinite()) throw NumericError("eigen_descending: non-finite entries");
  SymmetricEigen out;
  const Index n = sym.rows();
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigen_descending: solver failed");
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  normalize_signs(out.vectors);
  return out;
}

// -------------------------------------------------------------- KronFactor

KronFactor::KronFactor(Index n, double scale, Matrix left, Matrix right)
    : n_(n), scale_(scale), left_(std::move(left)), right_(std::move(right)) {
  if (left_.rows() != n_ || right_.rows() != n_ || left_.cols() != right_.cols())
    throw DimensionMismatch("KronFactor: inconsistent low-rank factors");
}

KronFactor KronFactor::identity(Index n) { return KronFactor(n, 1.0, Matrix(n, 0), Matrix(n, 0)); }

KronFactor KronFactor::projector(const Subspace& s) {
  return KronFactor(s.ambient_dim(), 0.0, s.basis(), s.basis());
}

KronFactor KronFactor::complement_projector(const Subspace& s) {
  return KronFactor(s.ambient_dim(), 1.0, -s.basis(), s.basis());
}

KronFactor KronFactor::dense(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("KronFactor::dense: matrix not square");
  return KronFactor(a.rows(), 0.0, a, Matrix::Identity(a.rows(), a.rows()));
}

Matrix KronFactor::to_dense() const {
  Matrix d = left_ * right_.transpose();
  d.diagonal().array() += scale_;
  return d;
}

double KronFactor::trace() const {
  return scale_ * static_cast<double>(n_) + left_.cwiseProduct(right_).sum();
}

KronFactor KronFactor::transposed() const { return KronFactor(n_, scale_, right_, left_); }

Matrix KronFactor::left_apply(const Matrix& m) const {
  if (m.rows() != n_) throw DimensionMismatch("KronFactor::left_apply: size mismatch");
  Matrix out = left_ * (right_.transpose() * m);
  if (scale_ != 0.0) out += scale_ * m;
  return out;
}

Matrix KronFactor::right_apply(const Matrix& m) const {
  if (m.cols() != n_) throw DimensionMismatch("KronFactor::right_apply: size mismatch");
  Matrix out = (m * left_) * right_.transpose();
  if (scale_ != 0.0) out += scale_ * m;
  return out;
}

KronFactor operator*(const KronFactor& a, const KronFactor& b) {
  if (a.n_ != b.n_) throw DimensionMismatch("KronFactor product: size mismatch");
  const Index n = a.n_;
  // (sa I + L1 R1')(sb I + L2 R2') = sa sb I + L1 (sb R1 + R2 M')' + sa L2 R2',  M = R1' L2
  const Matrix m = a.right_.transpose() * b.left_;
  KronFactor out;
  out.n_ = n;
  out.scale_ = a.scale_ * b.scale_;
  if (a.scale_ == 0.0) {
    out.left_ = a.left_;
    out.right_ = b.scale_ * a.right_ + b.right_ * m.transpose();
  } else if (b.scale_ == 0.0) {
    out.left_ = a.left_ * m + a.scale_ * b.left_;
    out.right_ = b.right_;
  } else {
    const Index k1 = a.left_.cols();
    const Index k2 = b.left_.cols();
    out.left_.resize(n, k1 + k2);
    out.right_.resize(n, k1 + k2);
    out.left_ << a.left_, a.scale_ * b.left_;
    out.right_ << b.scale_ * a.right_ + b.right_ * m.transpose(), b.right_;
  }
  if (out.left_.cols() > n) {
    Matrix d = out.left_ * out.right_.transpose();
    out.left_ = std::move(d);
    out.right_ = Matrix::Identity(n, n);
  }
  return out;
}

// ---------------------------------------------------------- MatrixOperator

MatrixOperator::MatrixOperator(Index p1, Index p2) : p1_(p1), p2_(p2) {
  if (p1 < 1 || p2 < 1) throw InvalidInput("MatrixOperator: dimensions must be positive");
}

MatrixOperator& MatrixOperator::add_kron(KronFactor a, KronFactor b, double coeff) {
  if (a.size() != p1_ || b.size() != p2_) throw DimensionMismatch("MatrixOperator::add_kron: factor size mismatch");
  if (coeff != 0.0) kron_.push_back({std::move(a), std::move(b), coeff});
  return *this;
}

MatrixOperator& MatrixOperator::add_rank1(Matrix g, Matrix h, double coeff) {
  if (g.rows() != p1_ || g.cols() != p2_ || h.rows() != p1_ || h.cols() != p2_)
    throw DimensionMismatch("MatrixOperator::add_rank1: matrix size mismatch");
  if (coeff != 0.0) rank1_.push_back({std::move(g), std::move(h), coeff});
  return *this;
}

Matrix MatrixOperator::apply(const Matrix& m) const {
  if (m.rows() != p1_ || m.cols() != p2_) throw DimensionMismatch("MatrixOperator::apply: size mismatch");
  Matrix out = Matrix::Zero(p1_, p2_);
  for (const auto& t : kron_) out += t.coeff * t.b.right_apply(t.a.left_apply(m));
  for (const auto& t : rank1_) out += (t.coeff * t.g.cwiseProduct(m).sum()) * t.h;
  return out;
}

MatrixOperator tangent_operator(const TangentSpace& t) {
  MatrixOperator op(t.p1(), t.p2());
  const KronFactor pc = KronFactor::projector(t.col());
  const KronFactor pr = KronFactor::projector(t.row());
  op.add_kron(pc, KronFactor::identity(t.p2()), 1.0);
  op.add_kron(KronFactor::identity(t.p1()), pr, 1.0);
  op.add_kron(pc, pr, -1.0);
  return op;
}

MatrixOperator tangent_complement_operator(const TangentSpace& t) {
  MatrixOperator op(t.p1(), t.p2());
  op.add_kron(KronFactor::complement_projector(t.col()), KronFactor::complement_projector(t.row()), 1.0);
  return op;
}

MatrixOperator span_operator(const Vector& u, const Vector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0) || !std::isfinite(nu) || !std::isfinite(nv))
    throw InvalidInput("span_operator: u and v must be nonzero and finite");
  MatrixOperator op(u.size(), v.size());
  const Matrix un = u / nu;
  const Matrix vn = v / nv;
  op.add_kron(KronFactor(u.size(), 0.0, un, un), KronFactor(v.size(), 0.0, vn, vn), 1.0);
  return op;
}

MatrixOperator identity_operator(Index p1, Index p2) {
  MatrixOperator op(p1, p2);
  op.add_kron(KronFactor::identity(p1), KronFactor::identity(p2), 1.0);
  return op;
}

MatrixOperator op_compose(const MatrixOperator& outer, const MatrixOperator& inner) {
  if (outer.p1() != inner.p1() || outer.p2() != inner.p2())
    throw DimensionMismatch("op_compose: dimension mismatch");
  MatrixOperator out(outer.p1(), outer.p2());
  for (const auto& o : outer.kron_terms()) {
    for (const auto& i : inner.kron_terms()) out.add_kron(o.a * i.a, i.b * o.b, o.coeff * i.coeff);
    // A <G,M> H B  ->  rank1(G, A H B)
    for (const auto& i : inner.rank1_terms())
      out.add_rank1(i.g, o.b.right_apply(o.a.left_apply(i.h)), o.coeff * i.coeff);
  }
  for (const auto& o : outer.rank1_terms()) {
    // <G, A M B> H = <A' G B', M> H
    for (const auto& i : inner.kron_terms())
      out.add_rank1(i.b.transposed().right_apply(i.a.transposed().left_apply(o.g)), o.h, o.coeff * i.coeff);
    for (const auto& i : inner.rank1_terms())
      out.add_rank1(i.g, o.h, o.coeff * i.coeff * o.g.cwiseProduct(i.h).sum());
  }
  return out;
}

MatrixOperator op_add(const MatrixOperator& a, const MatrixOperator& b) {
  if (a.p1() != b.p1() || a.p2() != b.p2()) throw DimensionMismatch("op_add: dimension mismatch");
  MatrixOperator out = a;
  for (const auto& t : b.kron_terms()) out.add_kron(t.a, t.b, t.coeff);
  for (const auto& t : b.rank1_terms()) out.add_rank1(t.g, t.h, t.coeff);
  return out;
}

MatrixOperator op_scale(const MatrixOperator& a, double s) {
  MatrixOperator out(a.p1(), a.p2());
  for (const auto& t : a.kron_terms()) out.add_kron(t.a, t.b, s * t.coeff);
  for (const auto& t : a.rank1_terms()) out.add_rank1(t.g, t.h, s * t.coeff);
  return out;
}

double op_trace(const MatrixOperator& a) {
  double tr = 0.0;
  for (const auto& t : a.kron_terms()) tr += t.coeff * t.a.trace() * t.b.trace();
  for (const auto& t : a.rank1_terms()) tr += t.coeff * t.g.cwiseProduct(t.h).sum();
  return tr;
}

// ------------------------------------------------------------------ random

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return derive_seed(derive_seed(base, stream), index);
}

Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = n01(rng);
  return g;
}

Vector standard_normal(Index n, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vector g(n);
  for (Index i = 0; i < n; ++i) g(i) = n01(rng);
  return g;
}

}  // namespace ss3
