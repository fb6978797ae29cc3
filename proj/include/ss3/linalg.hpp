#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ss3 {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultRankTol = 1e-8;

class Subspace;
Subspace orthonormalize(const Matrix& a, double tol);
Subspace haar_subspace(Index ambient, Index rank, std::uint64_t seed);

/// Orthonormal basis of a subspace of R^ambient. Rank 0 is an empty basis.
class Subspace {
 public:
  Subspace() = default;
  /// Takes ownership of an already orthonormal basis (checked to 1e-10).
  explicit Subspace(Matrix basis);

  static Subspace zero(Index ambient);
  static Subspace full(Index ambient);
  /// Span of the listed coordinate vectors e_i (0-based).
  static Subspace coordinate(Index ambient, const std::vector<Index>& coords);

  Index ambient_dim() const { return basis_.rows(); }
  Index rank() const { return basis_.cols(); }
  const Matrix& basis() const { return basis_; }

  Matrix projector() const;
  Matrix project(const Matrix& x) const;
  /// Orthonormal basis of the orthogonal complement (deterministic).
  Matrix complement_basis() const;
  Subspace complement() const;
  /// First k basis columns.
  Subspace leading(Index k) const;

 private:
  friend Subspace orthonormalize(const Matrix&, double);
  friend Subspace haar_subspace(Index, Index, std::uint64_t);
  Subspace(Matrix basis, bool /*trusted*/);
  Matrix basis_;
};

/// T(C,R) on p1 x p2 matrices.
class TangentSpace {
 public:
  TangentSpace(Subspace col, Subspace row);

  static TangentSpace zero(Index p1, Index p2);

  const Subspace& col() const { return col_; }
  const Subspace& row() const { return row_; }
  Index p1() const { return col_.ambient_dim(); }
  Index p2() const { return row_.ambient_dim(); }
  Index rank() const { return col_.rank(); }
  Index dim() const;
  Index complement_dim() const;

 private:
  Subspace col_;
  Subspace row_;
};

Subspace orthonormalize(const Matrix& a, double tol = kDefaultRankTol);
/// Haar-distributed orthogonal matrix (Gaussian QR with sign correction).
Matrix haar_orthogonal(Index n, std::uint64_t seed);

Matrix tangent_apply(const TangentSpace& t, const Matrix& m);
Matrix tangent_apply_complement(const TangentSpace& t, const Matrix& m);

/// Principal angles, ascending, length min(rank1, rank2).
Vector principal_angles(const Subspace& s1, const Subspace& s2);
/// trace(P_S1 P_S2) = squared Frobenius norm of basis1' basis2.
double subspace_overlap(const Subspace& s1, const Subspace& s2);

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Each vector is
/// sign-normalized so its largest-magnitude entry is positive.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};
SymmetricEigen eigen_descending(const Matrix& sym);

/// Thin SVD with singular values descending and deterministic signs.
struct ThinSvd {
  Matrix u;
  Vector s;
  Matrix v;
};
ThinSvd thin_svd(const Matrix& a);

/// p x p matrix stored as scale * I + left * right'. Projectors and their
/// complements stay low-rank through products, which keeps symbolic traces
/// cheap at p in the hundreds.
class KronFactor {
 public:
  KronFactor() = default;
  KronFactor(Index n, double scale, Matrix left, Matrix right);

  static KronFactor identity(Index n);
  static KronFactor projector(const Subspace& s);
  static KronFactor complement_projector(const Subspace& s);
  static KronFactor dense(const Matrix& a);

  Index size() const { return n_; }
  double scale() const { return scale_; }
  const Matrix& left() const { return left_; }
  const Matrix& right() const { return right_; }
  Index low_rank() const { return left_.cols(); }

  Matrix to_dense() const;
  double trace() const;
  KronFactor transposed() const;
  /// this * m
  Matrix left_apply(const Matrix& m) const;
  /// m * this
  Matrix right_apply(const Matrix& m) const;

  friend KronFactor operator*(const KronFactor& a, const KronFactor& b);

 private:
  Index n_ = 0;
  double scale_ = 0.0;
  Matrix left_;
  Matrix right_;
};

/// Linear map on p1 x p2 matrices:
///   M -> sum_k c_k A_k M B_k + sum_j d_j <G_j, M> H_j
class MatrixOperator {
 public:
  struct KronTerm {
    KronFactor a;
    KronFactor b;
    double coeff;
  };
  struct RankOneTerm {
    Matrix g;
    Matrix h;
    double coeff;
  };

  MatrixOperator(Index p1, Index p2);

  Index p1() const { return p1_; }
  Index p2() const { return p2_; }
  const std::vector<KronTerm>& kron_terms() const { return kron_; }
  const std::vector<RankOneTerm>& rank1_terms() const { return rank1_; }

  MatrixOperator& add_kron(KronFactor a, KronFactor b, double coeff = 1.0);
  MatrixOperator& add_rank1(Matrix g, Matrix h, double coeff = 1.0);

  Matrix apply(const Matrix& m) const;

 private:
  Index p1_;
  Index p2_;
  std::vector<KronTerm> kron_;
  std::vector<RankOneTerm> rank1_;
};

MatrixOperator tangent_operator(const TangentSpace& t);
MatrixOperator tangent_complement_operator(const TangentSpace& t);
MatrixOperator span_operator(const Vector& u, const Vector& v);
MatrixOperator identity_operator(Index p1, Index p2);

/// (outer o inner)(M) = outer(inner(M))
MatrixOperator op_compose(const MatrixOperator& outer, const MatrixOperator& inner);
MatrixOperator op_add(const MatrixOperator& a, const MatrixOperator& b);
MatrixOperator op_scale(const MatrixOperator& a, double s);
double op_trace(const MatrixOperator& a);

inline MatrixOperator operator*(const MatrixOperator& a, const MatrixOperator& b) {
  return op_compose(a, b);
}
inline MatrixOperator operator+(const MatrixOperator& a, const MatrixOperator& b) {
  return op_add(a, b);
}
inline MatrixOperator operator-(const MatrixOperator& a, const MatrixOperator& b) {
  return op_add(a, op_scale(b, -1.0));
}

}  // namespace ss3
