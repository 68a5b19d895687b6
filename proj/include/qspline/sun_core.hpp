#pragma once

// Matrix calculus on SU(N) and su(N) with the Frobenius (trace) inner product.
//
// All tangent vectors are stored as ambient N x N complex matrices. A tangent
// vector at U has the form X U with X in su(N); the bi-invariant metric is the
// restriction of <A, B> = tr(B^* A).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace qspline {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kUnitarityTol = 1e-10;
inline constexpr double kTangencyTol = 1e-10;
inline constexpr double kLogGuard = 1e-6;

inline void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b,
                             const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(what) + ": dimension mismatch (" +
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + ")");
  }
}

inline bool all_finite(const ComplexMatrix& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const cplx z = a.data()[i];
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  }
  return true;
}

inline ComplexMatrix identity(int n) { return ComplexMatrix::Identity(n, n); }

// <A, B> = tr(B^* A)
inline cplx inner(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_dim(a, b, "inner");
  cplx s{0.0, 0.0};
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    s += std::conj(b.data()[i]) * a.data()[i];
  }
  return s;
}

inline double frob_norm(const ComplexMatrix& a) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += std::norm(a.data()[i]);
  return std::sqrt(s);
}

inline ComplexMatrix skew(const ComplexMatrix& a) {
  return 0.5 * (a - a.adjoint());
}

// Skew-Hermitian, trace-free part.
inline ComplexMatrix skew0(const ComplexMatrix& a) {
  ComplexMatrix s = skew(a);
  const cplx shift = s.trace() / static_cast<double>(s.rows());
  s.diagonal().array() -= shift;
  return s;
}

inline ComplexMatrix bracket(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_dim(a, b, "bracket");
  return a * b - b * a;
}

// Orthogonal projection of an ambient matrix Z onto T_U SU(N): skew0(Z U^*) U.
inline ComplexMatrix project_tangent(const ComplexMatrix& z,
                                     const ComplexMatrix& u) {
  require_same_dim(z, u, "project_tangent");
  return skew0(z * u.adjoint()) * u;
}

inline double unitarity_defect(const ComplexMatrix& u) {
  return frob_norm(u.adjoint() * u - identity(static_cast<int>(u.rows())));
}

/// Determinant through LU with partial pivoting.
inline cplx determinant(const ComplexMatrix& a) {
  return a.partialPivLu().determinant();
}

/// A matrix known to lie on SU(N) up to `kUnitarityTol`.
class UnitaryPoint {
 public:
  UnitaryPoint() = default;

  /// Validates unitarity, det = 1 and |U|_F = sqrt(N).
  explicit UnitaryPoint(ComplexMatrix m, double tol = kUnitarityTol)
      : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) {
      throw Error("UnitaryPoint: matrix must be square with dim >= 1");
    }
    if (!all_finite(m_)) throw Error("UnitaryPoint: non-finite entries");
    const double defect = unitarity_defect(m_);
    if (defect > tol) {
      throw Error("UnitaryPoint: |U*U - Id| = " + std::to_string(defect) +
                  " exceeds tolerance");
    }
    const double det_err = std::abs(determinant(m_) - cplx{1.0, 0.0});
    if (det_err > tol) {
      throw Error("UnitaryPoint: |det U - 1| = " + std::to_string(det_err) +
                  " exceeds tolerance");
    }
  }

  static UnitaryPoint identity_point(int n) {
    UnitaryPoint p;
    p.m_ = identity(n);
    return p;
  }

  // Skips validation; caller guarantees the invariants (retract, expm).
  static UnitaryPoint trusted(ComplexMatrix m) {
    UnitaryPoint p;
    p.m_ = std::move(m);
    return p;
  }

  const ComplexMatrix& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }

 private:
  ComplexMatrix m_;
};

/// Element of su(N): skew-Hermitian and traceless.
class AlgebraElement {
 public:
  AlgebraElement() = default;

  explicit AlgebraElement(ComplexMatrix m, double tol = kTangencyTol)
      : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) {
      throw Error("AlgebraElement: matrix must be square with dim >= 1");
    }
    const double scale = std::max(1.0, frob_norm(m_));
    if (frob_norm(m_ + m_.adjoint()) > tol * scale) {
      throw Error("AlgebraElement: matrix is not skew-Hermitian");
    }
    if (std::abs(m_.trace()) > tol * scale) {
      throw Error("AlgebraElement: matrix is not traceless");
    }
  }

  static AlgebraElement trusted(ComplexMatrix m) {
    AlgebraElement x;
    x.m_ = std::move(m);
    return x;
  }

  const ComplexMatrix& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }

 private:
  ComplexMatrix m_;
};

// R(X, Y) Z = -1/4 [[X, Y], Z] for the bi-invariant metric.
inline AlgebraElement curvature(const AlgebraElement& x, const AlgebraElement& y,
                                const AlgebraElement& z) {
  return AlgebraElement::trusted(
      -0.25 * bracket(bracket(x.matrix(), y.matrix()), z.matrix()));
}

// Same formula on raw matrices (right-trivialized tangent data).
inline ComplexMatrix curvature(const ComplexMatrix& x, const ComplexMatrix& y,
                               const ComplexMatrix& z) {
  return -0.25 * bracket(bracket(x, y), z);
}

struct HamiltonianResult {
  ComplexMatrix h;
  double hermiticity_residual = 0.0;
  double trace_residual = 0.0;
  bool projected = false;  // Ux was moved onto T_U before forming H
  bool flagged = false;    // a residual exceeded the diagnostic tolerance
};

/// H = i Ux U^*. Ux is first projected onto T_U when its tangency residual
/// exceeds `kTangencyTol`.
inline HamiltonianResult hamiltonian(const ComplexMatrix& u,
                                     const ComplexMatrix& ux,
                                     double diagnostic_tol = 1e-8) {
  require_same_dim(u, ux, "hamiltonian");
  HamiltonianResult r;
  ComplexMatrix v = ux;
  const ComplexMatrix pv = project_tangent(ux, u);
  if (frob_norm(pv - ux) > kTangencyTol * std::max(1.0, frob_norm(ux))) {
    v = pv;
    r.projected = true;
  }
  r.h = cplx{0.0, 1.0} * v * u.adjoint();
  r.hermiticity_residual = frob_norm(r.h - r.h.adjoint());
  r.trace_residual = std::abs(r.h.trace());
  r.flagged = r.hermiticity_residual > diagnostic_tol ||
              r.trace_residual > diagnostic_tol;
  return r;
}

/// Divides out the determinant phase so that det = 1 (for unitary input).
inline ComplexMatrix fix_determinant_phase(ComplexMatrix q) {
  const double theta = std::arg(determinant(q));
  q *= std::polar(1.0, -theta / static_cast<double>(q.rows()));
  return q;
}

/// Nearest point on SU(N): unitary polar factor, then det-phase correction.
inline UnitaryPoint retract(const ComplexMatrix& a) {
  if (!all_finite(a)) throw Error("retract: non-finite matrix");
  Eigen::JacobiSVD<ComplexMatrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  if (s.size() == 0 || s(s.size() - 1) <= 1e-12 * std::max(1.0, smax)) {
    throw Error("retract: matrix is singular");
  }
  return UnitaryPoint::trusted(
      fix_determinant_phase(svd.matrixU() * svd.matrixV().adjoint()));
}

/// Matrix exponential of a skew-Hermitian matrix through the spectral
/// decomposition of the Hermitian matrix -iX.
inline ComplexMatrix expm_skew(const ComplexMatrix& x) {
  const ComplexMatrix k = cplx{0.0, -1.0} * skew(x);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(k);
  const auto& lam = es.eigenvalues();
  Eigen::VectorXcd ph(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) ph(i) = std::polar(1.0, lam(i));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

inline UnitaryPoint expm(const AlgebraElement& x) {
  return UnitaryPoint::trusted(expm_skew(x.matrix()));
}

/// Principal logarithm of a special unitary matrix, returned in su(N).
///
/// Eigenphases are taken in (-pi, pi]. When they do not sum to zero the
/// largest (or smallest) phases are shifted by 2 pi so that the result is
/// traceless and still exponentiates to `u`. Throws when an eigenphase lies
/// within `guard` of pi, where the branch is ambiguous.
inline AlgebraElement logm(const UnitaryPoint& u, double guard = kLogGuard) {
  const int n = u.dim();
  // Unitary matrices are normal, so the Schur form is diagonal.
  Eigen::ComplexSchur<ComplexMatrix> schur(u.matrix());
  const ComplexMatrix& q = schur.matrixU();
  const ComplexMatrix& t = schur.matrixT();
  std::vector<double> phase(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    phase[i] = std::arg(t(i, i));
    if (std::numbers::pi - std::abs(phase[i]) < guard) {
      throw Error(
          "logm: eigenvalue phase within the cut-locus guard of pi; "
          "subdivide the knot sequence so consecutive unitaries are closer");
    }
    total += phase[i];
  }
  const long wraps = std::lround(total / (2.0 * std::numbers::pi));
  for (long w = 0; w < std::labs(wraps); ++w) {
    std::size_t pick = 0;
    for (std::size_t i = 1; i < phase.size(); ++i) {
      if (wraps > 0 ? phase[i] > phase[pick] : phase[i] < phase[pick]) pick = i;
    }
    phase[pick] += wraps > 0 ? -2.0 * std::numbers::pi : 2.0 * std::numbers::pi;
  }
  Eigen::VectorXcd d(n);
  for (int i = 0; i < n; ++i) d(i) = cplx{0.0, phase[i]};
  ComplexMatrix x = q * d.asDiagonal() * q.adjoint();
  return AlgebraElement::trusted(skew0(x));
}

/// Orthonormal basis of su(N) (i times the generalized Gell-Mann matrices,
/// scaled to unit Frobenius norm).
inline std::vector<ComplexMatrix> su_basis(int n) {
  std::vector<ComplexMatrix> out;
  const cplx I{0.0, 1.0};
  const double r = 1.0 / std::sqrt(2.0);
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k) {
      ComplexMatrix s = ComplexMatrix::Zero(n, n);
      s(j, k) = I * r;
      s(k, j) = I * r;
      out.push_back(s);
      ComplexMatrix a = ComplexMatrix::Zero(n, n);
      a(j, k) = r;
      a(k, j) = -r;
      out.push_back(a);
    }
  }
  for (int m = 1; m < n; ++m) {
    ComplexMatrix d = ComplexMatrix::Zero(n, n);
    const double c = 1.0 / std::sqrt(static_cast<double>(m * (m + 1)));
    for (int i = 0; i < m; ++i) d(i, i) = I * c;
    d(m, m) = -I * c * static_cast<double>(m);
    out.push_back(d);
  }
  return out;
}

/// Pauli matrices, handy for SU(2) work.
inline ComplexMatrix pauli_x() {
  ComplexMatrix s(2, 2);
  s << 0.0, 1.0, 1.0, 0.0;
  return s;
}
inline ComplexMatrix pauli_y() {
  ComplexMatrix s(2, 2);
  s << 0.0, cplx{0.0, -1.0}, cplx{0.0, 1.0}, 0.0;
  return s;
}
inline ComplexMatrix pauli_z() {
  ComplexMatrix s(2, 2);
  s << 1.0, 0.0, 0.0, -1.0;
  return s;
}

}  // namespace qspline
