#pragma once

// Real banded matrix with LU factorization (partial pivoting) and complex
// right-hand sides. Storage follows the LAPACK gbtrf layout: kl extra rows are
// reserved above the band for fill-in created by row interchanges.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qspline {

class BandedMatrix {
 public:
  BandedMatrix() = default;
  BandedMatrix(int n, int kl, int ku)
      : n_(n), kl_(kl), ku_(ku), ld_(2 * kl + ku + 1),
        ab_(static_cast<std::size_t>(ld_) * static_cast<std::size_t>(n), 0.0) {}

  int size() const { return n_; }
  int lower() const { return kl_; }
  int upper() const { return ku_; }

  bool in_band(int i, int j) const {
    return i >= 0 && j >= 0 && i < n_ && j < n_ && i - j <= kl_ && j - i <= ku_;
  }

  double& at(int i, int j) {
    if (!in_band(i, j)) throw std::out_of_range("BandedMatrix: entry outside band");
    return ab_[idx(i, j)];
  }
  double get(int i, int j) const { return in_band(i, j) ? ab_[idx(i, j)] : 0.0; }

  void clear_row(int i) {
    for (int j = std::max(0, i - kl_); j <= std::min(n_ - 1, i + ku_); ++j) at(i, j) = 0.0;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = std::max(0, i - kl_); j <= std::min(n_ - 1, i + ku_); ++j) d(i, j) = get(i, j);
    return d;
  }

 private:
  friend class BandedLU;
  // Row (kl + ku + i - j) of column j in the LAPACK band layout.
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(ld_) +
           static_cast<std::size_t>(kl_ + ku_ + i - j);
  }
  double& raw(int i, int j) { return ab_[idx(i, j)]; }
  double raw(int i, int j) const { return ab_[idx(i, j)]; }

  int n_ = 0, kl_ = 0, ku_ = 0, ld_ = 1;
  std::vector<double> ab_;
};

/// LU factors of a banded matrix. Pivot order is fixed at factorization, so
/// repeated solves are bit-for-bit reproducible.
class BandedLU {
 public:
  BandedLU() = default;

  explicit BandedLU(BandedMatrix a) : a_(std::move(a)) { factor(); }

  int size() const { return a_.n_; }

  /// Solves A x = b in place for a complex vector (real and imaginary parts
  /// share the real factors).
  template <typename Vec>
  void solve_in_place(Vec& b) const {
    const int n = a_.n_, kl = a_.kl_, kv = a_.kl_ + a_.ku_;
    for (int j = 0; j < n; ++j) {
      const int p = piv_[static_cast<std::size_t>(j)];
      if (p != j) std::swap(b[p], b[j]);
      const int last = std::min(n - 1, j + kl);
      for (int i = j + 1; i <= last; ++i) b[i] -= a_.raw(i, j) * b[j];
    }
    for (int j = n - 1; j >= 0; --j) {
      b[j] /= a_.raw(j, j);
      const int first = std::max(0, j - kv);
      for (int i = first; i < j; ++i) b[i] -= a_.raw(i, j) * b[j];
    }
  }

 private:
  void factor() {
    const int n = a_.n_, kl = a_.kl_, ku = a_.ku_;
    const int kv = kl + ku;
    piv_.assign(static_cast<std::size_t>(n), 0);
    double scale = 0.0;
    for (double v : a_.ab_) scale = std::max(scale, std::abs(v));
    for (int j = 0; j < n; ++j) {
      const int last = std::min(n - 1, j + kl);
      int p = j;
      double best = std::abs(a_.raw(j, j));
      for (int i = j + 1; i <= last; ++i) {
        if (std::abs(a_.raw(i, j)) > best) {
          best = std::abs(a_.raw(i, j));
          p = i;
        }
      }
      piv_[static_cast<std::size_t>(j)] = p;
      if (best <= 1e-14 * std::max(1.0, scale)) {
        throw std::runtime_error("BandedLU: matrix is numerically singular");
      }
      const int cend = std::min(n - 1, j + kv);
      if (p != j) {
        for (int c = j; c <= cend; ++c) std::swap(a_.raw(p, c), a_.raw(j, c));
      }
      const double pivot = a_.raw(j, j);
      for (int i = j + 1; i <= last; ++i) {
        const double m = a_.raw(i, j) / pivot;
        a_.raw(i, j) = m;
        if (m == 0.0) continue;
        for (int c = j + 1; c <= cend; ++c) a_.raw(i, c) -= m * a_.raw(j, c);
      }
    }
  }

  BandedMatrix a_;
  std::vector<int> piv_;
};

}  // namespace qspline
