#pragma once

// LU factorisation without pivoting for banded, row-diagonally-dominant
// M-matrices (the implicit diffusion operator), with a multi-right-hand-side
// solve on row-major blocks so the inner loops run over contiguous columns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace tickopt::detail {

class BandedLU {
public:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };

  BandedLU() = default;

  /// Factor the n x n matrix given as a coordinate list (duplicates are summed).
  BandedLU(std::size_t n, std::span<const Entry> entries) : n_(n) {
    for (const auto& e : entries) {
      const auto d = static_cast<std::int64_t>(e.col) - static_cast<std::int64_t>(e.row);
      bw_ = std::max<std::size_t>(bw_, static_cast<std::size_t>(std::abs(d)));
    }
    const std::size_t w = 2 * bw_ + 1;
    std::vector<double> band(n_ * w, 0.0);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return band[i * w + (j + bw_ - i)]; };
    for (const auto& e : entries) at(e.row, e.col) += e.value;

    for (std::size_t k = 0; k < n_; ++k) {
      const double pivot = at(k, k);
      if (!(std::abs(pivot) > 0)) throw std::runtime_error("banded LU: zero pivot");
      const std::size_t last = std::min(n_ - 1, k + bw_);
      for (std::size_t i = k + 1; i <= last; ++i) {
        double& lik = at(i, k);
        if (lik == 0) continue;
        lik /= pivot;
        for (std::size_t j = k + 1; j <= last; ++j) at(i, j) -= lik * at(k, j);
      }
    }

    lower_start_.assign(n_ + 1, 0);
    upper_start_.assign(n_ + 1, 0);
    diag_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t lo = i >= bw_ ? i - bw_ : 0;
      const std::size_t hi = std::min(n_ - 1, i + bw_);
      for (std::size_t j = lo; j < i; ++j)
        if (at(i, j) != 0) lower_.push_back({j, at(i, j)});
      for (std::size_t j = i + 1; j <= hi; ++j)
        if (at(i, j) != 0) upper_.push_back({j, at(i, j)});
      diag_[i] = at(i, i);
      lower_start_[i + 1] = lower_.size();
      upper_start_[i + 1] = upper_.size();
    }
  }

  std::size_t size() const { return n_; }
  std::size_t bandwidth() const { return bw_; }

  /// Solve in place; x is row-major n x ncols.
  void solve(std::span<double> x, std::size_t ncols) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double* xi = x.data() + i * ncols;
      for (std::size_t k = lower_start_[i]; k < lower_start_[i + 1]; ++k) {
        const double l = lower_[k].value;
        const double* xj = x.data() + lower_[k].col * ncols;
        for (std::size_t c = 0; c < ncols; ++c) xi[c] -= l * xj[c];
      }
    }
    for (std::size_t i = n_; i-- > 0;) {
      double* xi = x.data() + i * ncols;
      for (std::size_t k = upper_start_[i]; k < upper_start_[i + 1]; ++k) {
        const double u = upper_[k].value;
        const double* xj = x.data() + upper_[k].col * ncols;
        for (std::size_t c = 0; c < ncols; ++c) xi[c] -= u * xj[c];
      }
      const double inv = 1.0 / diag_[i];
      for (std::size_t c = 0; c < ncols; ++c) xi[c] *= inv;
    }
  }

private:
  struct Coef {
    std::size_t col;
    double value;
  };

  std::size_t n_ = 0;
  std::size_t bw_ = 0;
  std::vector<Coef> lower_;
  std::vector<Coef> upper_;
  std::vector<std::size_t> lower_start_;
  std::vector<std::size_t> upper_start_;
  std::vector<double> diag_;
};

} // namespace tickopt::detail
