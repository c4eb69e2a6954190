/*
 * Copyright 2026 The balsub Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Main-effects ANOVA model on categorical rows: model-matrix coding, OLS
// fits on subsamples and information-matrix diagnostics.
//
// Two codings of the same column space are provided:
//   dummy        intercept + (q_j - 1) indicators per covariate, code 0 is
//                the reference level;
//   orthonormal  intercept + scaled Helmert contrasts, so that over the full
//                factorial C'C = (prod q_j) I and every coded row has
//                1 + sum of squared contrasts = q_j per covariate block.
// Leverages and fitted values do not depend on the coding.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "balsub/criterion.hpp"
#include "balsub/dataset.hpp"

namespace balsub {

enum class Coding { dummy, orthonormal };

inline const char* to_string(Coding c) { return c == Coding::dummy ? "dummy" : "orthonormal"; }

/// Where a model-matrix column comes from. covariate < 0 marks the intercept.
struct ColumnRole {
  int covariate = -1;
  std::uint32_t component = 0;

  bool operator==(const ColumnRole&) const = default;
};

struct CodedMatrix {
  Eigen::MatrixXd values;
  Coding coding = Coding::dummy;
  std::vector<ColumnRole> column_map;
};

// Relative singular-value threshold below which a fit is declared singular.
inline constexpr double kSingularTolerance = 1e-10;

// Largest level-combination domain enumerated exactly.
inline constexpr std::size_t kEnumerationCap = 1'000'000;

/// Normalized Helmert basis of the complement of the all-ones vector,
/// scaled by sqrt(q): a q x (q-1) matrix H with zero column sums and
/// H'H = q I. Column k (0-based) contrasts levels 0..k against level k+1.
inline Eigen::MatrixXd helmert_contrasts(std::uint32_t q) {
  if (q < 2) throw std::invalid_argument("contrasts need at least two levels");
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(q, q - 1);
  const double scale = std::sqrt(static_cast<double>(q));
  for (std::uint32_t k = 1; k < q; ++k) {
    const double norm = std::sqrt(static_cast<double>(k) * (k + 1));
    for (std::uint32_t u = 0; u < k; ++u) h(u, k - 1) = scale / norm;
    h(k, k - 1) = -scale * k / norm;
  }
  return h;
}

/// Codes single rows; holds the contrast tables so repeated coding (for
/// example over the whole level domain) does not rebuild them.
class RowCoder {
 public:
  RowCoder(const LevelSpec& spec, Coding coding) : spec_(spec), coding_(coding) {
    spec_.validate();
    if (coding_ == Coding::orthonormal) {
      for (auto q : spec_.q) contrasts_.push_back(helmert_contrasts(q));
    }
  }

  std::size_t width() const noexcept { return spec_.num_params(); }
  Coding coding() const noexcept { return coding_; }
  const LevelSpec& spec() const noexcept { return spec_; }

  template <typename Out>
  void code(std::span<const Level> row, Out&& out) const {
    out.setZero();
    out(0) = 1.0;
    std::size_t off = 1;
    for (std::size_t j = 0; j < spec_.p(); ++j) {
      const Level u = row[j];
      if (u >= spec_.q[j]) {
        throw DataError("level code " + std::to_string(u) + " out of range for covariate " +
                        std::to_string(j));
      }
      const std::size_t width = spec_.q[j] - 1;
      if (coding_ == Coding::dummy) {
        if (u > 0) out(off + u - 1) = 1.0;
      } else {
        for (std::size_t l = 0; l < width; ++l) out(off + l) = contrasts_[j](u, l);
      }
      off += width;
    }
  }

  Eigen::VectorXd code(std::span<const Level> row) const {
    Eigen::VectorXd z(width());
    code(row, z);
    return z;
  }

  std::vector<ColumnRole> column_map() const {
    std::vector<ColumnRole> map{ColumnRole{}};
    for (std::size_t j = 0; j < spec_.p(); ++j) {
      for (std::uint32_t l = 0; l + 1 < spec_.q[j]; ++l) {
        map.push_back(ColumnRole{static_cast<int>(j), l});
      }
    }
    return map;
  }

 private:
  LevelSpec spec_;
  Coding coding_;
  std::vector<Eigen::MatrixXd> contrasts_;
};

inline CodedMatrix code_rows(std::span<const Level> rows, const LevelSpec& spec, Coding coding) {
  const RowCoder coder(spec, coding);
  const std::size_t p = spec.p();
  if (rows.size() % p != 0) throw std::invalid_argument("row storage is not a multiple of p");
  const std::size_t n = rows.size() / p;
  CodedMatrix out;
  out.coding = coding;
  out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(coder.width()));
  for (std::size_t i = 0; i < n; ++i) {
    coder.code(rows.subspan(i * p, p), out.values.row(static_cast<Eigen::Index>(i)));
  }
  out.column_map = coder.column_map();
  return out;
}

inline CodedMatrix dummy_code(std::span<const Level> rows, const LevelSpec& spec) {
  return code_rows(rows, spec, Coding::dummy);
}
inline CodedMatrix dummy_code(const Subsample& s, const LevelSpec& spec) {
  return dummy_code(s.levels(), spec);
}
inline CodedMatrix orthonormal_code(std::span<const Level> rows, const LevelSpec& spec) {
  return code_rows(rows, spec, Coding::orthonormal);
}
inline CodedMatrix orthonormal_code(const Subsample& s, const LevelSpec& spec) {
  return orthonormal_code(s.levels(), spec);
}

/// Least-squares fit of a coded subsample.
struct OlsFit {
  Eigen::VectorXd beta_hat;     // empty when singular
  Eigen::MatrixXd info_matrix;  // Z'Z
  double min_singular_value = 0.0;
  double max_singular_value = 0.0;
  bool singular = true;
  Coding coding = Coding::dummy;
};

/// Solves min ||Z b - y|| by SVD. Rank deficiency (smallest singular value
/// below kSingularTolerance times the largest, or fewer rows than columns)
/// is reported through OlsFit::singular.
inline OlsFit fit_ols(const CodedMatrix& Z, std::span<const double> y) {
  const auto n = Z.values.rows();
  const auto Q = Z.values.cols();
  if (static_cast<std::size_t>(n) != y.size()) {
    throw std::invalid_argument("response has " + std::to_string(y.size()) + " values for " +
                                std::to_string(n) + " coded rows");
  }
  OlsFit fit;
  fit.coding = Z.coding;
  fit.info_matrix = Z.values.transpose() * Z.values;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z.values, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  fit.max_singular_value = sv.size() ? sv.maxCoeff() : 0.0;
  fit.min_singular_value = n < Q ? 0.0 : sv.minCoeff();
  fit.singular = n < Q || !(fit.min_singular_value > kSingularTolerance * fit.max_singular_value);
  if (!fit.singular) {
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    const Eigen::VectorXd uty = svd.matrixU().transpose() * yv;
    fit.beta_hat = svd.matrixV() * uty.cwiseQuotient(sv);
  }
  return fit;
}

/// det(Z'Z). Bounded by n^Q under orthonormal coding, with equality for
/// orthogonal arrays.
inline double d_criterion(const CodedMatrix& Z) {
  if (Z.coding != Coding::orthonormal) {
    throw std::invalid_argument("d_criterion expects orthonormal coding");
  }
  const Eigen::MatrixXd M = Z.values.transpose() * Z.values;
  const double det = M.determinant();
#ifndef NDEBUG
  const double bound = std::pow(static_cast<double>(Z.values.rows()), static_cast<double>(M.rows()));
  if (std::isfinite(bound) && det > bound * (1.0 + 1e-6)) {
    throw std::logic_error("determinant exceeds n^Q");
  }
#endif
  return det;
}

/// log det(Z'Z) from the singular values of Z; -inf when the fit would be
/// reported singular. Usable where det itself would overflow.
inline double log_d_criterion(const CodedMatrix& Z) {
  if (Z.values.rows() < Z.values.cols()) return -std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z.values);
  const auto& sv = svd.singularValues();
  if (!(sv.minCoeff() > kSingularTolerance * sv.maxCoeff())) {
    return -std::numeric_limits<double>::infinity();
  }
  return 2.0 * sv.array().log().sum();
}

namespace detail {

// Visits every level combination in lexicographic order (last covariate
// fastest).
template <typename Visit>
void for_each_combination(const LevelSpec& spec, Visit&& visit) {
  std::vector<Level> x(spec.p(), 0);
  while (true) {
    visit(std::span<const Level>(x));
    std::size_t j = spec.p();
    while (j > 0) {
      --j;
      if (++x[j] < spec.q[j]) break;
      x[j] = 0;
      if (j == 0) return;
    }
  }
}

}  // namespace detail

struct LeverageResult {
  double value = 0.0;
  bool full_domain = true;
  std::size_t points = 0;
  std::vector<Level> argmax;
};

/// max over level combinations x of z' M^{-1} z, z the coding of x under
/// the fit's coding. The whole domain is enumerated when it has at most
/// cap points; otherwise the maximum is taken over the distinct rows of
/// fallback and the result is flagged partial.
inline LeverageResult max_leverage(const OlsFit& fit, const LevelSpec& spec,
                                   const Dataset* fallback = nullptr,
                                   std::size_t cap = kEnumerationCap) {
  if (fit.singular) throw std::invalid_argument("max_leverage needs a nonsingular fit");
  const RowCoder coder(spec, fit.coding);
  if (static_cast<std::size_t>(fit.info_matrix.rows()) != coder.width()) {
    throw std::invalid_argument("fit does not match the level spec");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(fit.info_matrix);
  if (llt.info() != Eigen::Success) throw std::runtime_error("information matrix not positive definite");
  // w = L^{-1}, so z' M^{-1} z = ||w z||^2.
  const Eigen::MatrixXd w =
      llt.matrixL().solve(Eigen::MatrixXd::Identity(fit.info_matrix.rows(), fit.info_matrix.cols()));

  LeverageResult out;
  out.value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd z(coder.width());
  auto visit = [&](std::span<const Level> x) {
    coder.code(x, z);
    const double h = (w * z).squaredNorm();
    ++out.points;
    if (h > out.value) {
      out.value = h;
      out.argmax.assign(x.begin(), x.end());
    }
  };
  if (spec.domain_size() <= cap) {
    detail::for_each_combination(spec, visit);
  } else {
    if (fallback == nullptr) {
      throw std::invalid_argument("level domain exceeds the enumeration cap and no data was given");
    }
    out.full_domain = false;
    for (std::size_t i = 0; i < fallback->size(); ++i) visit(fallback->row(i));
  }
  return out;
}

/// Lower bound on the smallest eigenvalue of the dummy information matrix,
/// n nu (1 - f), with nu the smallest eigenvalue of P'P where P maps the
/// orthonormal coding to the dummy coding over the full factorial.
struct NonsingularityBound {
  double lambda_min = 0.0;  // smallest eigenvalue of Z_s'Z_s, dummy coding
  double nu = 0.0;
  double f = 0.0;
  double bound = 0.0;  // n nu (1 - f)
};

inline NonsingularityBound nonsingularity_bound(const Subsample& s, const LevelSpec& spec,
                                                std::size_t cap = kEnumerationCap) {
  const std::size_t domain = spec.domain_size();
  if (domain > cap) throw std::invalid_argument("level domain exceeds the enumeration cap");
  std::vector<Level> all;
  all.reserve(domain * spec.p());
  detail::for_each_combination(spec, [&](std::span<const Level> x) {
    all.insert(all.end(), x.begin(), x.end());
  });
  const CodedMatrix Zfull = dummy_code(all, spec);
  const CodedMatrix Cfull = orthonormal_code(all, spec);
  // C'C = N I, hence P = C' Z / N.
  const Eigen::MatrixXd P = Cfull.values.transpose() * Zfull.values / static_cast<double>(domain);

  NonsingularityBound out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ptp(P.transpose() * P, Eigen::EigenvaluesOnly);
  out.nu = ptp.eigenvalues().minCoeff();
  const CodedMatrix Zs = dummy_code(s, spec);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ms(Zs.values.transpose() * Zs.values,
                                                    Eigen::EigenvaluesOnly);
  out.lambda_min = ms.eigenvalues().minCoeff();
  out.f = f_direct(balance_stats(s, spec));
  out.bound = static_cast<double>(s.size()) * out.nu * (1.0 - out.f);
  return out;
}

/// Information-matrix diagnostics of one subsample.
struct Diagnostics {
  std::size_t n = 0;
  std::size_t Q = 0;
  double f = 0.0;
  bool oa = false;
  bool singular = true;
  double min_singular_value = 0.0;
  double log_det_orthonormal = 0.0;
  double log_det_bound = 0.0;  // Q log n
  std::optional<LeverageResult> leverage;
  double leverage_bound = 0.0;  // Q / n

  double det_orthonormal() const { return std::exp(log_det_orthonormal); }
  double det_bound() const { return std::exp(log_det_bound); }
  double det_ratio() const { return std::exp(log_det_orthonormal - log_det_bound); }
  std::optional<double> leverage_ratio() const {
    if (!leverage) return std::nullopt;
    return leverage->value / leverage_bound;
  }
};

inline Diagnostics diagnose(const Subsample& s, const LevelSpec& spec,
                            const Dataset* fallback = nullptr) {
  Diagnostics d;
  d.n = s.size();
  d.Q = spec.num_params();
  const BalanceStats stats = balance_stats(s, spec);
  d.f = f_direct(stats);
  d.oa = is_orthogonal_array(stats);
  const CodedMatrix C = orthonormal_code(s, spec);
  const std::vector<double> zeros(s.size(), 0.0);
  const OlsFit fit = fit_ols(C, zeros);
  d.singular = fit.singular;
  d.min_singular_value = fit.min_singular_value;
  d.log_det_orthonormal = log_d_criterion(C);
  d.log_det_bound = static_cast<double>(d.Q) * std::log(static_cast<double>(d.n));
  d.leverage_bound = static_cast<double>(d.Q) / static_cast<double>(d.n);
  if (!fit.singular) d.leverage = max_leverage(fit, spec, fallback);
  return d;
}

}  // namespace balsub
