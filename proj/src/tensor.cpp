#include "mrtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mrtl/rng.hpp"

namespace mrtl {

namespace {

constexpr double kGramJitter = 1e-9;
constexpr double kNormFloor = 1e-300;

void check_dims(const DenseTensor3& t, const CPFactors& f) {
  if (f.na() != t.na || f.mb() != t.mb || f.mc() != t.mc)
    throw std::invalid_argument("tensor/factor dimension mismatch");
}

// MTTKRP for each mode of a dense tensor. K is small, so a single pass over
// the tensor entries per mode is fine at the sizes we factorize.
Eigen::MatrixXd mttkrp_mode0(const DenseTensor3& t, const Eigen::MatrixXd& B,
                             const Eigen::MatrixXd& C) {
  const int K = static_cast<int>(B.cols());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(t.na, K);
  std::size_t idx = 0;
  for (int a = 0; a < t.na; ++a)
    for (int b = 0; b < t.mb; ++b)
      for (int c = 0; c < t.mc; ++c, ++idx) {
        const double v = t.values[idx];
        if (v == 0.0) continue;
        for (int k = 0; k < K; ++k) M(a, k) += v * B(b, k) * C(c, k);
      }
  return M;
}

Eigen::MatrixXd mttkrp_mode1(const DenseTensor3& t, const Eigen::MatrixXd& A,
                             const Eigen::MatrixXd& C) {
  const int K = static_cast<int>(A.cols());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(t.mb, K);
  std::size_t idx = 0;
  for (int a = 0; a < t.na; ++a)
    for (int b = 0; b < t.mb; ++b)
      for (int c = 0; c < t.mc; ++c, ++idx) {
        const double v = t.values[idx];
        if (v == 0.0) continue;
        for (int k = 0; k < K; ++k) M(b, k) += v * A(a, k) * C(c, k);
      }
  return M;
}

Eigen::MatrixXd mttkrp_mode2(const DenseTensor3& t, const Eigen::MatrixXd& A,
                             const Eigen::MatrixXd& B) {
  const int K = static_cast<int>(A.cols());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(t.mc, K);
  std::size_t idx = 0;
  for (int a = 0; a < t.na; ++a)
    for (int b = 0; b < t.mb; ++b)
      for (int c = 0; c < t.mc; ++c, ++idx) {
        const double v = t.values[idx];
        if (v == 0.0) continue;
        for (int k = 0; k < K; ++k) M(c, k) += v * A(a, k) * B(b, k);
      }
  return M;
}

// Solve X (G + jitter I) = M for X, i.e. the normal equations of one ALS
// subproblem with Gram matrix G.
Eigen::MatrixXd solve_mode(const Eigen::MatrixXd& M, Eigen::MatrixXd G) {
  G.diagonal().array() += kGramJitter;
  return G.ldlt().solve(M.transpose()).transpose();
}

}  // namespace

double DenseTensor3::frobenius_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

CPFactors CPFactors::zeros(int na, int mb, int mc, int rank) {
  return {Eigen::MatrixXd::Zero(na, rank), Eigen::MatrixXd::Zero(mb, rank),
          Eigen::MatrixXd::Zero(mc, rank)};
}

double CPFactors::component_norm(int k) const {
  return A.col(k).norm() * B.col(k).norm() * C.col(k).norm();
}

DenseTensor3 cp_reconstruct(const CPFactors& f) {
  DenseTensor3 t(f.na(), f.mb(), f.mc());
  const int K = f.rank();
  std::size_t idx = 0;
  for (int a = 0; a < t.na; ++a)
    for (int b = 0; b < t.mb; ++b)
      for (int c = 0; c < t.mc; ++c, ++idx) {
        double v = 0.0;
        for (int k = 0; k < K; ++k) v += f.A(a, k) * f.B(b, k) * f.C(c, k);
        t.values[idx] = v;
      }
  return t;
}

double relative_residual(const DenseTensor3& t, const CPFactors& f) {
  check_dims(t, f);
  const DenseTensor3 rec = cp_reconstruct(f);
  double err = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t.values[i] - rec.values[i];
    err += d * d;
  }
  return std::sqrt(err) / std::max(t.frobenius_norm(), kNormFloor);
}

CpAlsResult cp_als(const DenseTensor3& t, int rank, int max_iters, double tol,
                   std::uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("cp_als: rank must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("cp_als: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("cp_als: tol must be > 0");

  CpAlsResult res;
  const double tnorm = t.frobenius_norm();
  if (tnorm == 0.0) {
    res.factors = CPFactors::zeros(t.na, t.mb, t.mc, rank);
    res.fit = 1.0;
    return res;
  }

  Rng rng(seed);
  auto init = [&](int n) {
    Eigen::MatrixXd m(n, rank);
    for (int j = 0; j < rank; ++j)
      for (int i = 0; i < n; ++i) m(i, j) = rng.uniform(-0.5, 0.5);
    return m;
  };
  CPFactors f{init(t.na), init(t.mb), init(t.mc)};

  double prev_fit = -1.0;
  for (int sweep = 1; sweep <= max_iters; ++sweep) {
    f.A = solve_mode(mttkrp_mode0(t, f.B, f.C),
                     (f.B.transpose() * f.B).cwiseProduct(f.C.transpose() * f.C));
    f.B = solve_mode(mttkrp_mode1(t, f.A, f.C),
                     (f.A.transpose() * f.A).cwiseProduct(f.C.transpose() * f.C));
    f.C = solve_mode(mttkrp_mode2(t, f.A, f.B),
                     (f.A.transpose() * f.A).cwiseProduct(f.B.transpose() * f.B));

    const double rel = relative_residual(t, f);
    res.residual_history.push_back(rel);
    const double fit = 1.0 - rel;
    res.sweeps = sweep;
    if (sweep > 1 && std::abs(fit - prev_fit) < tol) {
      prev_fit = fit;
      break;
    }
    prev_fit = fit;
  }
  res.fit = prev_fit;
  res.factors = std::move(f);
  return res;
}

std::pair<CPFactors, CPFactors> split_by_component_norm(const CPFactors& f, int first_rank) {
  const int K = f.rank();
  if (first_rank < 0 || first_rank > K)
    throw std::invalid_argument("split_by_component_norm: first_rank out of range");
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return f.component_norm(i) > f.component_norm(j);
  });

  auto take = [&](int from, int count) {
    CPFactors out = CPFactors::zeros(f.na(), f.mb(), f.mc(), count);
    for (int j = 0; j < count; ++j) {
      const int k = order[from + j];
      out.A.col(j) = f.A.col(k);
      out.B.col(j) = f.B.col(k);
      out.C.col(j) = f.C.col(k);
    }
    return out;
  };
  return {take(0, first_rank), take(first_rank, K - first_rank)};
}

}  // namespace mrtl
