#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

namespace mrtl {

// Dense order-3 tensor, values laid out row-major by (a, b, c).
struct DenseTensor3 {
  int na = 0, mb = 0, mc = 0;
  std::vector<double> values;

  DenseTensor3() = default;
  DenseTensor3(int na_, int mb_, int mc_)
      : na(na_), mb(mb_), mc(mc_), values(static_cast<std::size_t>(na_) * mb_ * mc_, 0.0) {}

  std::size_t size() const { return values.size(); }
  std::size_t offset(int a, int b, int c) const {
    return (static_cast<std::size_t>(a) * mb + b) * mc + c;
  }
  double& operator()(int a, int b, int c) { return values[offset(a, b, c)]; }
  double operator()(int a, int b, int c) const { return values[offset(a, b, c)]; }

  double frobenius_norm() const;
};

// CP factor set: W_abc = sum_k A(a,k) B(b,k) C(c,k).
struct CPFactors {
  Eigen::MatrixXd A;  // na x K
  Eigen::MatrixXd B;  // mb x K
  Eigen::MatrixXd C;  // mc x K

  int rank() const { return static_cast<int>(A.cols()); }
  int na() const { return static_cast<int>(A.rows()); }
  int mb() const { return static_cast<int>(B.rows()); }
  int mc() const { return static_cast<int>(C.rows()); }

  static CPFactors zeros(int na, int mb, int mc, int rank);
  // Euclidean norm of rank-one component k: |a_k| |b_k| |c_k|.
  double component_norm(int k) const;
};

DenseTensor3 cp_reconstruct(const CPFactors& f);

struct CpAlsResult {
  CPFactors factors;
  double fit = 0.0;    // 1 - ||T - reconstruct|| / ||T||
  int sweeps = 0;
  std::vector<double> residual_history;  // relative residual after each sweep
};

// Alternating least squares fit of a rank-`rank` CP model. Factors are
// initialized iid uniform(-0.5, 0.5) from `seed`; per-mode normal equations
// get a 1e-9 Tikhonov jitter on the Gram matrix. Stops when the fit improves
// by less than `tol` between sweeps or after `max_iters` sweeps. A zero
// input tensor short-circuits to zero factors with fit 1.
CpAlsResult cp_als(const DenseTensor3& t, int rank, int max_iters, double tol,
                   std::uint64_t seed);

// ||t - cp_reconstruct(f)||_F / max(||t||_F, eps-floor)
double relative_residual(const DenseTensor3& t, const CPFactors& f);

// Split a fitted factor set into two by component norm: the `first_rank`
// largest-norm components (stable order) go to the first set, the rest to
// the second. Used to seed the dense + sparse factor pair from one fit.
std::pair<CPFactors, CPFactors> split_by_component_norm(const CPFactors& f, int first_rank);

}  // namespace mrtl
