#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mrtl/grid.hpp"
#include "mrtl/tensor.hpp"

namespace mrtl {

// One encoded frame: one-hot primary position, multi-hot context occupancy,
// and a +/-1 label per task (observed where task_mask is set).
struct Example {
  FeatureVector phi;  // dim = grid_b cells
  FeatureVector psi;  // dim = grid_c cells
  std::vector<std::int8_t> labels;
  std::vector<std::uint8_t> task_mask;
};

struct RegConfig {
  double l2_dense = 0.0;
  double l1_sparse = 0.0;
};

// Dense order-3 weight tensor over (task, primary cell, context cell), plus
// per-task bias.
struct FullTensorModel {
  DenseTensor3 weights;
  Eigen::VectorXd bias;
  Grid grid_b;
  Grid grid_c;

  int n_tasks() const { return weights.na; }
  static FullTensorModel zeros(int n_tasks, const Grid& gb, const Grid& gc);
};

// Low-rank + sparse pair of CP factor sets sharing task dimension and grids.
// The dense set carries L2 regularization, the sparse set L1.
struct FactoredModel {
  CPFactors dense;   // A, B, C
  CPFactors sparse;  // Us, Vs, Ws
  Eigen::VectorXd bias;
  Grid grid_b;
  Grid grid_c;

  int n_tasks() const { return dense.na(); }
  static FactoredModel random_init(int n_tasks, const Grid& gb, const Grid& gc, int rank_dense,
                                   int rank_sparse, std::uint64_t seed);
};

// Contiguous view of one named parameter array. Blocks enumerate a model's
// parameters in a fixed order; flat gradients and checkpoints use the same
// order.
struct ParamBlock {
  std::string name;
  double* data;
  std::size_t size;
  bool spatial_b = false;  // rows indexed by grid_b cells
  bool spatial_c = false;  // rows indexed by grid_c cells
};

std::vector<ParamBlock> param_blocks(FullTensorModel& m);
std::vector<ParamBlock> param_blocks(FactoredModel& m);

std::size_t param_count(const FullTensorModel& m);
std::size_t param_count(const FactoredModel& m);

std::vector<double> flatten_params(FullTensorModel& m);
std::vector<double> flatten_params(FactoredModel& m);
void unflatten_params(FullTensorModel& m, std::span<const double> flat);
void unflatten_params(FactoredModel& m, std::span<const double> flat);

Eigen::VectorXd forward_full(const FullTensorModel& m, const Example& e);
Eigen::VectorXd forward_factored(const FactoredModel& m, const Example& e);

Eigen::VectorXd predict_prob(const FullTensorModel& m, const Example& e);
Eigen::VectorXd predict_prob(const FactoredModel& m, const Example& e);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // flat, param_blocks order
};

// Mean logistic loss over observed (example, task) pairs plus regularization:
// L2 on the dense parameters, L1 on the sparse factors (|x|' taken as 0 at 0).
// Gradients are exact. n_shards > 1 evaluates the batch in equal contiguous
// shards on separate threads and sums shard results in shard order, which is
// deterministic for a fixed shard count.
LossGrad loss_and_grad(const FullTensorModel& m, std::span<const Example> batch,
                       const RegConfig& reg, int n_shards = 1);
LossGrad loss_and_grad(const FactoredModel& m, std::span<const Example> batch,
                       const RegConfig& reg, int n_shards = 1);

// Loss only (no gradient); used for evaluation passes.
double mean_loss(const FullTensorModel& m, std::span<const Example> batch, int n_shards = 1);
double mean_loss(const FactoredModel& m, std::span<const Example> batch, int n_shards = 1);

double sigmoid(double x);
// -log sigmoid(x), computed stably.
double softplus_neg(double x);

}  // namespace mrtl
