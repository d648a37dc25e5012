#include "mrtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "mrtl/rng.hpp"

namespace mrtl {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double softplus_neg(double x) {
  // -log sigmoid(x) = log(1 + exp(-x))
  return x > 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

FullTensorModel FullTensorModel::zeros(int n_tasks, const Grid& gb, const Grid& gc) {
  FullTensorModel m;
  m.weights = DenseTensor3(n_tasks, gb.cell_count(), gc.cell_count());
  m.bias = Eigen::VectorXd::Zero(n_tasks);
  m.grid_b = gb;
  m.grid_c = gc;
  return m;
}

FactoredModel FactoredModel::random_init(int n_tasks, const Grid& gb, const Grid& gc,
                                         int rank_dense, int rank_sparse, std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-0.5, 0.5);
  };
  FactoredModel m;
  m.dense = CPFactors::zeros(n_tasks, gb.cell_count(), gc.cell_count(), rank_dense);
  m.sparse = CPFactors::zeros(n_tasks, gb.cell_count(), gc.cell_count(), rank_sparse);
  fill(m.dense.A);
  fill(m.dense.B);
  fill(m.dense.C);
  fill(m.sparse.A);
  fill(m.sparse.B);
  fill(m.sparse.C);
  m.bias = Eigen::VectorXd::Zero(n_tasks);
  m.grid_b = gb;
  m.grid_c = gc;
  return m;
}

std::vector<ParamBlock> param_blocks(FullTensorModel& m) {
  return {
      {"weights", m.weights.values.data(), m.weights.size(), false, false},
      {"bias", m.bias.data(), static_cast<std::size_t>(m.bias.size()), false, false},
  };
}

std::vector<ParamBlock> param_blocks(FactoredModel& m) {
  auto mat = [](const char* name, Eigen::MatrixXd& x, bool sb, bool sc) {
    return ParamBlock{name, x.data(), static_cast<std::size_t>(x.size()), sb, sc};
  };
  return {
      mat("dense.A", m.dense.A, false, false),
      mat("dense.B", m.dense.B, true, false),
      mat("dense.C", m.dense.C, false, true),
      mat("sparse.A", m.sparse.A, false, false),
      mat("sparse.B", m.sparse.B, true, false),
      mat("sparse.C", m.sparse.C, false, true),
      {"bias", m.bias.data(), static_cast<std::size_t>(m.bias.size()), false, false},
  };
}

std::size_t param_count(const FullTensorModel& m) {
  return m.weights.size() + static_cast<std::size_t>(m.bias.size());
}

std::size_t param_count(const FactoredModel& m) {
  return static_cast<std::size_t>(m.dense.A.size() + m.dense.B.size() + m.dense.C.size() +
                                  m.sparse.A.size() + m.sparse.B.size() + m.sparse.C.size() +
                                  m.bias.size());
}

namespace {

template <typename Model>
std::vector<double> flatten_impl(Model& m) {
  std::vector<double> flat;
  flat.reserve(param_count(m));
  for (const auto& b : param_blocks(m)) flat.insert(flat.end(), b.data, b.data + b.size);
  return flat;
}

template <typename Model>
void unflatten_impl(Model& m, std::span<const double> flat) {
  if (flat.size() != param_count(m))
    throw std::invalid_argument("unflatten_params: size mismatch");
  std::size_t off = 0;
  for (auto& b : param_blocks(m)) {
    std::copy_n(flat.data() + off, b.size, b.data);
    off += b.size;
  }
}

void check_example(const Example& e, int mb, int mc, int na) {
  if (e.phi.dim != mb || e.psi.dim != mc)
    throw std::invalid_argument("example feature dims do not match model grids");
  if (static_cast<int>(e.labels.size()) != na || static_cast<int>(e.task_mask.size()) != na)
    throw std::invalid_argument("example label/mask length does not match task count");
}

// Raw (unnormalized) loss/gradient sums over a shard of the batch.
struct RawAccum {
  double loss_sum = 0.0;
  std::size_t n_pairs = 0;
  std::vector<double> grad;
};

void accumulate_full(const FullTensorModel& m, std::span<const Example> shard, RawAccum& acc,
                     bool want_grad) {
  const int na = m.n_tasks();
  const std::size_t wsize = m.weights.size();
  for (const Example& e : shard) {
    check_example(e, m.weights.mb, m.weights.mc, na);
    Eigen::VectorXd z = forward_full(m, e);
    for (int a = 0; a < na; ++a) {
      if (!e.task_mask[a]) continue;
      const double y = e.labels[a];
      acc.loss_sum += softplus_neg(y * z[a]);
      ++acc.n_pairs;
      if (!want_grad) continue;
      const double g = -y * sigmoid(-y * z[a]);
      for (std::size_t ib = 0; ib < e.phi.indices.size(); ++ib)
        for (std::size_t ic = 0; ic < e.psi.indices.size(); ++ic)
          acc.grad[m.weights.offset(a, e.phi.indices[ib], e.psi.indices[ic])] +=
              g * e.phi.values[ib] * e.psi.values[ic];
      acc.grad[wsize + a] += g;
    }
  }
}

void accumulate_factored(const FactoredModel& m, std::span<const Example> shard, RawAccum& acc,
                         bool want_grad) {
  const int na = m.n_tasks();
  const int kd = m.dense.rank();
  const int ks = m.sparse.rank();
  const std::size_t na_sz = static_cast<std::size_t>(na);
  // Flat offsets in param_blocks order (Eigen matrices are column-major).
  const std::size_t off_dA = 0;
  const std::size_t off_dB = off_dA + na_sz * kd;
  const std::size_t off_dC = off_dB + static_cast<std::size_t>(m.dense.mb()) * kd;
  const std::size_t off_sA = off_dC + static_cast<std::size_t>(m.dense.mc()) * kd;
  const std::size_t off_sB = off_sA + na_sz * ks;
  const std::size_t off_sC = off_sB + static_cast<std::size_t>(m.sparse.mb()) * ks;
  const std::size_t off_bias = off_sC + static_cast<std::size_t>(m.sparse.mc()) * ks;

  Eigen::VectorXd pb(kd), pc(kd), qb(ks), qc(ks), gtask(na);
  for (const Example& e : shard) {
    check_example(e, m.dense.mb(), m.dense.mc(), na);
    pb.setZero();
    pc.setZero();
    qb.setZero();
    qc.setZero();
    for (std::size_t i = 0; i < e.phi.indices.size(); ++i) {
      pb += e.phi.values[i] * m.dense.B.row(e.phi.indices[i]).transpose();
      qb += e.phi.values[i] * m.sparse.B.row(e.phi.indices[i]).transpose();
    }
    for (std::size_t i = 0; i < e.psi.indices.size(); ++i) {
      pc += e.psi.values[i] * m.dense.C.row(e.psi.indices[i]).transpose();
      qc += e.psi.values[i] * m.sparse.C.row(e.psi.indices[i]).transpose();
    }
    const Eigen::VectorXd hd = pb.cwiseProduct(pc);
    const Eigen::VectorXd hs = qb.cwiseProduct(qc);
    Eigen::VectorXd z = m.dense.A * hd + m.sparse.A * hs + m.bias;

    gtask.setZero();
    bool any = false;
    for (int a = 0; a < na; ++a) {
      if (!e.task_mask[a]) continue;
      const double y = e.labels[a];
      acc.loss_sum += softplus_neg(y * z[a]);
      ++acc.n_pairs;
      if (want_grad) {
        gtask[a] = -y * sigmoid(-y * z[a]);
        any = true;
      }
    }
    if (!want_grad || !any) continue;

    // dA(a,k) += g_a h_k ; dB(b,k) += phi_b s_k pc_k with s = A^T g.
    const Eigen::VectorXd sd = m.dense.A.transpose() * gtask;
    const Eigen::VectorXd ss = m.sparse.A.transpose() * gtask;
    for (int k = 0; k < kd; ++k) {
      for (int a = 0; a < na; ++a)
        if (gtask[a] != 0.0) acc.grad[off_dA + k * na_sz + a] += gtask[a] * hd[k];
      const double sk = sd[k];
      for (std::size_t i = 0; i < e.phi.indices.size(); ++i)
        acc.grad[off_dB + static_cast<std::size_t>(k) * m.dense.mb() + e.phi.indices[i]] +=
            e.phi.values[i] * sk * pc[k];
      for (std::size_t i = 0; i < e.psi.indices.size(); ++i)
        acc.grad[off_dC + static_cast<std::size_t>(k) * m.dense.mc() + e.psi.indices[i]] +=
            e.psi.values[i] * sk * pb[k];
    }
    for (int k = 0; k < ks; ++k) {
      for (int a = 0; a < na; ++a)
        if (gtask[a] != 0.0) acc.grad[off_sA + k * na_sz + a] += gtask[a] * hs[k];
      const double sk = ss[k];
      for (std::size_t i = 0; i < e.phi.indices.size(); ++i)
        acc.grad[off_sB + static_cast<std::size_t>(k) * m.sparse.mb() + e.phi.indices[i]] +=
            e.phi.values[i] * sk * qc[k];
      for (std::size_t i = 0; i < e.psi.indices.size(); ++i)
        acc.grad[off_sC + static_cast<std::size_t>(k) * m.sparse.mc() + e.psi.indices[i]] +=
            e.psi.values[i] * sk * qb[k];
    }
    for (int a = 0; a < na; ++a)
      if (gtask[a] != 0.0) acc.grad[off_bias + a] += gtask[a];
  }
}

template <typename Model, typename AccumFn>
LossGrad loss_grad_impl(const Model& m, std::span<const Example> batch, int n_shards,
                        bool want_grad, AccumFn accumulate) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const std::size_t np = param_count(m);
  n_shards = std::max(1, n_shards);
  n_shards = static_cast<int>(std::min<std::size_t>(n_shards, batch.size()));

  std::vector<RawAccum> accs(n_shards);
  for (auto& a : accs)
    if (want_grad) a.grad.assign(np, 0.0);

  if (n_shards == 1) {
    accumulate(m, batch, accs[0], want_grad);
  } else {
    const std::size_t per = batch.size() / n_shards;
    const std::size_t extra = batch.size() % n_shards;
    std::vector<std::thread> workers;
    std::size_t start = 0;
    for (int s = 0; s < n_shards; ++s) {
      const std::size_t len = per + (static_cast<std::size_t>(s) < extra ? 1 : 0);
      workers.emplace_back([&, s, start, len] {
        accumulate(m, batch.subspan(start, len), accs[s], want_grad);
      });
      start += len;
    }
    for (auto& w : workers) w.join();
  }

  LossGrad out;
  std::size_t n_pairs = 0;
  for (const auto& a : accs) {
    out.loss += a.loss_sum;
    n_pairs += a.n_pairs;
  }
  if (n_pairs == 0) throw std::invalid_argument("loss_and_grad: no observed (example, task) pairs");
  out.loss /= static_cast<double>(n_pairs);

  if (want_grad) {
    out.grad.assign(np, 0.0);
    for (const auto& a : accs)
      for (std::size_t i = 0; i < np; ++i) out.grad[i] += a.grad[i];
    for (double& g : out.grad) g /= static_cast<double>(n_pairs);
  }
  return out;
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<double> flatten_params(FullTensorModel& m) { return flatten_impl(m); }
std::vector<double> flatten_params(FactoredModel& m) { return flatten_impl(m); }
void unflatten_params(FullTensorModel& m, std::span<const double> flat) { unflatten_impl(m, flat); }
void unflatten_params(FactoredModel& m, std::span<const double> flat) { unflatten_impl(m, flat); }

Eigen::VectorXd forward_full(const FullTensorModel& m, const Example& e) {
  check_example(e, m.weights.mb, m.weights.mc, m.n_tasks());
  Eigen::VectorXd z = m.bias;
  for (std::size_t ib = 0; ib < e.phi.indices.size(); ++ib) {
    for (std::size_t ic = 0; ic < e.psi.indices.size(); ++ic) {
      const double w = e.phi.values[ib] * e.psi.values[ic];
      const int b = e.phi.indices[ib];
      const int c = e.psi.indices[ic];
      for (int a = 0; a < m.n_tasks(); ++a) z[a] += w * m.weights(a, b, c);
    }
  }
  return z;
}

Eigen::VectorXd forward_factored(const FactoredModel& m, const Example& e) {
  check_example(e, m.dense.mb(), m.dense.mc(), m.n_tasks());
  const int kd = m.dense.rank();
  const int ks = m.sparse.rank();
  Eigen::VectorXd pb = Eigen::VectorXd::Zero(kd), pc = Eigen::VectorXd::Zero(kd);
  Eigen::VectorXd qb = Eigen::VectorXd::Zero(ks), qc = Eigen::VectorXd::Zero(ks);
  for (std::size_t i = 0; i < e.phi.indices.size(); ++i) {
    pb += e.phi.values[i] * m.dense.B.row(e.phi.indices[i]).transpose();
    qb += e.phi.values[i] * m.sparse.B.row(e.phi.indices[i]).transpose();
  }
  for (std::size_t i = 0; i < e.psi.indices.size(); ++i) {
    pc += e.psi.values[i] * m.dense.C.row(e.psi.indices[i]).transpose();
    qc += e.psi.values[i] * m.sparse.C.row(e.psi.indices[i]).transpose();
  }
  return m.dense.A * pb.cwiseProduct(pc) + m.sparse.A * qb.cwiseProduct(qc) + m.bias;
}

Eigen::VectorXd predict_prob(const FullTensorModel& m, const Example& e) {
  Eigen::VectorXd z = forward_full(m, e);
  for (int a = 0; a < z.size(); ++a) z[a] = sigmoid(z[a]);
  return z;
}

Eigen::VectorXd predict_prob(const FactoredModel& m, const Example& e) {
  Eigen::VectorXd z = forward_factored(m, e);
  for (int a = 0; a < z.size(); ++a) z[a] = sigmoid(z[a]);
  return z;
}

LossGrad loss_and_grad(const FullTensorModel& m, std::span<const Example> batch,
                       const RegConfig& reg, int n_shards) {
  LossGrad out = loss_grad_impl(m, batch, n_shards, true,
                                [](const FullTensorModel& mm, std::span<const Example> s,
                                   RawAccum& a, bool g) { accumulate_full(mm, s, a, g); });
  // Full-rank phase carries L2 on the whole tensor; bias stays unregularized.
  double l2 = 0.0;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    const double w = m.weights.values[i];
    l2 += w * w;
    out.grad[i] += 2.0 * reg.l2_dense * w;
  }
  out.loss += reg.l2_dense * l2;
  return out;
}

LossGrad loss_and_grad(const FactoredModel& m, std::span<const Example> batch,
                       const RegConfig& reg, int n_shards) {
  LossGrad out = loss_grad_impl(m, batch, n_shards, true,
                                [](const FactoredModel& mm, std::span<const Example> s,
                                   RawAccum& a, bool g) { accumulate_factored(mm, s, a, g); });
  std::size_t off = 0;
  auto reg_l2 = [&](const Eigen::MatrixXd& x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double w = x.data()[i];
      s += w * w;
      out.grad[off + i] += 2.0 * reg.l2_dense * w;
    }
    off += x.size();
    out.loss += reg.l2_dense * s;
  };
  auto reg_l1 = [&](const Eigen::MatrixXd& x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double w = x.data()[i];
      s += std::abs(w);
      out.grad[off + i] += reg.l1_sparse * sign_of(w);
    }
    off += x.size();
    out.loss += reg.l1_sparse * s;
  };
  reg_l2(m.dense.A);
  reg_l2(m.dense.B);
  reg_l2(m.dense.C);
  reg_l1(m.sparse.A);
  reg_l1(m.sparse.B);
  reg_l1(m.sparse.C);
  return out;
}

double mean_loss(const FullTensorModel& m, std::span<const Example> batch, int n_shards) {
  return loss_grad_impl(m, batch, n_shards, false,
                        [](const FullTensorModel& mm, std::span<const Example> s, RawAccum& a,
                           bool g) { accumulate_full(mm, s, a, g); })
      .loss;
}

double mean_loss(const FactoredModel& m, std::span<const Example> batch, int n_shards) {
  return loss_grad_impl(m, batch, n_shards, false,
                        [](const FactoredModel& mm, std::span<const Example> s, RawAccum& a,
                           bool g) { accumulate_factored(mm, s, a, g); })
      .loss;
}

}  // namespace mrtl
