#pragma once

#include <cstddef>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mrtl/grid.hpp"

namespace mrtl {

struct GroupStats {
  double mu = 0.0;
  double sigma = 0.0;    // population standard deviation
  double entropy = 0.0;  // nats, Shannon entropy of the binned window
};

struct StatsSnapshot {
  std::vector<GroupStats> groups;
  std::size_t window = 0;  // samples per group when taken
};

// Rolling window of per-group scalar gradient aggregates. All groups advance
// together: one push supplies one sample per group, oldest samples evicted
// once the window is full.
class GradStatsBuffer {
 public:
  GradStatsBuffer(int groups, int window, int bins = 20);

  void push(std::span<const double> step_grads);

  GroupStats group_stats(int g) const;
  StatsSnapshot snapshot() const;

  int groups() const { return static_cast<int>(ring_.size()); }
  int window() const { return window_; }
  int bins() const { return bins_; }
  std::size_t samples() const { return count_; }
  void clear();

 private:
  int window_ = 0;
  int bins_ = 0;
  std::size_t count_ = 0;  // samples currently held per group
  std::size_t head_ = 0;   // eviction cursor once full
  std::vector<std::vector<double>> ring_;
};

enum class CriterionKind {
  loss_convergence,
  entropy_threshold,
  sigma_threshold,
  mu_sigma_threshold,
};

const char* to_string(CriterionKind k);
CriterionKind criterion_kind_from_string(const std::string& s);

struct CriterionConfig {
  CriterionKind kind = CriterionKind::loss_convergence;
  double tau_l = 0.0;
  double tau_s = 0.0;
  double tau_sigma = 0.0;
  double tau_mu = 0.0;
  double p_frac = 0.10;  // fraction of groups that must satisfy the predicate
  int check_every = 100;
  int min_steps = 0;  // warm-up before the first check; 0 = one full window
};

struct CriterionDecision {
  bool fire = false;
  double firing_fraction = 0.0;  // groups satisfying the predicate / groups
  double loss_gap = 0.0;         // |current - rolling mean|, loss_convergence only
  StatsSnapshot stats;
};

// Evaluate the configured fine-graining criterion. Group criteria fire when
// the satisfying fraction is >= p_frac (inclusive); loss convergence fires
// when the current loss sits within tau_l of its rolling mean over the
// buffer window. Throws std::runtime_error on insufficient history.
CriterionDecision should_finegrain(const CriterionConfig& cfg, const GradStatsBuffer& buf,
                                   std::span<const double> loss_history);

// Per-coarse-group entropy drop across a refinement: S(coarse) minus the mean
// child entropy. Snapshots must cover the same window length. `before` has
// one entry per coarse cell, `after` one per fine cell of `mapping`.
std::vector<double> retrospective_information_gain(const StatsSnapshot& before,
                                                   const StatsSnapshot& after,
                                                   const RefinementMap& mapping);

// Append-only JSON-lines stream of criterion evaluations.
class DiagnosticsWriter {
 public:
  DiagnosticsWriter() = default;
  explicit DiagnosticsWriter(const std::string& path);

  bool open() const { return out_.is_open(); }
  void record(long step, const CriterionConfig& cfg, const CriterionDecision& d);

 private:
  std::ofstream out_;
};

}  // namespace mrtl
