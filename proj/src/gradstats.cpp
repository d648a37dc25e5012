#include "mrtl/gradstats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mrtl {

GradStatsBuffer::GradStatsBuffer(int groups, int window, int bins)
    : window_(window), bins_(bins) {
  if (groups < 1) throw std::invalid_argument("GradStatsBuffer: need at least one group");
  if (window < 2) throw std::invalid_argument("GradStatsBuffer: window must be >= 2");
  if (bins < 2) throw std::invalid_argument("GradStatsBuffer: bins must be >= 2");
  ring_.resize(groups);
  for (auto& r : ring_) r.reserve(window);
}

void GradStatsBuffer::push(std::span<const double> step_grads) {
  if (step_grads.size() != ring_.size())
    throw std::invalid_argument("GradStatsBuffer::push: expected " +
                                std::to_string(ring_.size()) + " values, got " +
                                std::to_string(step_grads.size()));
  if (count_ < static_cast<std::size_t>(window_)) {
    for (std::size_t g = 0; g < ring_.size(); ++g) ring_[g].push_back(step_grads[g]);
    ++count_;
  } else {
    for (std::size_t g = 0; g < ring_.size(); ++g) ring_[g][head_] = step_grads[g];
    head_ = (head_ + 1) % window_;
  }
}

void GradStatsBuffer::clear() {
  for (auto& r : ring_) r.clear();
  count_ = 0;
  head_ = 0;
}

GroupStats GradStatsBuffer::group_stats(int g) const {
  if (g < 0 || g >= groups()) throw std::out_of_range("group index out of range");
  const auto& s = ring_[g];
  if (s.empty()) throw std::runtime_error("group_stats: empty buffer");

  GroupStats st;
  const double n = static_cast<double>(s.size());
  auto [lo_it, hi_it] = std::minmax_element(s.begin(), s.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    // all samples equal: sigma and entropy are exactly zero
    st.mu = lo;
    return st;
  }
  double sum = 0.0;
  for (double v : s) sum += v;
  st.mu = sum / n;
  double var = 0.0;
  for (double v : s) var += (v - st.mu) * (v - st.mu);
  st.sigma = std::sqrt(var / n);
  const double width = (hi - lo) / bins_;
  std::vector<std::size_t> counts(bins_, 0);
  for (double v : s) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins_ - 1);
    ++counts[b];
  }
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double q = static_cast<double>(c) / n;
    h -= q * std::log(q);
  }
  st.entropy = std::max(h, 0.0);
  return st;
}

StatsSnapshot GradStatsBuffer::snapshot() const {
  StatsSnapshot snap;
  snap.window = count_;
  snap.groups.reserve(ring_.size());
  for (int g = 0; g < groups(); ++g) snap.groups.push_back(group_stats(g));
  return snap;
}

const char* to_string(CriterionKind k) {
  switch (k) {
    case CriterionKind::loss_convergence: return "loss_convergence";
    case CriterionKind::entropy_threshold: return "entropy_threshold";
    case CriterionKind::sigma_threshold: return "sigma_threshold";
    case CriterionKind::mu_sigma_threshold: return "mu_sigma_threshold";
  }
  return "?";
}

CriterionKind criterion_kind_from_string(const std::string& s) {
  if (s == "loss_convergence") return CriterionKind::loss_convergence;
  if (s == "entropy_threshold") return CriterionKind::entropy_threshold;
  if (s == "sigma_threshold") return CriterionKind::sigma_threshold;
  if (s == "mu_sigma_threshold") return CriterionKind::mu_sigma_threshold;
  throw std::invalid_argument("unknown criterion kind: " + s);
}

CriterionDecision should_finegrain(const CriterionConfig& cfg, const GradStatsBuffer& buf,
                                   std::span<const double> loss_history) {
  CriterionDecision d;

  if (cfg.kind == CriterionKind::loss_convergence) {
    if (loss_history.size() < 2)
      throw std::runtime_error("should_finegrain: need at least 2 loss points");
    const std::size_t w = std::min<std::size_t>(loss_history.size(), buf.window());
    double mean = 0.0;
    for (std::size_t i = loss_history.size() - w; i < loss_history.size(); ++i)
      mean += loss_history[i];
    mean /= static_cast<double>(w);
    d.loss_gap = std::abs(loss_history.back() - mean);
    d.fire = d.loss_gap < cfg.tau_l;
    return d;
  }

  if (buf.samples() == 0) throw std::runtime_error("should_finegrain: empty gradient buffers");
  d.stats = buf.snapshot();
  int firing = 0;
  for (const GroupStats& st : d.stats.groups) {
    switch (cfg.kind) {
      case CriterionKind::entropy_threshold:
        if (st.entropy > cfg.tau_s) ++firing;
        break;
      case CriterionKind::sigma_threshold:
        if (st.sigma > cfg.tau_sigma) ++firing;
        break;
      case CriterionKind::mu_sigma_threshold:
        if (st.sigma > cfg.tau_sigma && std::abs(st.mu) < cfg.tau_mu) ++firing;
        break;
      default: break;
    }
  }
  d.firing_fraction = static_cast<double>(firing) / static_cast<double>(d.stats.groups.size());
  d.fire = d.firing_fraction >= cfg.p_frac;
  return d;
}

std::vector<double> retrospective_information_gain(const StatsSnapshot& before,
                                                   const StatsSnapshot& after,
                                                   const RefinementMap& mapping) {
  if (before.window != after.window)
    throw std::invalid_argument("information gain: snapshots cover different window lengths");
  if (before.groups.size() != mapping.children.size() ||
      after.groups.size() != mapping.parent.size())
    throw std::invalid_argument("information gain: snapshot sizes do not match refinement map");

  std::vector<double> gain(before.groups.size(), 0.0);
  for (std::size_t g = 0; g < mapping.children.size(); ++g) {
    const auto& kids = mapping.children[g];
    if (kids.empty()) continue;
    double mean_child = 0.0;
    for (int k : kids) mean_child += after.groups[k].entropy;
    mean_child /= static_cast<double>(kids.size());
    gain[g] = before.groups[g].entropy - mean_child;
  }
  return gain;
}

DiagnosticsWriter::DiagnosticsWriter(const std::string& path) : out_(path, std::ios::app) {
  if (!out_) throw std::runtime_error("cannot open diagnostics file: " + path);
}

namespace {

nlohmann::json quantiles(const StatsSnapshot& snap, double GroupStats::* field) {
  if (snap.groups.empty()) return nullptr;
  std::vector<double> v;
  v.reserve(snap.groups.size());
  for (const auto& g : snap.groups) v.push_back(g.*field);
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
  };
  return {q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)};
}

}  // namespace

void DiagnosticsWriter::record(long step, const CriterionConfig& cfg,
                               const CriterionDecision& d) {
  if (!out_.is_open()) return;
  nlohmann::json j{
      {"step", step},
      {"criterion", to_string(cfg.kind)},
      {"firing_fraction", d.firing_fraction},
      {"decision", d.fire},
  };
  if (cfg.kind == CriterionKind::loss_convergence) {
    j["loss_gap"] = d.loss_gap;
  } else {
    j["mu_q"] = quantiles(d.stats, &GroupStats::mu);
    j["sigma_q"] = quantiles(d.stats, &GroupStats::sigma);
    j["entropy_q"] = quantiles(d.stats, &GroupStats::entropy);
  }
  out_ << j.dump() << '\n';
  out_.flush();
}

}  // namespace mrtl
