#include "navstate/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace navstate {

double trajectory_length(const World& w, const Trajectory& traj) {
  double total = 0.0;
  for (size_t i = 1; i < traj.nodes.size(); ++i) {
    if (!w.adjacent(traj.nodes[i - 1], traj.nodes[i]))
      throw ContractError("trajectory: nodes " + std::to_string(traj.nodes[i - 1]) + " and " +
                          std::to_string(traj.nodes[i]) + " are not adjacent");
    total += w.distance(traj.nodes[i - 1], traj.nodes[i]);
  }
  return total;
}

namespace {

double goal_distance(const World& w, const EpisodeSpec& e, int node) {
  return w.distance(node, e.goal);
}

double oracle_length(const World& w, const EpisodeSpec& e) {
  return shortest_distances(w, e.start)[e.goal];
}

}  // namespace

double metric_tl(const World& w, const Trajectory& traj) { return trajectory_length(w, traj); }

double metric_ne(const World& w, const EpisodeSpec& e, const Trajectory& traj) {
  if (traj.nodes.empty()) throw ContractError("metrics: empty trajectory");
  return goal_distance(w, e, traj.nodes.back());
}

double metric_sr(const World& w, const EpisodeSpec& e, const Trajectory& traj) {
  return (traj.stopped && metric_ne(w, e, traj) <= e.success_radius) ? 1.0 : 0.0;
}

double metric_osr(const World& w, const EpisodeSpec& e, const Trajectory& traj) {
  for (int node : traj.nodes)
    if (goal_distance(w, e, node) <= e.success_radius) return 1.0;
  return 0.0;
}

double metric_spl(const World& w, const EpisodeSpec& e, const Trajectory& traj) {
  double sr = metric_sr(w, e, traj);
  double lstar = oracle_length(w, e);
  if (lstar == 0.0) return sr;
  return sr * lstar / std::max(lstar, metric_tl(w, traj));
}

double metric_rgspl(const World& w, const EpisodeSpec& e, const Trajectory& traj) {
  double lstar = oracle_length(w, e);
  if (lstar == 0.0) return metric_sr(w, e, traj);
  double progress = std::max(0.0, 1.0 - metric_ne(w, e, traj) / lstar);
  return progress * lstar / std::max(lstar, metric_tl(w, traj));
}

MetricReport compute_metrics(const World& w, const EpisodeSpec& e, const Trajectory& traj) {
  MetricReport r;
  r.tl = metric_tl(w, traj);
  r.ne = metric_ne(w, e, traj);
  r.sr = (traj.stopped && r.ne <= e.success_radius) ? 1.0 : 0.0;
  r.osr = metric_osr(w, e, traj);
  double lstar = oracle_length(w, e);
  if (lstar == 0.0) {
    r.spl = r.sr;
    r.rgspl = r.sr;
  } else {
    double eff = lstar / std::max(lstar, r.tl);
    r.spl = r.sr * eff;
    r.rgspl = std::max(0.0, 1.0 - r.ne / lstar) * eff;
  }
  return r;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport mean;
  if (reports.empty()) return mean;
  for (const auto& r : reports) {
    mean.tl += r.tl;
    mean.ne += r.ne;
    mean.sr += r.sr;
    mean.osr += r.osr;
    mean.spl += r.spl;
    mean.rgspl += r.rgspl;
  }
  double n = static_cast<double>(reports.size());
  mean.tl /= n;
  mean.ne /= n;
  mean.sr /= n;
  mean.osr /= n;
  mean.spl /= n;
  mean.rgspl /= n;
  return mean;
}

}  // namespace navstate
