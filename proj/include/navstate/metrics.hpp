#pragma once

#include <string>
#include <vector>

#include "navstate/world.hpp"

namespace navstate {

/// Executed node sequence. Consecutive nodes must be graph-adjacent;
/// `stopped` records whether a STOP was issued (voluntarily or forced at the
/// step cap) rather than the rollout being cut externally.
struct Trajectory {
  std::vector<int> nodes;
  bool stopped = false;
};

struct MetricReport {
  double tl = 0.0;     // trajectory length, meters
  double ne = 0.0;     // final distance to goal
  double sr = 0.0;     // success: stopped within the radius (inclusive)
  double osr = 0.0;    // any visited node within the radius
  double spl = 0.0;    // sr * l_star / max(l_star, tl)
  double rgspl = 0.0;  // max(0, 1 - ne/l_star) * l_star / max(l_star, tl)
};

double trajectory_length(const World& w, const Trajectory& traj);

double metric_tl(const World& w, const Trajectory& traj);
double metric_ne(const World& w, const EpisodeSpec& e, const Trajectory& traj);
double metric_sr(const World& w, const EpisodeSpec& e, const Trajectory& traj);
double metric_osr(const World& w, const EpisodeSpec& e, const Trajectory& traj);
double metric_spl(const World& w, const EpisodeSpec& e, const Trajectory& traj);
double metric_rgspl(const World& w, const EpisodeSpec& e, const Trajectory& traj);

/// All of the above at once (shares the shortest-path computation).
MetricReport compute_metrics(const World& w, const EpisodeSpec& e, const Trajectory& traj);

MetricReport mean_report(const std::vector<MetricReport>& reports);

}  // namespace navstate
