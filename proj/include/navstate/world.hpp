#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "navstate/nn.hpp"
#include "navstate/text.hpp"

namespace navstate {

struct WorldConfig {
  double box = 10.0;           // side of the square the nodes live in
  double target_degree = 3.0;  // sets the connection radius
  std::vector<std::string> landmark_words;  // empty = default pool
};

/// The 40 landmark nouns used by generated worlds.
const std::vector<std::string>& default_landmark_words();
/// Landmarks plus the instruction template words; fits in under 60 entries.
Vocabulary default_vocabulary();

struct WorldNode {
  double x = 0.0, y = 0.0;
  std::vector<int> landmarks;  // vocabulary ids, at least one
};

/// Connected random geometric graph over 2-D positions. Immutable after
/// generation; edge lengths are the Euclidean distances.
struct World {
  uint64_t seed = 0;
  std::vector<WorldNode> nodes;
  std::vector<std::pair<int, int>> edges;  // undirected, first < second
  std::vector<std::vector<int>> adj;       // sorted neighbor lists

  int size() const { return static_cast<int>(nodes.size()); }
  double distance(int u, int v) const;
  bool adjacent(int u, int v) const;
};

World generate_world(uint64_t seed, int n_nodes, const Vocabulary& vocab,
                     const WorldConfig& cfg = {});

/// Dijkstra distances from a source over edge lengths.
std::vector<double> shortest_distances(const World& w, int source);
/// Deterministic shortest node sequence from `from` to `to` (inclusive).
std::vector<int> shortest_path(const World& w, int from, int to);

struct EpisodeSpec {
  uint64_t world_seed = 0;
  uint64_t seed = 0;
  int start = 0;
  int goal = 0;
  double success_radius = 1.0;
  std::string instruction;
  std::vector<int> oracle_path;    // node ids, start through goal
  std::vector<int> gt_boundaries;  // gap positions of the template's clauses
  int gt_clause_count = 1;
  int legs() const { return static_cast<int>(oracle_path.size()) - 1; }
};

struct EpisodeConfig {
  int min_path_edges = 2;  // aimed for, not guaranteed on tiny worlds
  int sample_tries = 32;
  double success_radius = 1.0;
};

/// Samples start/goal, runs the search oracle, and renders the instruction
/// "walk to the <landmark> then ... and stop" with its clause structure
/// recorded for diagnostics. The vocabulary must be the one the world was
/// generated with.
EpisodeSpec make_episode(const World& w, uint64_t seed, const Vocabulary& vocab,
                         const EpisodeConfig& cfg = {});

/// Per-step perceptual input: one feature row per neighbor (landmark
/// embedding + direction + noise) followed by the node's own landmark rows.
struct Observation {
  Tensor features;       // [N x d]
  Tensor cand_features;  // [k x d], the neighbor rows
  std::vector<int> neighbors;
  std::vector<bool> mask;  // per-candidate navigability (all true here)
  int node = 0;
  int step = 0;
};

Observation observe(const World& w, int node, const Tensor& word_embeddings, Rng& rng,
                    double sigma, int step = 0);

std::string world_to_json(const World& w);
World world_from_json(const std::string& text);
std::string episode_to_json(const EpisodeSpec& e);
EpisodeSpec episode_from_json(const std::string& text);

}  // namespace navstate
