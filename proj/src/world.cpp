#include "navstate/world.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include <json.hpp>

namespace navstate {

const std::vector<std::string>& default_landmark_words() {
  static const std::vector<std::string> words = {
      "kitchen", "bedroom",  "bathroom", "hallway",  "garden",  "office",   "library",
      "balcony", "sofa",     "table",    "chair",    "lamp",    "door",     "window",
      "mirror",  "plant",    "shelf",    "stove",    "sink",    "fridge",   "stairs",
      "closet",  "piano",    "desk",     "couch",    "rug",     "clock",    "vase",
      "painting", "fireplace", "bench",  "fountain", "statue",  "archway",  "pillar",
      "gate",    "bridge",   "pond",     "tree",     "rock"};
  return words;
}

Vocabulary default_vocabulary() {
  Vocabulary v;
  for (const auto& w : {"walk", "to", "the", "then", "and", "stop"}) v.add(w);
  for (const auto& w : default_landmark_words()) v.add(w);
  return v;
}

double World::distance(int u, int v) const {
  double dx = nodes[u].x - nodes[v].x;
  double dy = nodes[u].y - nodes[v].y;
  return std::sqrt(dx * dx + dy * dy);
}

bool World::adjacent(int u, int v) const {
  return std::binary_search(adj[u].begin(), adj[u].end(), v);
}

namespace {

void add_edge(World& w, int u, int v) {
  if (u > v) std::swap(u, v);
  if (u == v || w.adjacent(u, v)) return;
  w.edges.emplace_back(u, v);
  w.adj[u].insert(std::lower_bound(w.adj[u].begin(), w.adj[u].end(), v), v);
  w.adj[v].insert(std::lower_bound(w.adj[v].begin(), w.adj[v].end(), u), u);
}

std::vector<int> component_labels(const World& w) {
  std::vector<int> label(w.size(), -1);
  int next = 0;
  for (int s = 0; s < w.size(); ++s) {
    if (label[s] >= 0) continue;
    std::vector<int> stack = {s};
    label[s] = next;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : w.adj[u])
        if (label[v] < 0) {
          label[v] = next;
          stack.push_back(v);
        }
    }
    ++next;
  }
  return label;
}

}  // namespace

World generate_world(uint64_t seed, int n_nodes, const Vocabulary& vocab,
                     const WorldConfig& cfg) {
  if (n_nodes < 1) throw InputError("generate_world: need at least one node");
  Rng rng(seed ^ 0x77a5f3b2d91ULL);
  World w;
  w.seed = seed;
  w.nodes.resize(n_nodes);
  w.adj.assign(n_nodes, {});
  for (auto& n : w.nodes) {
    n.x = rng.uniform(0.0, cfg.box);
    n.y = rng.uniform(0.0, cfg.box);
  }

  // connect everything within the radius implied by the target mean degree
  double area = cfg.box * cfg.box;
  double radius = std::sqrt(cfg.target_degree * area / (n_nodes * 3.14159265358979323846));
  for (int u = 0; u < n_nodes; ++u)
    for (int v = u + 1; v < n_nodes; ++v)
      if (w.distance(u, v) <= radius) add_edge(w, u, v);

  // then stitch components together through their closest pairs
  for (;;) {
    auto label = component_labels(w);
    int comps = *std::max_element(label.begin(), label.end()) + 1;
    if (comps == 1) break;
    int bu = -1, bv = -1;
    double best = 0.0;
    for (int u = 0; u < n_nodes; ++u)
      for (int v = u + 1; v < n_nodes; ++v) {
        if (label[u] == label[v]) continue;
        double dist = w.distance(u, v);
        if (bu < 0 || dist < best) {
          best = dist;
          bu = u;
          bv = v;
        }
      }
    add_edge(w, bu, bv);
  }

  // Landmarks, avoiding duplicates within two hops where the pool allows.
  // Instructions name the target node's landmark, so two neighbors of the
  // same node must not share one or the reference is ambiguous.
  const auto& pool = cfg.landmark_words.empty() ? default_landmark_words() : cfg.landmark_words;
  std::vector<int> pool_ids;
  pool_ids.reserve(pool.size());
  for (const auto& word : pool) pool_ids.push_back(vocab.id(word));
  for (int u = 0; u < n_nodes; ++u) {
    std::set<int> taken;
    for (int v : w.adj[u]) {
      if (v < u && !w.nodes[v].landmarks.empty()) taken.insert(w.nodes[v].landmarks[0]);
      for (int x : w.adj[v])
        if (x != u && x < u && !w.nodes[x].landmarks.empty())
          taken.insert(w.nodes[x].landmarks[0]);
    }
    int offset = rng.uniform_int(0, static_cast<int>(pool_ids.size()) - 1);
    int chosen = pool_ids[offset];
    for (size_t probe = 0; probe < pool_ids.size(); ++probe) {
      int cand = pool_ids[(offset + probe) % pool_ids.size()];
      if (!taken.count(cand)) {
        chosen = cand;
        break;
      }
    }
    w.nodes[u].landmarks = {chosen};
  }
  return w;
}

std::vector<double> shortest_distances(const World& w, int source) {
  std::vector<double> dist(w.size(), std::numeric_limits<double>::infinity());
  dist[source] = 0.0;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  pq.push({0.0, source});
  while (!pq.empty()) {
    auto [du, u] = pq.top();
    pq.pop();
    if (du > dist[u]) continue;
    for (int v : w.adj[u]) {
      double cand = du + w.distance(u, v);
      if (cand < dist[v]) {
        dist[v] = cand;
        pq.push({cand, v});
      }
    }
  }
  return dist;
}

std::vector<int> shortest_path(const World& w, int from, int to) {
  std::vector<double> dist(w.size(), std::numeric_limits<double>::infinity());
  std::vector<int> prev(w.size(), -1);
  dist[from] = 0.0;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  pq.push({0.0, from});
  while (!pq.empty()) {
    auto [du, u] = pq.top();
    pq.pop();
    if (du > dist[u]) continue;
    for (int v : w.adj[u]) {
      double cand = du + w.distance(u, v);
      if (cand < dist[v]) {
        dist[v] = cand;
        prev[v] = u;
        pq.push({cand, v});
      }
    }
  }
  if (!std::isfinite(dist[to])) throw ContractError("shortest_path: goal unreachable");
  std::vector<int> path;
  for (int u = to; u != -1; u = prev[u]) path.push_back(u);
  std::reverse(path.begin(), path.end());
  return path;
}

EpisodeSpec make_episode(const World& w, uint64_t seed, const Vocabulary& vocab,
                         const EpisodeConfig& cfg) {
  Rng rng(seed ^ (w.seed * 0x9e3779b97f4a7c15ULL));
  EpisodeSpec e;
  e.world_seed = w.seed;
  e.seed = seed;
  e.success_radius = cfg.success_radius;

  int n = w.size();
  int start = 0, goal = 0;
  std::vector<int> path;
  for (int attempt = 0; attempt < cfg.sample_tries; ++attempt) {
    start = rng.uniform_int(0, n - 1);
    goal = rng.uniform_int(0, n - 1);
    path = shortest_path(w, start, goal);
    if (static_cast<int>(path.size()) - 1 >= cfg.min_path_edges) break;
  }
  e.start = start;
  e.goal = goal;
  e.oracle_path = path;

  if (e.legs() == 0) {
    e.instruction = "stop";
    e.gt_clause_count = 1;
    return e;
  }

  // "walk to the <landmark>" per leg, joined by "then", closed by "and stop"
  std::string text;
  int token_count = 0;
  for (int leg = 1; leg < static_cast<int>(path.size()); ++leg) {
    if (leg > 1) {
      e.gt_boundaries.push_back(token_count);
      text += " then";
      ++token_count;
    }
    // Landmark word via the vocabulary used at generation time.
    text += (leg == 1 ? "walk to the " : " walk to the ");
    token_count += 3;
    text += vocab.word(w.nodes[path[leg]].landmarks[0]);
    ++token_count;
  }
  e.gt_boundaries.push_back(token_count);
  text += " and stop";
  e.instruction = text;
  e.gt_clause_count = e.legs() + 1;
  return e;
}

Observation observe(const World& w, int node, const Tensor& word_embeddings, Rng& rng,
                    double sigma, int step) {
  if (node < 0 || node >= w.size()) throw ContractError("observe: node out of range");
  int d = word_embeddings.cols();
  const auto& neighbors = w.adj[node];
  int k = static_cast<int>(neighbors.size());
  int locals = static_cast<int>(w.nodes[node].landmarks.size());
  Observation obs;
  obs.node = node;
  obs.step = step;
  obs.neighbors = neighbors;
  obs.mask.assign(k, true);
  obs.features = Tensor(k + locals, d);
  for (int i = 0; i < k; ++i) {
    int v = neighbors[i];
    int lm = w.nodes[v].landmarks[0];
    double theta = std::atan2(w.nodes[v].y - w.nodes[node].y, w.nodes[v].x - w.nodes[node].x);
    for (int j = 0; j < d; ++j) obs.features.at(i, j) = word_embeddings.at(lm, j);
    obs.features.at(i, 0) += std::cos(theta);
    if (d > 1) obs.features.at(i, 1) += std::sin(theta);
  }
  for (int i = 0; i < locals; ++i) {
    int lm = w.nodes[node].landmarks[i];
    for (int j = 0; j < d; ++j) obs.features.at(k + i, j) = word_embeddings.at(lm, j);
  }
  if (sigma > 0.0) {
    for (int i = 0; i < obs.features.size(); ++i) obs.features[i] += sigma * rng.normal();
  }
  obs.cand_features = Tensor(k, d);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) obs.cand_features.at(i, j) = obs.features.at(i, j);
  return obs;
}

// ---------------------------------------------------------------------------

using nlohmann::json;

std::string world_to_json(const World& w) {
  json j;
  j["seed"] = w.seed;
  j["nodes"] = json::array();
  for (const auto& n : w.nodes)
    j["nodes"].push_back({{"x", n.x}, {"y", n.y}, {"landmarks", n.landmarks}});
  j["edges"] = json::array();
  for (const auto& [u, v] : w.edges) j["edges"].push_back({u, v});
  return j.dump();
}

World world_from_json(const std::string& text) {
  json j = json::parse(text);
  World w;
  w.seed = j.at("seed").get<uint64_t>();
  for (const auto& jn : j.at("nodes")) {
    WorldNode n;
    n.x = jn.at("x").get<double>();
    n.y = jn.at("y").get<double>();
    n.landmarks = jn.at("landmarks").get<std::vector<int>>();
    w.nodes.push_back(std::move(n));
  }
  w.adj.assign(w.size(), {});
  for (const auto& je : j.at("edges")) {
    int u = je.at(0).get<int>();
    int v = je.at(1).get<int>();
    add_edge(w, u, v);
  }
  return w;
}

std::string episode_to_json(const EpisodeSpec& e) {
  json j;
  j["world_seed"] = e.world_seed;
  j["seed"] = e.seed;
  j["start"] = e.start;
  j["goal"] = e.goal;
  j["success_radius"] = e.success_radius;
  j["instruction"] = e.instruction;
  j["oracle_path"] = e.oracle_path;
  j["gt_boundaries"] = e.gt_boundaries;
  j["gt_clause_count"] = e.gt_clause_count;
  return j.dump();
}

EpisodeSpec episode_from_json(const std::string& text) {
  json j = json::parse(text);
  EpisodeSpec e;
  e.world_seed = j.at("world_seed").get<uint64_t>();
  e.seed = j.at("seed").get<uint64_t>();
  e.start = j.at("start").get<int>();
  e.goal = j.at("goal").get<int>();
  e.success_radius = j.at("success_radius").get<double>();
  e.instruction = j.at("instruction").get<std::string>();
  e.oracle_path = j.at("oracle_path").get<std::vector<int>>();
  e.gt_boundaries = j.at("gt_boundaries").get<std::vector<int>>();
  e.gt_clause_count = j.at("gt_clause_count").get<int>();
  return e;
}

}  // namespace navstate
