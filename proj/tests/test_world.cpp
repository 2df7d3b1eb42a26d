#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "navstate/segmenter.hpp"
#include "navstate/world.hpp"

using namespace navstate;

namespace {

// Bellman-Ford, independent of the Dijkstra implementation under test.
std::vector<double> oracle_distances(const World& w, int source) {
  std::vector<double> dist(w.size(), 1e300);
  dist[source] = 0.0;
  for (int pass = 0; pass < w.size(); ++pass) {
    bool changed = false;
    for (auto [u, v] : w.edges) {
      double len = w.distance(u, v);
      if (dist[u] + len < dist[v]) {
        dist[v] = dist[u] + len;
        changed = true;
      }
      if (dist[v] + len < dist[u]) {
        dist[u] = dist[v] + len;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return dist;
}

World line_world() {
  // a(0,0) - b(1,0) - c(2,0)
  World w;
  w.seed = 0;
  w.nodes = {{0, 0, {2}}, {1, 0, {3}}, {2, 0, {4}}};
  w.edges = {{0, 1}, {1, 2}};
  w.adj = {{1}, {0, 2}, {1}};
  return w;
}

bool connected(const World& w) {
  std::vector<char> seen(w.size(), 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : w.adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == w.size();
}

}  // namespace

TEST_CASE("world generation") {
  Vocabulary vocab = default_vocabulary();
  SUBCASE("single node, no edges") {
    World w = generate_world(5, 1, vocab);
    CHECK(w.size() == 1);
    CHECK(w.edges.empty());
    CHECK(w.nodes[0].landmarks.size() >= 1);
  }
  SUBCASE("same seed reproduces the world bit for bit") {
    World a = generate_world(42, 20, vocab);
    World b = generate_world(42, 20, vocab);
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) {
      CHECK(a.nodes[i].x == b.nodes[i].x);
      CHECK(a.nodes[i].y == b.nodes[i].y);
      CHECK(a.nodes[i].landmarks == b.nodes[i].landmarks);
    }
    CHECK(a.edges == b.edges);
  }
  SUBCASE("twenty-node worlds are connected with landmarks everywhere") {
    for (uint64_t seed = 1; seed <= 8; ++seed) {
      World w = generate_world(seed, 20, vocab);
      CHECK(connected(w));
      for (const auto& n : w.nodes) CHECK(n.landmarks.size() >= 1);
    }
  }
  SUBCASE("zero nodes is an input error") {
    CHECK_THROWS_AS(generate_world(1, 0, vocab), InputError);
  }
}

TEST_CASE("shortest paths match the independent search oracle") {
  Vocabulary vocab = default_vocabulary();
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    World w = generate_world(seed, 15, vocab);
    auto oracle = oracle_distances(w, 0);
    auto dist = shortest_distances(w, 0);
    for (int v = 0; v < w.size(); ++v)
      CHECK(dist[v] == doctest::Approx(oracle[v]).epsilon(1e-9));
    // the returned path is valid and has the oracle length
    for (int v = 1; v < w.size(); ++v) {
      auto path = shortest_path(w, 0, v);
      REQUIRE(!path.empty());
      CHECK(path.front() == 0);
      CHECK(path.back() == v);
      double len = 0.0;
      for (size_t i = 1; i < path.size(); ++i) {
        CHECK(w.adjacent(path[i - 1], path[i]));
        len += w.distance(path[i - 1], path[i]);
      }
      CHECK(len == doctest::Approx(oracle[v]).epsilon(1e-9));
    }
  }
}

TEST_CASE("episodes") {
  Vocabulary vocab = default_vocabulary();
  SUBCASE("single-node world degenerates to a stop instruction") {
    World w = generate_world(3, 1, vocab);
    EpisodeSpec e = make_episode(w, 9, vocab);
    CHECK(e.instruction == "stop");
    CHECK(e.legs() == 0);
    CHECK(e.gt_clause_count == 1);
  }
  SUBCASE("line world start-to-end goes through the middle") {
    World w = line_world();
    // a fixed spec rather than sampling: path from 0 to 2
    auto path = shortest_path(w, 0, 2);
    CHECK(path == std::vector<int>{0, 1, 2});
  }
  SUBCASE("instruction template structure") {
    World w = generate_world(11, 20, vocab);
    for (uint64_t seed = 1; seed <= 10; ++seed) {
      EpisodeSpec e = make_episode(w, seed, vocab);
      Instruction inst = tokenize(e.instruction, vocab);
      int thens = 0;
      for (const auto& tok : inst.token_texts) thens += tok == "then";
      if (e.legs() >= 1) {
        CHECK(thens == e.legs() - 1);
        CHECK(inst.token_texts.back() == "stop");
        // no unknown words: every landmark is in the vocabulary
        for (int id : inst.tokens) CHECK(id != Vocabulary::kUnk);
      }
    }
  }
  SUBCASE("rule-based segmentation recovers the template clauses exactly") {
    World w = generate_world(13, 20, vocab);
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      EpisodeSpec e = make_episode(w, seed, vocab);
      Instruction inst = tokenize(e.instruction, vocab);
      BoundarySet b = segment_rules(inst);
      CHECK(b.positions == e.gt_boundaries);
      CHECK(split_at(b, inst.length()).count() == e.gt_clause_count);
    }
  }
  SUBCASE("episodes are reproducible from their seeds") {
    World w = generate_world(17, 12, vocab);
    EpisodeSpec a = make_episode(w, 4, vocab);
    EpisodeSpec b = make_episode(w, 4, vocab);
    CHECK(a.start == b.start);
    CHECK(a.goal == b.goal);
    CHECK(a.instruction == b.instruction);
    CHECK(a.oracle_path == b.oracle_path);
  }
  SUBCASE("oracle paths are shortest on sampled episodes") {
    World w = generate_world(19, 20, vocab);
    for (uint64_t seed = 1; seed <= 10; ++seed) {
      EpisodeSpec e = make_episode(w, seed, vocab);
      double len = 0.0;
      for (size_t i = 1; i < e.oracle_path.size(); ++i)
        len += w.distance(e.oracle_path[i - 1], e.oracle_path[i]);
      CHECK(len == doctest::Approx(oracle_distances(w, e.start)[e.goal]).epsilon(1e-9));
    }
  }
}

TEST_CASE("observations") {
  Vocabulary vocab = default_vocabulary();
  World w = generate_world(23, 10, vocab);
  Tensor emb(vocab.size(), 8);
  Rng init(3);
  init_uniform(emb, init, -0.1, 0.1);

  SUBCASE("zero sigma is a pure function of the node") {
    Rng r1(1), r2(999);
    Observation a = observe(w, 2, emb, r1, 0.0);
    Observation b = observe(w, 2, emb, r2, 0.0);
    REQUIRE(a.features.size() == b.features.size());
    for (int i = 0; i < a.features.size(); ++i) CHECK(a.features[i] == b.features[i]);
  }
  SUBCASE("row structure: neighbors plus local landmarks") {
    Rng rng(1);
    for (int node = 0; node < w.size(); ++node) {
      Observation o = observe(w, node, emb, rng, 0.1);
      int k = static_cast<int>(w.adj[node].size());
      CHECK(o.cand_features.rows() == k);
      CHECK(o.features.rows() == k + static_cast<int>(w.nodes[node].landmarks.size()));
      CHECK(static_cast<int>(o.mask.size()) == k);
      CHECK(o.neighbors == w.adj[node]);
    }
  }
  SUBCASE("isolated node sees only its own landmarks") {
    World iso = generate_world(29, 1, vocab);
    Rng rng(1);
    Observation o = observe(iso, 0, emb, rng, 0.1);
    CHECK(o.cand_features.rows() == 0);
    CHECK(o.features.rows() == static_cast<int>(iso.nodes[0].landmarks.size()));
  }
  SUBCASE("direction encoding shifts the first two feature entries") {
    Rng rng(1);
    int node = 0;
    REQUIRE(!w.adj[node].empty());
    int nb = w.adj[node][0];
    Observation o = observe(w, node, emb, rng, 0.0);
    double theta = std::atan2(w.nodes[nb].y - w.nodes[node].y, w.nodes[nb].x - w.nodes[node].x);
    int lm = w.nodes[nb].landmarks[0];
    CHECK(o.features.at(0, 0) ==
          doctest::Approx(emb.at(lm, 0) + std::cos(theta)).epsilon(1e-12));
    CHECK(o.features.at(0, 1) ==
          doctest::Approx(emb.at(lm, 1) + std::sin(theta)).epsilon(1e-12));
  }
}

TEST_CASE("world and episode JSON round-trips") {
  Vocabulary vocab = default_vocabulary();
  World w = generate_world(31, 8, vocab);
  World w2 = world_from_json(world_to_json(w));
  CHECK(w2.seed == w.seed);
  REQUIRE(w2.size() == w.size());
  for (int i = 0; i < w.size(); ++i) {
    CHECK(w2.nodes[i].x == w.nodes[i].x);
    CHECK(w2.nodes[i].landmarks == w.nodes[i].landmarks);
  }
  CHECK(w2.edges == w.edges);

  EpisodeSpec e = make_episode(w, 5, vocab);
  EpisodeSpec e2 = episode_from_json(episode_to_json(e));
  CHECK(e2.seed == e.seed);
  CHECK(e2.instruction == e.instruction);
  CHECK(e2.oracle_path == e.oracle_path);
  CHECK(e2.gt_boundaries == e.gt_boundaries);
  CHECK(e2.success_radius == e.success_radius);
}

TEST_CASE("default vocabulary stays small") {
  CHECK(default_vocabulary().size() <= 60);
}
