#include "dlpc/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <string>

namespace dlpc {

Topology Topology::build(const GraphSpec& spec) {
  const int m = spec.robots;
  require(m >= 1, ErrorKind::kTopology, "topology needs at least one robot");
  require(static_cast<int>(spec.neighbors.size()) == m || spec.neighbors.empty(), ErrorKind::kTopology,
          "neighbor table size does not match robot count");
  Topology t;
  t.m_ = m;
  t.spec_ = spec;
  t.nbrs_.assign(m, {});
  for (int i = 0; i < m; ++i) {
    std::vector<int> l;
    if (!spec.neighbors.empty()) l = spec.neighbors[i];
    for (int j : l) {
      require(j >= 0 && j < m, ErrorKind::kTopology,
              "robot " + std::to_string(i) + " lists out-of-range neighbor " + std::to_string(j));
    }
    l.push_back(i);
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    t.nbrs_[i] = std::move(l);
  }
  t.rev_.assign(m, {});
  for (int j = 0; j < m; ++j) {
    for (int i : t.nbrs_[j]) t.rev_[i].push_back(j);
  }
  for (auto& r : t.rev_) std::sort(r.begin(), r.end());
  t.own_.resize(m);
  for (int i = 0; i < m; ++i) t.own_[i] = t.local_index(i, i);

  t.pinned_.assign(m, 0);
  for (int p : spec.pinned) {
    require(p >= 0 && p < m, ErrorKind::kTopology, "pinned robot index out of range");
    t.pinned_[p] = 1;
  }
  require(!spec.pinned.empty(), ErrorKind::kTopology, "no robot receives the leader reference");

  // Leader information enters at pinned robots and travels from j to i when j is a neighbor of i.
  std::vector<char> seen(m, 0);
  std::queue<int> q;
  for (int i = 0; i < m; ++i) {
    if (t.pinned_[i]) {
      seen[i] = 1;
      q.push(i);
    }
  }
  while (!q.empty()) {
    const int j = q.front();
    q.pop();
    for (int i : t.rev_[j]) {
      if (!seen[i]) {
        seen[i] = 1;
        q.push(i);
      }
    }
  }
  for (int i = 0; i < m; ++i) {
    require(seen[i] != 0, ErrorKind::kTopology,
            "robot " + std::to_string(i) + " is unreachable from the leader");
  }

  const bool explicit_tables = !spec.edge_offsets.empty() || !spec.leader_offsets.empty();
  if (!explicit_tables) {
    if (spec.slots.empty()) {
      t.slots_.assign(m, Vec2::Zero());
    } else {
      require(static_cast<int>(spec.slots.size()) == m, ErrorKind::kTopology,
              "slot table size does not match robot count");
      t.slots_ = spec.slots;
    }
  }
  t.edge_off_.assign(m, {});
  t.leader_off_.assign(m, Vec2::Zero());
  for (int i = 0; i < m; ++i) {
    t.edge_off_[i].assign(t.nbrs_[i].size(), Vec2::Zero());
    for (std::size_t a = 0; a < t.nbrs_[i].size(); ++a) {
      const int j = t.nbrs_[i][a];
      if (j == i) continue;
      if (explicit_tables) {
        auto it = spec.edge_offsets.find({i, j});
        require(it != spec.edge_offsets.end(), ErrorKind::kTopology,
                "missing explicit offset for edge " + std::to_string(i) + "<-" + std::to_string(j));
        t.edge_off_[i][a] = it->second;
      } else {
        // Zero error at the slots requires p_j - p_i + offset = 0.
        t.edge_off_[i][a] = t.slots_[i] - t.slots_[j];
      }
    }
    if (explicit_tables) {
      if (t.pinned_[i]) {
        require(static_cast<int>(spec.leader_offsets.size()) == m, ErrorKind::kTopology,
                "explicit leader offsets must list every robot");
        t.leader_off_[i] = spec.leader_offsets[i];
      }
    } else {
      t.leader_off_[i] = t.slots_[i];
    }
  }
  return t;
}

int Topology::local_index(int i, int j) const {
  const auto& l = nbrs_[i];
  auto it = std::lower_bound(l.begin(), l.end(), j);
  if (it == l.end() || *it != j) return -1;
  return static_cast<int>(it - l.begin());
}

int Topology::edge_count() const {
  int c = 0;
  for (const auto& l : nbrs_) c += static_cast<int>(l.size());
  return c;
}

void Topology::gather(int i, const Field& field, Vec& out) const {
  const auto& l = nbrs_[i];
  out.resize(kStateDim * static_cast<int>(l.size()));
  for (std::size_t a = 0; a < l.size(); ++a) out.segment<4>(4 * a) = field.col(l[a]);
}

Vec Topology::gather(int i, const Field& field) const {
  Vec out;
  gather(i, field, out);
  return out;
}

void Topology::scatter(int i, const Vec& local, Field& field) const {
  const auto& l = nbrs_[i];
  require(local.size() == kStateDim * static_cast<int>(l.size()), ErrorKind::kInvalidArgument,
          "scatter size mismatch");
  for (std::size_t a = 0; a < l.size(); ++a) field.col(l[a]) = local.segment<4>(4 * a);
}

std::vector<Vec2> line_slots(int m, double spacing) {
  require(m >= 1 && spacing > 0, ErrorKind::kInvalidArgument, "line shape needs m >= 1 and spacing > 0");
  std::vector<Vec2> s(m);
  for (int i = 0; i < m; ++i) s[i] = Vec2(-(i + 1) * spacing, 0.0);
  return s;
}

std::vector<Vec2> grid_slots(int rows, int cols, double in_row, double between_rows) {
  require(rows >= 1 && cols >= 1 && in_row > 0 && between_rows > 0, ErrorKind::kInvalidArgument,
          "grid shape needs positive counts and spacings");
  std::vector<Vec2> s(rows * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) s[r * cols + c] = Vec2(-(c + 1) * in_row, -r * between_rows);
  }
  return s;
}

std::vector<Vec2> circle_slots(int m, double spacing) {
  require(m >= 1 && spacing > 0, ErrorKind::kInvalidArgument, "circle shape needs m >= 1 and spacing > 0");
  if (m == 1) return {Vec2(-spacing, 0.0)};
  const double two_pi = 2.0 * std::numbers::pi;
  const double radius = std::max(spacing, m * spacing / two_pi);
  std::vector<Vec2> s(m);
  for (int i = 0; i < m; ++i) {
    const double phi = two_pi * i / m;
    s[i] = Vec2(-radius - spacing + radius * std::cos(phi), radius * std::sin(phi));
  }
  return s;
}

std::vector<std::vector<int>> path_graph(int m) {
  std::vector<std::vector<int>> g(m);
  for (int i = 0; i < m; ++i) {
    if (i > 0) g[i].push_back(i - 1);
    if (i + 1 < m) g[i].push_back(i + 1);
  }
  return g;
}

std::vector<std::vector<int>> ring_graph(int m) {
  std::vector<std::vector<int>> g(m);
  if (m < 3) return path_graph(m);
  for (int i = 0; i < m; ++i) {
    g[i].push_back((i + m - 1) % m);
    g[i].push_back((i + 1) % m);
  }
  return g;
}

std::vector<std::vector<int>> row_paths_graph(int rows, int cols) {
  std::vector<std::vector<int>> g(rows * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      if (c > 0) g[i].push_back(i - 1);
      if (c + 1 < cols) g[i].push_back(i + 1);
    }
  }
  return g;
}

std::vector<std::vector<int>> directed_ring_graph(int m) {
  std::vector<std::vector<int>> g(m);
  for (int i = 0; i < m; ++i) g[i].push_back((i + m - 1) % m);
  return g;
}

}  // namespace dlpc
