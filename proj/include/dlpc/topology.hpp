#pragma once

#include "dlpc/common.hpp"

#include <map>
#include <utility>
#include <vector>

namespace dlpc {

/// Stacked per-robot quantity with one column of length 4 per robot.
using Field = Eigen::Matrix<double, 4, Eigen::Dynamic>;

/// Raw graph description as it comes from a configuration file.
struct GraphSpec {
  int robots = 0;
  /// neighbors[i] lists the robots whose state robot i receives. Self-loops are
  /// added automatically and duplicates are removed.
  std::vector<std::vector<int>> neighbors;
  /// Robots that receive the leader's reference directly.
  std::vector<int> pinned;
  /// Slot coordinates relative to the leader, one per robot. Used to derive
  /// every offset unless explicit tables are given.
  std::vector<Vec2> slots;
  /// Optional explicit offset tables. Key (i, j) stores the offset robot i
  /// applies to neighbor j.
  std::map<std::pair<int, int>, Vec2> edge_offsets;
  std::vector<Vec2> leader_offsets;
};

/// Immutable communication graph with pinning and formation offsets.
class Topology {
 public:
  Topology() = default;

  /// Validates a graph description and builds neighbor and reverse lists.
  static Topology build(const GraphSpec& spec);

  int size() const { return m_; }
  /// Sorted neighbor list of robot i, always containing i.
  const std::vector<int>& neighbors(int i) const { return nbrs_[i]; }
  /// Sorted list of robots j with i among their neighbors, always containing i.
  const std::vector<int>& reverse(int i) const { return rev_[i]; }
  bool pinned(int i) const { return pinned_[i] != 0; }
  int pin(int i) const { return pinned_[i]; }
  /// Number of neighbors excluding robot i itself.
  int degree(int i) const { return static_cast<int>(nbrs_[i].size()) - 1; }
  /// Position of robot j inside the neighbor list of robot i, or -1.
  int local_index(int i, int j) const;
  /// Position of robot i inside its own neighbor list.
  int own_index(int i) const { return own_[i]; }
  /// Offset robot i applies to the relative position of neighbor j.
  const Vec2& edge_offset(int i, int j) const { return edge_off_[i][local_index(i, j)]; }
  /// Offset robot i applies to the relative position of the leader.
  const Vec2& leader_offset(int i) const { return leader_off_[i]; }
  /// Slot coordinates relative to the leader (empty when explicit tables are used).
  const std::vector<Vec2>& slots() const { return slots_; }
  /// Neighborhood error dimension 4 * |N_i|.
  int neighborhood_dim(int i) const { return kStateDim * static_cast<int>(nbrs_[i].size()); }
  int edge_count() const;

  /// Copies the columns of the neighbors of robot i into a stacked vector.
  void gather(int i, const Field& field, Vec& out) const;
  Vec gather(int i, const Field& field) const;
  /// Writes a stacked neighborhood vector back into the matching columns.
  void scatter(int i, const Vec& local, Field& field) const;

  /// The graph description this topology was built from.
  const GraphSpec& spec() const { return spec_; }

 private:
  int m_ = 0;
  std::vector<std::vector<int>> nbrs_;
  std::vector<std::vector<int>> rev_;
  std::vector<int> own_;
  std::vector<int> pinned_;
  std::vector<std::vector<Vec2>> edge_off_;
  std::vector<Vec2> leader_off_;
  std::vector<Vec2> slots_;
  GraphSpec spec_;
};

/// Slots for a single-file line trailing the leader along -x.
std::vector<Vec2> line_slots(int m, double spacing);
/// Slots for a rows x cols rectangle. Robots in a row are spaced along x by
/// in_row, rows are spaced along y by between_rows. Robot index is row * cols + col.
std::vector<Vec2> grid_slots(int rows, int cols, double in_row, double between_rows);
/// Slots evenly spread on a circle whose arc spacing is `spacing`, placed behind the leader.
std::vector<Vec2> circle_slots(int m, double spacing);

/// Undirected path 0-1-...-(m-1).
std::vector<std::vector<int>> path_graph(int m);
/// Undirected cycle.
std::vector<std::vector<int>> ring_graph(int m);
/// Each row of a rows x cols grid is an undirected path; rows are not linked.
std::vector<std::vector<int>> row_paths_graph(int rows, int cols);
/// Directed cycle with c_{i,i-1} = 1.
std::vector<std::vector<int>> directed_ring_graph(int m);

}  // namespace dlpc
