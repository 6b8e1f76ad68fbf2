#pragma once

// Communication graph and the synchronous round-based message bus.
//
// An edge j -> i means robot j measures robot i and sends it an estimate of
// its pose. Absolute information comes from a virtual node o and reaches the
// anchored robots as Absolute measurements, never as messages.

#include "dincikf/filter.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace dincikf {

struct CommEdge {
  int from = -1;
  int to = -1;
  Matrix6 noise_cov = Matrix6::Zero();  // R_ij of the relative measurement
};

class CommGraph {
 public:
  /// Validates unique robot ids, known endpoints, no self-loops, no duplicate edges and PSD noise.
  CommGraph(std::vector<int> robots, std::vector<CommEdge> edges, std::vector<int> anchored);

  int robot_count() const { return static_cast<int>(robots_.size()); }
  const std::vector<int>& robots() const { return robots_; }
  const std::vector<CommEdge>& edges() const { return edges_; }
  const std::vector<int>& anchored() const { return anchored_; }

  bool has_robot(int id) const;
  bool has_edge(int from, int to) const;
  bool is_anchored(int id) const;
  /// Throws InvalidArgument if there is no such edge.
  const CommEdge& edge(int from, int to) const;
  /// Senders j of edges j -> id, ascending.
  std::vector<int> in_neighbors(int id) const;
  /// Recipients i of edges id -> i, ascending.
  std::vector<int> out_neighbors(int id) const;

  /// Copy without any absolute-information edge.
  CommGraph without_anchors() const;

 private:
  std::vector<int> robots_;
  std::vector<CommEdge> edges_;
  std::vector<int> anchored_;
};

inline constexpr int kAbsoluteNode = -1;

struct SpanningTree {
  bool spans = false;
  /// parent[i] for every reached robot; kAbsoluteNode for the root's children.
  std::map<int, int> parent;
  /// levels[0] = robots anchored to o, levels[1] = their children, ...
  std::vector<std::vector<int>> levels;
  std::vector<int> unreached;
};

/// BFS from the absolute node through anchors and robot edges. Ties between
/// candidate parents go to the smaller id.
SpanningTree check_spanning_tree(const CommGraph& g);

struct RoundMailbox {
  int round = 0;
  /// recipient -> messages ordered by sender.
  std::map<int, std::vector<NeighborMessage>> inboxes;

  std::span<const NeighborMessage> inbox(int recipient) const;
  std::size_t message_count() const;
};

/// Builds the round's messages from post-KF beliefs. `measurements[k]` belongs to
/// `beliefs[k]`. Each message carries the recipient's pose estimate and the sender's
/// marginals of objects the recipient also tracks. A robot measurement without a
/// matching edge throws InvalidState.
RoundMailbox exchange(int round, std::span<const RobotBelief> beliefs,
                      std::span<const std::vector<Measurement>> measurements, const CommGraph& g);

/// One JSON object: round, from, to, pose[16], cov[36], objects[{id, pose, cov}].
std::string message_to_json(const NeighborMessage& m);
NeighborMessage message_from_json(const std::string& line);

}  // namespace dincikf
