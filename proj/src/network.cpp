#include "dincikf/network.hpp"

#include "dincikf/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <set>
#include <tuple>

namespace dincikf {

using nlohmann::json;

CommGraph::CommGraph(std::vector<int> robots, std::vector<CommEdge> edges, std::vector<int> anchored)
    : robots_(std::move(robots)), edges_(std::move(edges)), anchored_(std::move(anchored)) {
  std::set<int> ids(robots_.begin(), robots_.end());
  if (ids.size() != robots_.size()) throw InvalidArgument("CommGraph: duplicate robot id");
  std::set<std::pair<int, int>> seen;
  for (const CommEdge& e : edges_) {
    const std::string name = "edge " + std::to_string(e.from) + "->" + std::to_string(e.to);
    if (!ids.count(e.from) || !ids.count(e.to)) throw InvalidArgument("CommGraph: " + name + " has an unknown endpoint");
    if (e.from == e.to) throw InvalidArgument("CommGraph: self-loop " + name);
    if (!seen.insert({e.from, e.to}).second) throw InvalidArgument("CommGraph: duplicate " + name);
    require_psd(e.noise_cov, "CommGraph: noise of " + name);
  }
  std::set<int> anchors;
  for (int a : anchored_) {
    if (!ids.count(a)) throw InvalidArgument("CommGraph: unknown anchored robot " + std::to_string(a));
    if (!anchors.insert(a).second) throw InvalidArgument("CommGraph: robot " + std::to_string(a) + " anchored twice");
  }
  std::sort(edges_.begin(), edges_.end(),
            [](const CommEdge& a, const CommEdge& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
  std::sort(anchored_.begin(), anchored_.end());
}

bool CommGraph::has_robot(int id) const { return std::find(robots_.begin(), robots_.end(), id) != robots_.end(); }

bool CommGraph::has_edge(int from, int to) const {
  return std::any_of(edges_.begin(), edges_.end(), [&](const CommEdge& e) { return e.from == from && e.to == to; });
}

bool CommGraph::is_anchored(int id) const {
  return std::find(anchored_.begin(), anchored_.end(), id) != anchored_.end();
}

const CommEdge& CommGraph::edge(int from, int to) const {
  for (const CommEdge& e : edges_)
    if (e.from == from && e.to == to) return e;
  throw InvalidArgument("no edge " + std::to_string(from) + "->" + std::to_string(to));
}

std::vector<int> CommGraph::in_neighbors(int id) const {
  std::vector<int> out;
  for (const CommEdge& e : edges_)
    if (e.to == id) out.push_back(e.from);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> CommGraph::out_neighbors(int id) const {
  std::vector<int> out;
  for (const CommEdge& e : edges_)
    if (e.from == id) out.push_back(e.to);
  std::sort(out.begin(), out.end());
  return out;
}

CommGraph CommGraph::without_anchors() const { return CommGraph(robots_, edges_, {}); }

SpanningTree check_spanning_tree(const CommGraph& g) {
  SpanningTree t;
  std::deque<int> frontier;
  for (int a : g.anchored()) {
    t.parent[a] = kAbsoluteNode;
    frontier.push_back(a);
  }
  if (!frontier.empty()) t.levels.emplace_back(frontier.begin(), frontier.end());
  while (!frontier.empty()) {
    std::vector<int> next;
    const std::size_t width = frontier.size();
    for (std::size_t k = 0; k < width; ++k) {
      const int u = frontier.front();
      frontier.pop_front();
      for (int v : g.out_neighbors(u)) {
        if (t.parent.count(v)) continue;
        t.parent[v] = u;
        next.push_back(v);
      }
    }
    std::sort(next.begin(), next.end());
    for (int v : next) frontier.push_back(v);
    if (!next.empty()) t.levels.push_back(std::move(next));
  }
  for (int r : g.robots())
    if (!t.parent.count(r)) t.unreached.push_back(r);
  t.spans = t.unreached.empty();
  return t;
}

std::span<const NeighborMessage> RoundMailbox::inbox(int recipient) const {
  const auto it = inboxes.find(recipient);
  if (it == inboxes.end()) return {};
  return it->second;
}

std::size_t RoundMailbox::message_count() const {
  std::size_t n = 0;
  for (const auto& [id, msgs] : inboxes) n += msgs.size();
  return n;
}

RoundMailbox exchange(int round, std::span<const RobotBelief> beliefs,
                      std::span<const std::vector<Measurement>> measurements, const CommGraph& g) {
  if (beliefs.size() != measurements.size()) throw InvalidArgument("exchange: one measurement list per belief");
  std::map<int, const RobotBelief*> by_id;
  for (const RobotBelief& b : beliefs) by_id[b.robot_id()] = &b;

  RoundMailbox box;
  box.round = round;
  for (std::size_t k = 0; k < beliefs.size(); ++k) {
    const RobotBelief& sender = beliefs[k];
    for (const Measurement& m : measurements[k]) {
      if (m.kind != MeasurementKind::RobotRel || m.observer != sender.robot_id()) continue;
      if (!g.has_edge(sender.robot_id(), m.subject))
        throw InvalidState("robot " + std::to_string(sender.robot_id()) + " measured robot " +
                           std::to_string(m.subject) + " without a communication edge");
    }
    for (NeighborMessage& msg : outgoing_messages(sender, measurements[k], round)) {
      const auto rec = by_id.find(msg.recipient);
      if (rec == by_id.end()) throw InvalidArgument("exchange: message to unknown robot " + std::to_string(msg.recipient));
      const RobotBelief& recipient = *rec->second;
      std::erase_if(msg.objects, [&](const ObjectEstimate& e) { return !recipient.has_object(e.id); });
      box.inboxes[msg.recipient].push_back(std::move(msg));
    }
  }
  for (auto& [id, msgs] : box.inboxes) {
    std::stable_sort(msgs.begin(), msgs.end(),
                     [](const NeighborMessage& a, const NeighborMessage& b) { return a.sender < b.sender; });
    for (std::size_t q = 1; q < msgs.size(); ++q)
      if (msgs[q].sender == msgs[q - 1].sender)
        throw InvalidState("exchange: two messages from robot " + std::to_string(msgs[q].sender) + " to robot " +
                           std::to_string(id) + " in one round");
  }
  return box;
}

namespace {

json pose_json(const GroupElement& pose) {
  const auto a = pose.pose_row_major();
  return json(std::vector<double>(a.begin(), a.end()));
}

json cov_json(const Matrix6& c) {
  std::vector<double> v;
  v.reserve(36);
  for (int r = 0; r < 6; ++r)
    for (int q = 0; q < 6; ++q) v.push_back(c(r, q));
  return v;
}

GroupElement pose_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 16) throw InvalidArgument("message pose must have 16 entries");
  Matrix4 m;
  for (int r = 0; r < 4; ++r)
    for (int q = 0; q < 4; ++q) m(r, q) = v[4 * r + q];
  return GroupElement::from_matrix(GroupKind::SE3, m);
}

Matrix6 cov_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 36) throw InvalidArgument("message covariance must have 36 entries");
  Matrix6 c;
  for (int r = 0; r < 6; ++r)
    for (int q = 0; q < 6; ++q) c(r, q) = v[6 * r + q];
  return c;
}

}  // namespace

std::string message_to_json(const NeighborMessage& m) {
  json j;
  j["round"] = m.round;
  j["from"] = m.sender;
  j["to"] = m.recipient;
  j["pose"] = pose_json(m.recipient_pose.pose);
  j["cov"] = cov_json(m.recipient_pose.cov);
  j["objects"] = json::array();
  for (const ObjectEstimate& e : m.objects)
    j["objects"].push_back({{"id", e.id}, {"pose", pose_json(e.estimate.pose)}, {"cov", cov_json(e.estimate.cov)}});
  return j.dump();
}

NeighborMessage message_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    NeighborMessage m;
    m.round = j.at("round").get<int>();
    m.sender = j.at("from").get<int>();
    m.recipient = j.at("to").get<int>();
    m.recipient_pose.pose = pose_from_json(j.at("pose"));
    m.recipient_pose.cov = cov_from_json(j.at("cov"));
    for (const json& o : j.at("objects"))
      m.objects.push_back({o.at("id").get<int>(), {pose_from_json(o.at("pose")), cov_from_json(o.at("cov"))}});
    return m;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed message: ") + e.what());
  }
}

}  // namespace dincikf
