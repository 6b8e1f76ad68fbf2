#include "dincikf/errors.hpp"
#include "dincikf/network.hpp"
#include "dincikf/sim.hpp"
#include "test_support.hpp"

#include <algorithm>

using namespace dincikf;
using dincikf::testing::max_abs;
using dincikf::testing::random_element;
using dincikf::testing::random_spd;
using dincikf::testing::scenario_path;

namespace {

CommEdge edge(int from, int to) { return {from, to, 0.01 * Matrix6::Identity()}; }

}  // namespace

TEST(CommGraphTest, ValidatesConstruction) {
  EXPECT_THROW(CommGraph({1, 1}, {}, {}), InvalidArgument);
  EXPECT_THROW(CommGraph({1, 2}, {edge(1, 3)}, {}), InvalidArgument);
  EXPECT_THROW(CommGraph({1, 2}, {edge(1, 1)}, {}), InvalidArgument);
  EXPECT_THROW(CommGraph({1, 2}, {edge(1, 2), edge(1, 2)}, {}), InvalidArgument);
  EXPECT_THROW(CommGraph({1, 2}, {{1, 2, -Matrix6::Identity()}}, {}), InvalidArgument);
  EXPECT_THROW(CommGraph({1, 2}, {}, {3}), InvalidArgument);

  const CommGraph g({1, 2, 3}, {edge(3, 1), edge(1, 2), edge(2, 1)}, {1});
  EXPECT_EQ(g.in_neighbors(1), (std::vector<int>{2, 3}));
  EXPECT_EQ(g.out_neighbors(1), (std::vector<int>{2}));
  EXPECT_TRUE(g.has_edge(3, 1));
  EXPECT_FALSE(g.has_edge(1, 3));
  EXPECT_THROW(g.edge(1, 3), InvalidArgument);
  EXPECT_TRUE(g.is_anchored(1));
  EXPECT_TRUE(g.without_anchors().anchored().empty());
}

TEST(SpanningTreeTest, ChainHasOneRobotPerLevel) {
  const CommGraph g({1, 2, 3}, {edge(1, 2), edge(2, 3)}, {1});
  const SpanningTree t = check_spanning_tree(g);
  EXPECT_TRUE(t.spans);
  EXPECT_EQ(t.levels, (std::vector<std::vector<int>>{{1}, {2}, {3}}));
  EXPECT_EQ(t.parent.at(1), kAbsoluteNode);
  EXPECT_EQ(t.parent.at(3), 2);
}

TEST(SpanningTreeTest, DisconnectedComponentIsReported) {
  const CommGraph g({1, 2, 3, 4}, {edge(1, 2), edge(3, 4), edge(4, 3)}, {1});
  const SpanningTree t = check_spanning_tree(g);
  EXPECT_FALSE(t.spans);
  EXPECT_EQ(t.unreached, (std::vector<int>{3, 4}));
  EXPECT_FALSE(check_spanning_tree(g.without_anchors()).spans);
}

TEST(SpanningTreeTest, Sim1TopologySpans) {
  const ScenarioConfig cfg = load_scenario(scenario_path("sim1.json").string());
  const SpanningTree t = check_spanning_tree(cfg.graph());
  EXPECT_TRUE(t.spans);
  EXPECT_EQ(t.levels.front(), std::vector<int>{2});
  EXPECT_EQ(t.parent.at(5), 4);
}

TEST(Exchange, EmptyGraphGivesEmptyMailbox) {
  const CommGraph g({1, 2}, {}, {});
  const std::vector<RobotBelief> beliefs = {RobotBelief(1, GroupElement(), Matrix6::Identity()),
                                            RobotBelief(2, GroupElement(), Matrix6::Identity())};
  const std::vector<std::vector<Measurement>> ms(2);
  EXPECT_EQ(exchange(0, beliefs, ms, g).message_count(), 0u);
}

TEST(Exchange, SingleEdgeWithoutCommonObjects) {
  const CommGraph g({1, 2}, {edge(1, 2)}, {});
  std::vector<RobotBelief> beliefs = {RobotBelief(1, GroupElement(), Matrix6::Identity()),
                                      RobotBelief(2, GroupElement(), Matrix6::Identity())};
  beliefs[0] = initialize_object(beliefs[0], {MeasurementKind::ObjectRel, 1, 9, GroupElement(), Matrix6::Identity()});
  std::vector<std::vector<Measurement>> ms(2);
  ms[0].push_back({MeasurementKind::RobotRel, 1, 2, GroupElement(), 0.01 * Matrix6::Identity()});
  const RoundMailbox box = exchange(3, beliefs, ms, g);
  ASSERT_EQ(box.message_count(), 1u);
  const auto inbox = box.inbox(2);
  ASSERT_EQ(inbox.size(), 1u);
  EXPECT_EQ(inbox[0].sender, 1);
  EXPECT_EQ(inbox[0].round, 3);
  EXPECT_TRUE(inbox[0].objects.empty());
  EXPECT_TRUE(box.inbox(1).empty());
}

TEST(Exchange, MeasurementOnNonEdgeThrows) {
  const CommGraph g({1, 2}, {edge(1, 2)}, {});
  const std::vector<RobotBelief> beliefs = {RobotBelief(1, GroupElement(), Matrix6::Identity()),
                                            RobotBelief(2, GroupElement(), Matrix6::Identity())};
  std::vector<std::vector<Measurement>> ms(2);
  ms[1].push_back({MeasurementKind::RobotRel, 2, 1, GroupElement(), 0.01 * Matrix6::Identity()});
  EXPECT_THROW(exchange(0, beliefs, ms, g), InvalidState);
}

TEST(Exchange, Sim1MessagesMatchEdges) {
  const ScenarioConfig cfg = load_scenario(scenario_path("sim1.json").string());
  const CommGraph g = cfg.graph();
  WorldState w = initial_world(cfg);
  std::vector<RobotBelief> beliefs = initial_beliefs(w, cfg, 1);
  const FilterConfig fc;
  for (int round = 0; round < 3; ++round) {
    w = ground_truth_step(w, cfg).world;
    const auto ms = sense(w, cfg, 1);
    for (std::size_t k = 0; k < beliefs.size(); ++k) beliefs[k] = local_update(beliefs[k], ms[k], w.round, fc).belief;
    const RoundMailbox box = exchange(w.round, beliefs, ms, g);
    std::vector<std::pair<int, int>> got;
    for (const auto& [to, msgs] : box.inboxes) {
      for (const NeighborMessage& m : msgs) {
        got.emplace_back(m.sender, m.recipient);
        EXPECT_EQ(m.recipient, to);
        const RobotBelief& rec = beliefs[cfg.robot_index(to)];
        for (const ObjectEstimate& o : m.objects) EXPECT_TRUE(rec.has_object(o.id));
      }
      EXPECT_TRUE(std::is_sorted(msgs.begin(), msgs.end(),
                                 [](const NeighborMessage& a, const NeighborMessage& b) { return a.sender < b.sender; }));
    }
    std::vector<std::pair<int, int>> want;
    for (const CommEdge& e : g.edges()) want.emplace_back(e.from, e.to);
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, want);

    const RoundMailbox again = exchange(w.round, beliefs, ms, g);
    EXPECT_EQ(again.message_count(), box.message_count());
  }
}

TEST(MessageJson, RoundTrips) {
  RandomStream rng(71);
  NeighborMessage m;
  m.round = 12;
  m.sender = 4;
  m.recipient = 5;
  m.recipient_pose = {random_element(rng, GroupKind::SE3), random_spd(rng, 6)};
  m.objects.push_back({17, {random_element(rng, GroupKind::SE3), random_spd(rng, 6)}});
  const std::string line = message_to_json(m);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const NeighborMessage back = message_from_json(line);
  EXPECT_EQ(back.round, 12);
  EXPECT_EQ(back.sender, 4);
  EXPECT_EQ(back.recipient, 5);
  EXPECT_EQ(back.recipient_pose.cov, m.recipient_pose.cov);
  EXPECT_LT(max_abs(back.recipient_pose.pose.matrix() - m.recipient_pose.pose.matrix()), 0.0 + 1e-300);
  ASSERT_EQ(back.objects.size(), 1u);
  EXPECT_EQ(back.objects[0].id, 17);
  EXPECT_EQ(back.objects[0].estimate.cov, m.objects[0].estimate.cov);
  EXPECT_THROW(message_from_json("{\"round\": 1}"), InvalidArgument);
}
