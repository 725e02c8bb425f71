//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file tests/channel_adaptation.test.cpp
//---------------------------------------------------------------------------//
#include "qfmesh/channel_adaptation.hpp"

#include <cmath>
#include <map>

#include <gtest/gtest.h>

namespace qfmesh
{
namespace
{
using Heard = TrafficObservation::Heard;

ChannelSequence seq(std::vector<Channel> v)
{
    return ChannelSequence{std::move(v)};
}

// One relay radio (id 4) of node 1 carrying flow 0 with Tx [1,2,3,4]
NodeSchedule relay_node()
{
    NodeSchedule n{NodeId{1}, {RadioId{4}, RadioId{5}, RadioId{6}, RadioId{7}}};
    n.pin(RadioId{4}, FlowId{0}, RadioId{0}, RadioId{8});
    n.radio(RadioId{4}).rx = seq({0, 1, 2, 3});
    n.radio(RadioId{4}).tx = seq({1, 2, 3, 4});
    return n;
}

// Fill a window so that ag(ch) equals per_window[ch] / window exactly
TrafficObservation observation(int window, std::map<Channel, int> per_window)
{
    TrafficObservation obs{window};
    for (int t = 0; t < window; ++t)
    {
        std::vector<Heard> heard;
        for (auto [ch, total] : per_window)
        {
            int n = total / window + (t < total % window ? 1 : 0);
            if (n)
                heard.push_back({ch, n});
        }
        obs.observe_slot(-1, heard);
    }
    return obs;
}

//---------------------------------------------------------------------------//
TEST(TrafficObservation, own_load_only)
{
    TrafficObservation obs{100};
    for (int t = 0; t < 250; ++t)
        obs.observe_slot(3, {});
    EXPECT_DOUBLE_EQ(1.0, obs.ag(3));
    EXPECT_DOUBLE_EQ(0.0, obs.ag(2));
    EXPECT_EQ(ChannelSet{1u << 3}, obs.active_set());
}

TEST(TrafficObservation, counts_same_channel_transmitters)
{
    TrafficObservation a{50}, b{50};
    std::vector<Heard> one{{2, 1}}, two{{2, 2}};
    for (int t = 0; t < 50; ++t)
    {
        a.observe_slot(2, one);
        b.observe_slot(-1, two);
    }
    EXPECT_DOUBLE_EQ(2.0, a.ag(2));
    EXPECT_DOUBLE_EQ(2.0, b.ag(2));
    EXPECT_DOUBLE_EQ(1.0, a.own_load(2));
}

TEST(TrafficObservation, window_slides)
{
    TrafficObservation obs{10};
    std::vector<Heard> jam{{5, 1}};
    for (int t = 0; t < 10; ++t)
        obs.observe_slot(-1, jam);
    EXPECT_DOUBLE_EQ(1.0, obs.busy(5));
    for (int t = 0; t < 4; ++t)
        obs.observe_slot(-1, {});
    EXPECT_DOUBLE_EQ(0.6, obs.busy(5));
    obs.reset_channel(5);
    EXPECT_DOUBLE_EQ(0.0, obs.busy(5));
    for (int t = 0; t < 20; ++t)
        obs.observe_slot(-1, {});
    EXPECT_DOUBLE_EQ(0.0, obs.busy(5));
}

TEST(GoodputStats, ratio_window)
{
    GoodputStats g{4};
    EXPECT_FALSE(g.ratio(1));
    g.record(1, true);
    g.record(1, false);
    g.record(-1, false);
    g.record(2, true);
    EXPECT_DOUBLE_EQ(0.5, *g.ratio(1));
    EXPECT_DOUBLE_EQ(1.0, *g.ratio(2));
    g.record(1, true);  // retires the first record
    EXPECT_DOUBLE_EQ(0.5, *g.ratio(1));
    g.reset_channel(1);
    EXPECT_FALSE(g.ratio(1));
}

//---------------------------------------------------------------------------//
TEST(Adapt, augment_on_heavy_load)
{
    auto node = relay_node();
    // ag = {1: 2.2, 2: 1.1, 3: 1.0, 4: 0.9}, sum 5.2 > |S| = 4
    auto obs = observation(10, {{1, 22}, {2, 11}, {3, 10}, {4, 9}});
    GoodputStats g{10};
    AdaptationParams ap;
    AssignmentParams asg;
    Rng rng{1};
    auto r = adapt(node, RadioId{4}, obs, g, ap, asg, rng);
    EXPECT_EQ(AdaptAction::augment, r.action);
    EXPECT_EQ(1, r.ch_old);
    // Channel 0 is the node's own Rx at that slot
    EXPECT_TRUE(r.ch_new == 5 || r.ch_new == 6);
    EXPECT_NEAR(5.2, r.sum_ag, 1e-12);
    EXPECT_EQ(4, r.active_size);
    auto tx = *node.radio(RadioId{4}).tx;
    EXPECT_EQ(r.ch_new, tx[0]);
    ASSERT_EQ(1u, r.messages.size());
    EXPECT_EQ(MessageKind::seq_update, r.messages[0].kind);
    EXPECT_EQ(RadioId{8}, r.messages[0].dst);
    EXPECT_TRUE(node_conflicts(node).empty());
}

TEST(Adapt, augment_without_outside_channel_falls_through)
{
    auto node = relay_node();
    auto obs = observation(
        10, {{0, 20}, {1, 22}, {2, 11}, {3, 10}, {4, 9}, {5, 10}, {6, 10}});
    GoodputStats g{10};
    for (int i = 0; i < 10; ++i)
        g.record(3, i < 2);
    AdaptationParams ap;
    AssignmentParams asg;
    Rng rng{1};
    auto r = adapt(node, RadioId{4}, obs, g, ap, asg, rng);
    EXPECT_EQ(AdaptAction::migrate, r.action);
    EXPECT_EQ(3, r.ch_old);
}

TEST(Adapt, migrate_off_worst_goodput)
{
    auto node = relay_node();
    auto obs = observation(10, {{1, 8}, {2, 8}, {3, 8}, {4, 8}, {0, 3}, {5, 3}});
    GoodputStats g{100};
    std::map<Channel, double> target{{1, 0.9}, {2, 0.3}, {3, 0.8}, {4, 0.85}};
    for (auto [ch, ratio] : target)
    {
        for (int i = 0; i < 20; ++i)
            g.record(ch, i < std::lround(ratio * 20));
    }
    // Stale history on the candidates, from an earlier tenure
    g.record(0, true);
    g.record(5, true);
    AdaptationParams ap;
    AssignmentParams asg;
    Rng rng{4};
    auto r = adapt(node, RadioId{4}, obs, g, ap, asg, rng);
    EXPECT_EQ(AdaptAction::migrate, r.action);
    EXPECT_EQ(2, r.ch_old);
    EXPECT_TRUE(r.ch_new == 0 || r.ch_new == 5);
    EXPECT_NEAR(0.3, *r.g_min, 1e-12);
    // The incoming channel starts clean; the outgoing one keeps its record
    EXPECT_FALSE(g.ratio(r.ch_new));
    ASSERT_TRUE(g.ratio(2));
    EXPECT_NEAR(0.3, *g.ratio(2), 1e-12);
    EXPECT_TRUE(node_conflicts(node).empty());
}

TEST(Adapt, reduce_when_idle)
{
    auto node = relay_node();
    auto obs = observation(100, {{5, 2}});
    GoodputStats g{100};
    AdaptationParams ap;
    AssignmentParams asg;
    Rng rng{4};
    auto r = adapt(node, RadioId{4}, obs, g, ap, asg, rng);
    EXPECT_EQ(AdaptAction::reduce, r.action);
    EXPECT_EQ(1, r.ch_old);  // all own channels idle: lowest id
    EXPECT_EQ(5, r.ch_new);
}

TEST(Adapt, nothing_to_do_or_no_candidate)
{
    auto node = relay_node();
    AdaptationParams ap;
    AssignmentParams asg;
    Rng rng{4};
    // Moderate load, good goodput
    auto busy = observation(10, {{1, 7}, {2, 7}, {3, 7}, {4, 7}});
    GoodputStats g{10};
    g.record(1, true);
    EXPECT_EQ(AdaptAction::none,
              adapt(node, RadioId{4}, busy, g, ap, asg, rng).action);
    // Idle and nothing outside the own sequence to consolidate onto
    auto idle = observation(10, {});
    auto r = adapt(node, RadioId{4}, idle, g, ap, asg, rng);
    EXPECT_EQ(AdaptAction::none, r.action);
    EXPECT_FALSE(r.note.empty());
    // A radio without a Tx sequence never adapts
    EXPECT_EQ(AdaptAction::none,
              adapt(node, RadioId{5}, busy, g, ap, asg, rng).action);
}

TEST(Adapt, selection_probabilities_follow_inverse_load)
{
    std::vector<Channel> x{0, 1};
    std::map<Channel, double> ag{{0, 1.0}, {1, 3.0}};
    auto p = selection_probabilities(
        x, [&](Channel c) { return ag[c]; }, 100);
    EXPECT_DOUBLE_EQ(0.75, p[0]);
    EXPECT_DOUBLE_EQ(0.25, p[1]);

    auto obs = observation(10, {{0, 10}, {1, 30}, {2, 5}});
    std::vector<Channel> cand{0, 1, 2};
    auto q = selection_probabilities(
        cand, [&](Channel c) { return obs.ag(c); }, 10);
    Rng rng{77};
    int const n = 10000;
    std::array<int, 3> hits{};
    for (int i = 0; i < n; ++i)
        ++hits[static_cast<std::size_t>(detail::draw_inverse_load(cand, obs, 10, rng))];
    for (std::size_t k = 0; k < 3; ++k)
    {
        double sigma = std::sqrt(n * q[k] * (1 - q[k]));
        EXPECT_NEAR(n * q[k], hits[k], 3 * sigma);
    }
}

TEST(Adapt, repeated_adaptation_keeps_node_conflict_free)
{
    Rng rng{5};
    AssignmentParams asg;
    AdaptationParams ap;
    for (int trial = 0; trial < 200; ++trial)
    {
        NodeSchedule n{NodeId{0}, {RadioId{0}, RadioId{1}, RadioId{2}, RadioId{3}}};
        // Three relays with mutually conflict-free sequences
        auto base = gen_random_sequence(7, 4, rng);
        std::vector<ChannelSequence> rows;
        n.pin(RadioId{0}, FlowId{0}, RadioId{10}, RadioId{20});
        n.radio(RadioId{0}).rx = base;
        n.radio(RadioId{0}).tx = right_shift(base, 1);
        n.pin(RadioId{1}, FlowId{1}, RadioId{11}, RadioId{21});
        n.radio(RadioId{1}).rx = right_shift(base, 2);
        n.radio(RadioId{1}).tx = right_shift(base, 3);
        ASSERT_TRUE(node_conflicts(n).empty());
        for (int round = 0; round < 20; ++round)
        {
            std::map<Channel, int> load;
            for (int c = 0; c < 7; ++c)
                load[c] = uniform_int(rng, 0, 25);
            auto obs = observation(10, load);
            GoodputStats g{10};
            for (int c = 0; c < 7; ++c)
                g.record(c, uniform_int(rng, 0, 1) == 1);
            auto r = adapt(n, RadioId{static_cast<int>(round % 2)}, obs, g, ap,
                           asg, rng);
            (void)r;
            ASSERT_TRUE(node_conflicts(n).empty());
            for (auto const& s : n.radios())
            {
                if (s.tx)
                {
                    ASSERT_NO_THROW(validate_sequence(*s.tx, 7, 4));
                }
            }
        }
    }
}

TEST(AdaptationParams, bounds)
{
    AdaptationParams p;
    EXPECT_NO_THROW(p.validate());
    p.theta1 = 1;
    EXPECT_THROW(p.validate(), ConfigError);
    p.theta1 = 0.5;
    p.theta2 = 0;
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(AdaptationLog, format)
{
    AdaptationResult r;
    r.action = AdaptAction::migrate;
    r.ch_old = 2;
    r.ch_new = 5;
    r.sum_ag = 3;
    r.active_size = 6;
    r.g_min = 0.25;
    EXPECT_EQ("120,4,migrate,2,5,3,6,0.25",
              format_adaptation_event(120, RadioId{4}, r));
}

//---------------------------------------------------------------------------//
TEST(ChannelEfficiency, examples)
{
    std::vector<double> one{1.0}, half{0.5, 0.5}, idle{0, 0, 0};
    EXPECT_DOUBLE_EQ(1.0, channel_efficiency(one));
    EXPECT_DOUBLE_EQ(0.5, channel_efficiency(half));
    EXPECT_DOUBLE_EQ(0.0, channel_efficiency(idle));
    std::vector<double> bad{1.5};
    EXPECT_THROW(channel_efficiency(bad), ConfigError);
}

TEST(ChannelEfficiency, matches_exact_enumeration)
{
    // Oracle: sum over all 2^n outcomes of P(outcome) * [exactly one sends]
    Rng rng{3};
    for (int trial = 0; trial < 50; ++trial)
    {
        int n = uniform_int(rng, 1, 6);
        std::vector<double> p;
        for (int i = 0; i < n; ++i)
            p.push_back(uniform_real(rng, 0, 1));
        double expect = 0;
        for (int mask = 0; mask < (1 << n); ++mask)
        {
            double prob = 1;
            for (int i = 0; i < n; ++i)
                prob *= (mask >> i & 1) ? p[static_cast<std::size_t>(i)]
                                        : 1 - p[static_cast<std::size_t>(i)];
            if (std::popcount(static_cast<unsigned>(mask)) == 1)
                expect += prob;
        }
        EXPECT_NEAR(expect, channel_efficiency(p), 1e-12);
    }
}

TEST(SchedulingEfficiency, examples)
{
    auto always = [](int, int) { return true; };
    std::vector<SlotSchedule> lone(5, SlotSchedule{{0, 3, 1.0}});
    EXPECT_DOUBLE_EQ(1.0, avg_scheduling_efficiency(lone, always));

    std::vector<SlotSchedule> same(5, SlotSchedule{{0, 3, 1.0}, {1, 3, 1.0}});
    EXPECT_DOUBLE_EQ(0.0, avg_scheduling_efficiency(same, always));

    std::vector<SlotSchedule> apart(5, SlotSchedule{{0, 3, 1.0}, {1, 4, 1.0}});
    EXPECT_DOUBLE_EQ(2.0, avg_scheduling_efficiency(apart, always));

    auto never = [](int, int) { return false; };
    EXPECT_DOUBLE_EQ(2.0, avg_scheduling_efficiency(same, never));
    EXPECT_THROW(avg_scheduling_efficiency({}, always), ConfigError);
}

}  // namespace
}  // namespace qfmesh
