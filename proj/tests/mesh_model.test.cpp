//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file tests/mesh_model.test.cpp
//---------------------------------------------------------------------------//
#include "qfmesh/mesh_model.hpp"

#include <set>

#include <gtest/gtest.h>

namespace qfmesh
{
namespace
{
//---------------------------------------------------------------------------//
// Brute-force oracle: pairwise distances, no caching
std::set<int> phi_oracle(Topology const& t, RadioId r)
{
    std::set<int> out;
    int C = t.radios_per_node();
    int self = r.get() / C;
    auto p = t.nodes()[static_cast<std::size_t>(self)].position;
    for (int j = 0; j < static_cast<int>(t.radio_count()); ++j)
    {
        if (j == r.get())
            continue;
        auto q = t.nodes()[static_cast<std::size_t>(j / C)].position;
        if (j / C == self || distance(p, q) <= t.radii().interference)
            out.insert(j);
    }
    return out;
}

std::set<int> as_set(InterferenceSet const& s)
{
    std::set<int> out;
    for (auto r : s.members)
        out.insert(r.get());
    return out;
}

TEST(BuildTopology, default_size_and_density)
{
    Rng rng{1};
    auto t = build_topology(125, 2, Radii{1000, 1000}, rng);
    EXPECT_EQ(125u, t.node_count());
    EXPECT_EQ(500u, t.radio_count());
    EXPECT_NEAR(62.5e6, t.area().width * t.area().height, 1.0);
    EXPECT_NEAR(2.0, realized_density(t), 1e-9);
    for (auto const& n : t.nodes())
        EXPECT_TRUE(t.area().contains(n.position));
}

TEST(BuildTopology, rejects_bad_dimensions)
{
    Rng rng{1};
    EXPECT_THROW(build_topology(0, 2, {}, rng), ConfigError);
    EXPECT_THROW(build_topology(10, 0, {}, rng), ConfigError);
    EXPECT_THROW(build_topology(10, 2, Radii{1000, 500}, rng), ConfigError);
    EXPECT_THROW(build_topology(10, 2, Radii{0, 0}, rng), ConfigError);
}

TEST(BuildTopology, seeded_placement_is_reproducible)
{
    Rng a{42}, b{42};
    auto ta = build_topology(64, 2, {}, a);
    auto tb = build_topology(64, 2, {}, b);
    EXPECT_EQ(topology_snapshot(ta), topology_snapshot(tb));
}

TEST(InterferenceSet, single_node_sees_only_siblings)
{
    Rng rng{3};
    auto t = build_topology(1, 0.5, {}, rng);
    for (int r = 0; r < 4; ++r)
    {
        auto s = interference_set(t, RadioId{r});
        EXPECT_EQ(3u, s.members.size());
    }
}

TEST(InterferenceSet, beyond_interference_radius)
{
    auto t = topology_from_positions({{0, 0}, {1500, 0}}, Area{2000, 10},
                                     Radii{1000, 1000}, 4);
    for (int r = 0; r < 8; ++r)
    {
        auto s = as_set(interference_set(t, RadioId{r}));
        EXPECT_EQ(3u, s.size());
        for (auto m : s)
            EXPECT_EQ(r / 4, m / 4);
    }
}

TEST(InterferenceSet, two_nodes_within_range)
{
    auto t = topology_from_positions({{0, 0}, {900, 0}}, Area{1000, 10},
                                     Radii{1000, 1000}, 4);
    for (int r = 0; r < 8; ++r)
        EXPECT_EQ(7u, interference_set(t, RadioId{r}).members.size());
}

TEST(InterferenceSet, unknown_radio)
{
    auto t = topology_from_positions({{0, 0}}, Area{10, 10}, {}, 4);
    EXPECT_THROW(interference_set(t, RadioId{4}), UnknownId);
    EXPECT_THROW(interference_set(t, RadioId{-1}), UnknownId);
}

TEST(InterferenceSet, matches_oracle_and_is_symmetric)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed)
    {
        Rng rng{seed};
        auto t = build_topology(30, 3, Radii{1000, 1500}, rng, 3);
        EXPECT_EQ(2, t.delta());
        std::vector<std::set<int>> phi;
        for (int r = 0; r < static_cast<int>(t.radio_count()); ++r)
        {
            phi.push_back(as_set(interference_set(t, RadioId{r})));
            EXPECT_EQ(phi_oracle(t, RadioId{r}), phi.back());
        }
        for (std::size_t i = 0; i < phi.size(); ++i)
        {
            for (auto j : phi[i])
            {
                EXPECT_TRUE(phi[static_cast<std::size_t>(j)].count(
                    static_cast<int>(i)));
                EXPECT_TRUE(t.interferes(RadioId{static_cast<int>(i)},
                                         RadioId{j}));
            }
        }
    }
}

TEST(NeighborIndex, agrees_with_distance)
{
    Rng rng{8};
    auto t = build_topology(40, 2, {}, rng);
    NeighborIndex idx{t, 1000};
    for (auto const& a : t.nodes())
    {
        for (auto const& b : t.nodes())
        {
            bool expect = a.id == b.id
                          || distance(a.position, b.position) <= 1000;
            EXPECT_EQ(expect, idx.near(a.id, b.id));
        }
    }
}

TEST(Mobility, zero_speed_is_identity)
{
    Rng rng{5};
    auto t = build_topology(20, 2, {}, rng);
    auto before = topology_snapshot(t);
    for (int i = 0; i < 100; ++i)
        t = step_mobility(t, 0.5, rng);
    EXPECT_EQ(before, topology_snapshot(t));
    EXPECT_THROW(step_mobility(t, 0, rng), ConfigError);
}

TEST(Mobility, full_memory_moves_in_a_straight_line)
{
    MobilityParams mp;
    mp.mean_speed = 10;
    mp.alpha = 1;
    auto t = topology_from_positions({{5000, 5000}}, Area{10000, 10000}, {},
                                     4, mp);
    t.nodes()[0].motion.heading = 0.5;
    t.nodes()[0].motion.mean_heading = 0.5;
    Rng rng{2};
    for (int i = 0; i < 10; ++i)
        t = step_mobility(t, 1.0, rng);
    auto p = t.nodes()[0].position;
    EXPECT_NEAR(5000 + 100 * std::cos(0.5), p.x, 1e-9);
    EXPECT_NEAR(5000 + 100 * std::sin(0.5), p.y, 1e-9);
    EXPECT_DOUBLE_EQ(10, t.nodes()[0].motion.speed);
}

TEST(Mobility, stationary_mean_speed_and_containment)
{
    MobilityParams mp;
    mp.mean_speed = 10;
    Rng rng{11};
    auto t = build_topology(10, 2, {}, rng, 4, mp);
    double sum = 0;
    int samples = 0;
    for (int i = 0; i < 1000; ++i)
    {
        t = step_mobility(t, 0.01, rng);
        for (auto const& n : t.nodes())
        {
            sum += n.motion.speed;
            ++samples;
            ASSERT_TRUE(t.area().contains(n.position));
        }
    }
    EXPECT_NEAR(10.0, sum / samples, 0.5);
}

TEST(Mobility, reflects_at_border)
{
    MobilityParams mp;
    mp.mean_speed = 50;
    mp.alpha = 1;
    auto t = topology_from_positions({{990, 500}}, Area{1000, 1000}, {}, 4, mp);
    Rng rng{1};
    t = step_mobility(t, 1.0, rng);
    EXPECT_NEAR(960, t.nodes()[0].position.x, 1e-9);
    EXPECT_LT(std::cos(t.nodes()[0].motion.heading), 0);
}

TEST(Snapshot, golden)
{
    auto t = topology_from_positions({{0, 0}, {1.5, 2.25}}, Area{10, 10},
                                     Radii{1000, 2000}, 2);
    EXPECT_EQ(
        "# area_m=10x10 r_t=1000 r_i=2000 radios_per_node=2\n"
        "node_id,x_m,y_m,radios\n"
        "0,0.000,0.000,0 1\n"
        "1,1.500,2.250,2 3\n",
        topology_snapshot(t));
    EXPECT_EQ(2, t.delta());
}

//---------------------------------------------------------------------------//
}  // namespace
}  // namespace qfmesh
