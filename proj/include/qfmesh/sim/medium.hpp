//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/sim/medium.hpp
//! Per-slot reception outcomes under the disk model, and the jammer.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "../mesh_model.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
struct Transmission
{
    RadioId src;
    RadioId dst;
    Channel channel;
};

enum class Outcome
{
    delivered,  //!< data and ACK both succeed
    collided,
    jammed,
};

inline char const* to_string(Outcome o)
{
    switch (o)
    {
        case Outcome::delivered:
            return "delivered";
        case Outcome::collided:
            return "collided";
        case Outcome::jammed:
            return "jammed";
    }
    return "?";
}

//! Disk jammer; inactive until channels are selected.
struct JammerState
{
    bool active{false};
    Vec2 center;
    double radius{0};
    ChannelSet channels;

    bool covers(Vec2 p) const
    {
        return active && distance(p, center) <= radius;
    }
    bool jams(Vec2 receiver, Channel ch) const
    {
        return covers(receiver) && channels.contains(ch);
    }
};

/*!
 * Outcome of every transmission in one slot.
 *
 * A reception fails if the receiver is jammed on that channel, or if some
 * other same-channel sender is co-located with the receiver or within R_i
 * of it. Jamming takes precedence. When \c interferers is given it
 * receives, per transmission, the indices of the colliding senders.
 */
inline std::vector<Outcome>
resolve_slot(Topology const& topo,
             std::span<Transmission const> txs,
             JammerState const& jammer,
             std::vector<std::vector<std::size_t>>* interferers = nullptr)
{
    // A relay radio may send and receive in one slot, but never appear
    // twice in the same role
    {
        std::vector<RadioId> srcs, dsts;
        for (auto const& t : txs)
        {
            srcs.push_back(t.src);
            dsts.push_back(t.dst);
        }
        std::sort(srcs.begin(), srcs.end());
        std::sort(dsts.begin(), dsts.end());
        if (std::adjacent_find(srcs.begin(), srcs.end()) != srcs.end()
            || std::adjacent_find(dsts.begin(), dsts.end()) != dsts.end())
            throw std::logic_error("radio appears twice in one slot");
    }

    double ri = topo.radii().interference;
    std::vector<Outcome> out(txs.size(), Outcome::delivered);
    if (interferers)
        interferers->assign(txs.size(), {});
    for (std::size_t i = 0; i < txs.size(); ++i)
    {
        auto rx_node = topo.node_of(txs[i].dst);
        auto rx_pos = topo.node(rx_node).position;
        if (jammer.jams(rx_pos, txs[i].channel))
            out[i] = Outcome::jammed;
        for (std::size_t k = 0; k < txs.size(); ++k)
        {
            if (k == i || txs[k].channel != txs[i].channel)
                continue;
            auto src_node = topo.node_of(txs[k].src);
            if (src_node == rx_node
                || distance(topo.node(src_node).position, rx_pos) <= ri)
            {
                if (out[i] == Outcome::delivered)
                    out[i] = Outcome::collided;
                if (interferers)
                    (*interferers)[i].push_back(k);
            }
        }
    }
    return out;
}

/*!
 * Top-k channels by observed traffic, ties to the lower channel id.
 */
inline ChannelSet jammer_select(std::span<std::int64_t const> histogram,
                                int count = 2)
{
    std::vector<Channel> order(histogram.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Channel a, Channel b) {
        return histogram[static_cast<std::size_t>(a)]
               > histogram[static_cast<std::size_t>(b)];
    });
    ChannelSet out;
    for (int i = 0; i < count && i < static_cast<int>(order.size()); ++i)
        out.insert(order[static_cast<std::size_t>(i)]);
    return out;
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
