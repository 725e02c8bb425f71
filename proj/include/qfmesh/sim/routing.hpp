//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/sim/routing.hpp
//! Minimum-interference path search over the transmission graph.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <tuple>
#include <vector>

#include "../mesh_model.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
using LinkWeight = std::function<double(NodeId from, NodeId to)>;
using NodeFilter = std::function<bool(NodeId)>;

/*!
 * Lightest path from \c src to \c dst over links no longer than R_t.
 *
 * Paths compare by total weight, then hop count, then the id of the last
 * relaxed predecessor. Nodes rejected by \c usable are never entered
 * (endpoints included). Returns nothing when no path exists.
 */
inline std::optional<std::vector<NodeId>>
route_flow(NeighborIndex const& links,
           std::size_t node_count,
           NodeId src,
           NodeId dst,
           LinkWeight const& weight,
           NodeFilter const& usable = {})
{
    if (src == dst)
        throw ConfigError("flow endpoints must differ");
    auto ok = [&](NodeId n) { return !usable || usable(n); };
    if (!ok(src) || !ok(dst))
        return std::nullopt;

    using Key = std::tuple<double, int, int>;  // weight, hops, node
    double const inf = std::numeric_limits<double>::infinity();
    std::vector<double> w(node_count, inf);
    std::vector<int> hops(node_count, std::numeric_limits<int>::max());
    std::vector<int> pred(node_count, -1);
    std::vector<bool> done(node_count, false);
    std::priority_queue<Key, std::vector<Key>, std::greater<>> pq;

    auto idx = [](NodeId n) { return static_cast<std::size_t>(n.get()); };
    w[idx(src)] = 0;
    hops[idx(src)] = 0;
    pq.emplace(0.0, 0, src.get());
    while (!pq.empty())
    {
        auto [cw, ch, u] = pq.top();
        pq.pop();
        auto ui = static_cast<std::size_t>(u);
        if (done[ui])
            continue;
        done[ui] = true;
        if (NodeId{u} == dst)
            break;
        for (auto v : links.neighbors(NodeId{u}))
        {
            auto vi = idx(v);
            if (done[vi] || !ok(v))
                continue;
            double nw = cw + weight(NodeId{u}, v);
            int nh = ch + 1;
            if (std::tie(nw, nh, u) < std::tie(w[vi], hops[vi], pred[vi]))
            {
                w[vi] = nw;
                hops[vi] = nh;
                pred[vi] = u;
                pq.emplace(nw, nh, v.get());
            }
        }
    }
    if (!done[idx(dst)])
        return std::nullopt;
    std::vector<NodeId> path;
    for (int n = dst.get(); n != -1; n = pred[static_cast<std::size_t>(n)])
        path.push_back(NodeId{n});
    std::reverse(path.begin(), path.end());
    return path;
}

//! Nodes reachable from \c src (itself included) over links within R_t.
inline std::size_t component_size(NeighborIndex const& links,
                                  std::size_t node_count,
                                  NodeId src)
{
    std::vector<bool> seen(node_count, false);
    std::vector<NodeId> stack{src};
    seen[static_cast<std::size_t>(src.get())] = true;
    std::size_t n = 0;
    while (!stack.empty())
    {
        auto u = stack.back();
        stack.pop_back();
        ++n;
        for (auto v : links.neighbors(u))
        {
            auto vi = static_cast<std::size_t>(v.get());
            if (!seen[vi])
            {
                seen[vi] = true;
                stack.push_back(v);
            }
        }
    }
    return n;
}

inline bool connected(NeighborIndex const& links,
                      std::size_t node_count,
                      NodeId a,
                      NodeId b)
{
    std::vector<bool> seen(node_count, false);
    std::vector<NodeId> stack{a};
    seen[static_cast<std::size_t>(a.get())] = true;
    while (!stack.empty())
    {
        auto u = stack.back();
        stack.pop_back();
        if (u == b)
            return true;
        for (auto v : links.neighbors(u))
        {
            auto vi = static_cast<std::size_t>(v.get());
            if (!seen[vi])
            {
                seen[vi] = true;
                stack.push_back(v);
            }
        }
    }
    return false;
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
