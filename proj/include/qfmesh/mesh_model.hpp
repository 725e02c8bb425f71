//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/mesh_model.hpp
//! Network geometry, radio inventory, unit-disk interference sets and
//! Gauss-Markov mobility.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <vector>

#include "common.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
struct Vec2
{
    double x{0};
    double y{0};

    friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline double distance(Vec2 a, Vec2 b)
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

//! Axis-aligned deployment rectangle with its corner at the origin.
struct Area
{
    double width{0};
    double height{0};

    Vec2 center() const { return {width / 2, height / 2}; }
    bool contains(Vec2 p) const
    {
        return p.x >= 0 && p.x <= width && p.y >= 0 && p.y <= height;
    }
};

struct Radii
{
    double transmission{1000};  //!< R_t [m]
    double interference{1000};  //!< R_i [m]
};

//! Gauss-Markov recurrence parameters.
struct MobilityParams
{
    double mean_speed{0};  //!< [m/s]; zero makes every node stationary
    double alpha{0.75};  //!< memory in [0, 1]
    double sigma_speed{1.0};  //!< [m/s]
    double sigma_heading{0.3};  //!< [rad]
};

struct MotionState
{
    double speed{0};  //!< [m/s]
    double heading{0};  //!< [rad]
    double mean_speed{0};
    double mean_heading{0};
};

struct NodeState
{
    NodeId id;
    Vec2 position;
    MotionState motion;
    std::vector<RadioId> radios;
};

struct InterferenceSet
{
    RadioId radio;
    std::vector<RadioId> members;  //!< sorted, excludes \c radio
};

//---------------------------------------------------------------------------//
/*!
 * Node placement plus the radio inventory derived from it.
 *
 * Radio ids are dense: node n owns radios [n*C, (n+1)*C).
 */
class Topology
{
  public:
    Topology() = default;

    Topology(std::vector<NodeState> nodes,
             Area area,
             Radii radii,
             int radios_per_node,
             MobilityParams mobility = {})
        : nodes_{std::move(nodes)}
        , area_{area}
        , radii_{radii}
        , radios_per_node_{radios_per_node}
        , mobility_{mobility}
    {
        if (!(radii_.transmission > 0))
            throw ConfigError("transmission radius must be positive");
        if (radii_.interference < radii_.transmission)
            throw ConfigError(
                "interference radius must be at least the transmission "
                "radius");
        if (radios_per_node_ < 1)
            throw ConfigError("each node needs at least one radio");
        for (std::size_t i = 0; i < nodes_.size(); ++i)
        {
            if (nodes_[i].id.get() != static_cast<int>(i))
                throw ConfigError("node ids must be dense and ordered");
            if (static_cast<int>(nodes_[i].radios.size()) != radios_per_node_)
                throw ConfigError("node radio count differs from C");
        }
    }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t radio_count() const
    {
        return nodes_.size() * static_cast<std::size_t>(radios_per_node_);
    }
    int radios_per_node() const { return radios_per_node_; }
    Area const& area() const { return area_; }
    Radii const& radii() const { return radii_; }
    MobilityParams const& mobility() const { return mobility_; }
    std::vector<NodeState> const& nodes() const { return nodes_; }
    std::vector<NodeState>& nodes() { return nodes_; }

    //! Delta = ceil(R_i / R_t).
    int delta() const
    {
        return static_cast<int>(
            std::ceil(radii_.interference / radii_.transmission - 1e-12));
    }

    NodeState const& node(NodeId id) const
    {
        if (!id.valid() || static_cast<std::size_t>(id.get()) >= nodes_.size())
            throw UnknownId("unknown node id");
        return nodes_[static_cast<std::size_t>(id.get())];
    }

    bool has_radio(RadioId r) const
    {
        return r.valid() && static_cast<std::size_t>(r.get()) < radio_count();
    }

    NodeId node_of(RadioId r) const
    {
        if (!has_radio(r))
            throw UnknownId("unknown radio id");
        return NodeId{r.get() / radios_per_node_};
    }

    RadioId radio(NodeId n, int index) const
    {
        return RadioId{n.get() * radios_per_node_ + index};
    }

    double node_distance(NodeId a, NodeId b) const
    {
        return distance(node(a).position, node(b).position);
    }

    //! Whether two distinct radios interfere (same node or within R_i).
    bool interferes(RadioId a, RadioId b) const
    {
        if (a == b)
            return false;
        auto na = node_of(a);
        auto nb = node_of(b);
        return na == nb || node_distance(na, nb) <= radii_.interference;
    }

  private:
    std::vector<NodeState> nodes_;
    Area area_;
    Radii radii_;
    int radios_per_node_{4};
    MobilityParams mobility_;
};

//---------------------------------------------------------------------------//
// CONSTRUCTION
//---------------------------------------------------------------------------//
namespace detail
{
inline std::vector<RadioId> radios_for(int node, int per_node)
{
    std::vector<RadioId> out;
    for (int k = 0; k < per_node; ++k)
        out.emplace_back(node * per_node + k);
    return out;
}
}  // namespace detail

//! Topology with explicitly placed nodes (test hook and fixed scenarios).
inline Topology topology_from_positions(std::vector<Vec2> const& positions,
                                        Area area,
                                        Radii radii,
                                        int radios_per_node,
                                        MobilityParams mobility = {})
{
    std::vector<NodeState> nodes;
    nodes.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i)
    {
        NodeState n;
        n.id = NodeId{static_cast<int>(i)};
        n.position = positions[i];
        n.motion.speed = mobility.mean_speed;
        n.motion.mean_speed = mobility.mean_speed;
        n.radios = detail::radios_for(static_cast<int>(i), radios_per_node);
        nodes.push_back(std::move(n));
    }
    return Topology{std::move(nodes), area, radii, radios_per_node, mobility};
}

/*!
 * Place \c count nodes uniformly at random in a square sized so that the
 * average number of nodes per R_t^2 equals \c density.
 */
inline Topology build_topology(int count,
                               double density,
                               Radii radii,
                               Rng& rng,
                               int radios_per_node = 4,
                               MobilityParams mobility = {})
{
    if (count <= 0)
        throw ConfigError("node count must be positive");
    if (!(density > 0))
        throw ConfigError("density must be positive");
    if (!(radii.transmission > 0) || radii.interference < radii.transmission)
        throw ConfigError("radii must satisfy R_i >= R_t > 0");

    double side = std::sqrt(count / density) * radii.transmission;
    Area area{side, side};

    std::vector<NodeState> nodes;
    nodes.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
    {
        NodeState n;
        n.id = NodeId{i};
        n.position = {uniform_real(rng, 0, side), uniform_real(rng, 0, side)};
        double heading = uniform_real(rng, 0, 2 * std::numbers::pi);
        n.motion = {mobility.mean_speed, heading, mobility.mean_speed, heading};
        n.radios = detail::radios_for(i, radios_per_node);
        nodes.push_back(std::move(n));
    }
    return Topology{std::move(nodes), area, radii, radios_per_node, mobility};
}

//! Nodes per R_t^2 implied by a topology's area.
inline double realized_density(Topology const& t)
{
    double cells = t.area().width * t.area().height
                   / (t.radii().transmission * t.radii().transmission);
    return static_cast<double>(t.node_count()) / cells;
}

//---------------------------------------------------------------------------//
// INTERFERENCE
//---------------------------------------------------------------------------//
//! Phi(i): same-node radios plus every radio within R_i.
inline InterferenceSet interference_set(Topology const& t, RadioId radio)
{
    if (!t.has_radio(radio))
        throw UnknownId("unknown radio id");
    InterferenceSet out{radio, {}};
    auto self = t.node_of(radio);
    auto const& p = t.node(self).position;
    for (auto const& n : t.nodes())
    {
        if (n.id != self
            && distance(n.position, p) > t.radii().interference)
            continue;
        for (auto r : n.radios)
        {
            if (r != radio)
                out.members.push_back(r);
        }
    }
    return out;
}

/*!
 * Node-level neighbor lists within a radius, recomputed from positions.
 *
 * Used by the simulator as the per-slot interference cache.
 */
class NeighborIndex
{
  public:
    NeighborIndex() = default;

    NeighborIndex(Topology const& t, double radius) { rebuild(t, radius); }

    void rebuild(Topology const& t, double radius)
    {
        auto n = t.node_count();
        radius_ = radius;
        near_.assign(n * n, false);
        lists_.assign(n, {});
        auto const& nodes = t.nodes();
        for (std::size_t a = 0; a < n; ++a)
        {
            near_[a * n + a] = true;
            for (std::size_t b = a + 1; b < n; ++b)
            {
                if (distance(nodes[a].position, nodes[b].position) <= radius)
                {
                    near_[a * n + b] = near_[b * n + a] = true;
                    lists_[a].push_back(nodes[b].id);
                    lists_[b].push_back(nodes[a].id);
                }
            }
        }
        for (auto& l : lists_)
            std::sort(l.begin(), l.end());
        count_ = n;
    }

    //! Same node or within the radius.
    bool near(NodeId a, NodeId b) const
    {
        return near_[static_cast<std::size_t>(a.get()) * count_
                     + static_cast<std::size_t>(b.get())];
    }

    //! Other nodes within the radius, sorted.
    std::vector<NodeId> const& neighbors(NodeId a) const
    {
        return lists_[static_cast<std::size_t>(a.get())];
    }

    double radius() const { return radius_; }

  private:
    std::vector<bool> near_;
    std::vector<std::vector<NodeId>> lists_;
    std::size_t count_{0};
    double radius_{0};
};

//---------------------------------------------------------------------------//
// MOBILITY
//---------------------------------------------------------------------------//
namespace detail
{
//! Mirror a coordinate into [0, extent]; returns true if it was reflected.
inline bool reflect(double& v, double extent)
{
    bool flipped = false;
    // Large steps may cross both walls
    for (int guard = 0; guard < 8 && (v < 0 || v > extent); ++guard)
    {
        v = v < 0 ? -v : 2 * extent - v;
        flipped = !flipped;
    }
    v = std::clamp(v, 0.0, extent);
    return flipped;
}
}  // namespace detail

/*!
 * Advance every node by one Gauss-Markov step of length \c dt.
 *
 * speed' = a*s + (1-a)*mean + sqrt(1-a^2)*sigma_s*N(0,1), likewise for the
 * heading; the node then moves dt*speed' along heading'. Nodes whose mean
 * speed is zero are stationary. Headings (and their means) are mirrored at
 * the area borders.
 */
inline Topology step_mobility(Topology const& t, double dt, Rng& rng)
{
    if (!(dt > 0))
        throw ConfigError("mobility step must be positive");
    Topology out = t;
    auto const& p = t.mobility();
    double a = std::clamp(p.alpha, 0.0, 1.0);
    double noise = std::sqrt(std::max(0.0, 1 - a * a));
    std::normal_distribution<double> gauss{0.0, 1.0};
    auto const& area = t.area();

    for (auto& n : out.nodes())
    {
        auto& m = n.motion;
        if (m.mean_speed == 0 && m.speed == 0)
            continue;
        double zs = gauss(rng);
        double zh = gauss(rng);
        m.speed = std::max(
            0.0, a * m.speed + (1 - a) * m.mean_speed + noise * p.sigma_speed * zs);
        m.heading = a * m.heading + (1 - a) * m.mean_heading
                    + noise * p.sigma_heading * zh;

        n.position.x += dt * m.speed * std::cos(m.heading);
        n.position.y += dt * m.speed * std::sin(m.heading);
        if (detail::reflect(n.position.x, area.width))
        {
            m.heading = std::numbers::pi - m.heading;
            m.mean_heading = std::numbers::pi - m.mean_heading;
        }
        if (detail::reflect(n.position.y, area.height))
        {
            m.heading = -m.heading;
            m.mean_heading = -m.mean_heading;
        }
    }
    return out;
}

//---------------------------------------------------------------------------//
// EXPORT
//---------------------------------------------------------------------------//
//! One record per node: node_id,x_m,y_m,radios (radios space-separated).
inline void write_topology_snapshot(std::ostream& os, Topology const& t)
{
    auto flags = os.flags();
    auto prec = os.precision();
    os << "# area_m=" << t.area().width << 'x' << t.area().height
       << " r_t=" << t.radii().transmission
       << " r_i=" << t.radii().interference
       << " radios_per_node=" << t.radios_per_node() << '\n';
    os << "node_id,x_m,y_m,radios\n";
    os << std::fixed << std::setprecision(3);
    for (auto const& n : t.nodes())
    {
        os << n.id << ',' << n.position.x << ',' << n.position.y << ',';
        for (std::size_t k = 0; k < n.radios.size(); ++k)
            os << (k ? " " : "") << n.radios[k];
        os << '\n';
    }
    os.flags(flags);
    os.precision(prec);
}

inline std::string topology_snapshot(Topology const& t)
{
    std::ostringstream os;
    write_topology_snapshot(os, t);
    return os.str();
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
