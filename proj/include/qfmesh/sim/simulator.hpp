//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/sim/simulator.hpp
//! Slot-synchronous trial simulator with the five MAC drivers.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "../channel_adaptation.hpp"
#include "../hop_sequences.hpp"
#include "../mesh_model.hpp"
#include "../qfmac_assignment.hpp"
#include "config.hpp"
#include "medium.hpp"
#include "metrics.hpp"
#include "routing.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
//! One attempted data transmission and how it ended.
struct TxResult
{
    FlowId flow;
    RadioId src;
    RadioId dst;
    Channel channel;
    Outcome outcome;
    //! Indices (into the same slot's results) of colliding senders
    std::vector<std::size_t> interferers;
};

using SlotObserver
    = std::function<void(std::int64_t slot, std::vector<TxResult> const&)>;

struct RunOptions
{
    bool traces{false};
    SlotObserver on_slot;
};

struct TrialTraces
{
    std::string control;
    std::string adaptation;
    std::string occupancy;
};

struct TrialResult
{
    MetricsReport report;
    TrialTraces traces;
};

inline constexpr char const* control_trace_header
    = "slot,kind,src,dst,flow,summary";
inline constexpr char const* adaptation_trace_header
    = "slot,radio,action,ch_old,ch_new,sum_ag,active_size,g_min";
inline constexpr char const* occupancy_trace_header
    = "slot,channel,transmitters";

//! Bytes charged per routing message (route request or reply).
inline constexpr std::int64_t routing_message_bytes = 24;

//---------------------------------------------------------------------------//
/*!
 * One trial. Construct, call step() until done(), then finish().
 *
 * Each slot runs: mobility, routing maintenance, control delivery,
 * protocol driver, data transmission, metrics. Control messages sent in a
 * slot arrive at the start of the next one. A Tx change takes effect in
 * the slot after it is made, which is when the receiver learns of it.
 */
class Simulator
{
  public:
    struct Packet
    {
        FlowId flow;
        std::int64_t generated;
        int retries{0};
    };

    struct FlowState
    {
        FlowId id;
        NodeId src;
        NodeId dst;
        std::vector<NodeId> path;  //!< empty while unrouted
        std::vector<RadioId> radios;
        bool complete{false};
        bool failure_open{false};  //!< a failure was counted this episode
        std::int64_t retry_at{0};
        std::int64_t needed{-1};  //!< packets; negative when saturated
        int tsch_offset{0};
        FlowMetrics m;

        bool routed() const { return !path.empty(); }
    };

    explicit Simulator(TrialConfig cfg, RunOptions opts = {});

    bool done() const { return slot_ >= total_; }
    std::int64_t slot() const { return slot_; }
    void step();
    TrialResult finish();

    TrialConfig const& config() const { return cfg_; }
    Topology const& topology() const { return topo_; }
    std::vector<NodeSchedule> const& schedules() const { return sched_; }
    std::vector<FlowState> const& flows() const { return flows_; }
    std::size_t queue_length(RadioId r) const
    {
        return queues_[idx(r)].size();
    }
    JammerState const& jammer() const { return jammer_; }
    AssignmentParams const& assignment_params() const { return assign_; }

  private:
    struct CsmaIface
    {
        int backoff{0};
        int cw{4};
        bool busy_tx{false};
        int remaining{0};
        bool failed{false};
        RadioId radio;
        std::size_t rr{0};
    };

    static std::size_t idx(RadioId r) { return static_cast<std::size_t>(r.get()); }
    static std::size_t idx(NodeId n) { return static_cast<std::size_t>(n.get()); }

    NodeSchedule& node_of(RadioId r) { return sched_[idx(topo_.node_of(r))]; }
    RadioScheduleState& state(RadioId r) { return node_of(r).radio(r); }
    RadioScheduleState const& state(RadioId r) const
    {
        return sched_[idx(topo_.node_of(r))].radio(r);
    }

    // setup
    void draw_flows();
    // per-slot phases
    void sync_effective_tx();
    void move_nodes();
    void maintain_routes();
    void deliver_control();
    void run_driver();
    void transmit_slotted();
    void transmit_csma();
    // routing and flow lifecycle
    std::optional<std::vector<NodeId>> find_path(FlowState const& f,
                                                 NodeId from,
                                                 std::vector<NodeId> const& avoid);
    void charge_discovery(FlowState const& f,
                          NodeId from,
                          std::vector<NodeId> const* path);
    void admit(FlowState& f);
    void repair(FlowState& f, std::size_t broken);
    void start_links(FlowState& f);
    void teardown(FlowState& f, bool failure);
    void fail_setup(FlowId f);
    // control plane
    void emit(ControlMessage const& m);
    void emit_all(std::vector<ControlMessage> const& ms);
    void trace_control(std::string const& line, std::int64_t bytes);
    void baseline_request(ControlMessage const& m);
    std::optional<ChannelSequence> baseline_tx(ChannelSequence const& rx);
    // data plane
    bool link_ready(RadioId r) const;
    void release_radio(RadioId r);
    void drop_queue(RadioId r);
    void generate();
    void forward(RadioId from, RadioId to, Packet p);
    void observe(std::vector<Transmission> const& txs,
                 std::vector<RadioId> const& senders,
                 std::vector<bool> const& acked);
    void account_jam(std::vector<Transmission> const& txs);
    void maybe_select_jammer();

    TrialConfig cfg_;
    RunOptions opts_;
    Topology topo_;
    NeighborIndex tx_links_;
    NeighborIndex ri_links_;
    std::vector<NodeSchedule> sched_;
    std::vector<FlowState> flows_;
    std::vector<std::deque<Packet>> queues_;
    std::vector<std::optional<ChannelSequence>> eff_tx_;
    std::vector<TrafficObservation> obs_;
    std::vector<GoodputStats> goodput_;
    std::vector<CsmaIface> ifaces_;  //!< node-major, csma_channels each
    std::vector<char> cca_busy_;
    std::vector<ControlMessage> pending_;

    AssignmentParams assign_;
    AssignmentParams baseline_;
    AdaptationParams adapt_;
    ChannelSequence tsch_global_;

    Rng rng_flows_;
    Rng rng_proto_;
    Rng rng_mob_;
    Rng rng_mac_;

    JammerState jammer_;
    std::vector<std::int64_t> jam_hist_;
    std::int64_t next_jam_select_{-1};

    std::int64_t slot_{0};
    std::int64_t total_{0};
    std::int64_t arrival_{0};
    MetricsReport report_;
    std::ostringstream control_;
    std::ostringstream adaptation_;
    std::ostringstream occupancy_;
};

//---------------------------------------------------------------------------//
// CONSTRUCTION
//---------------------------------------------------------------------------//
inline Simulator::Simulator(TrialConfig cfg, RunOptions opts)
    : cfg_{std::move(cfg)}, opts_{std::move(opts)}
{
    cfg_.validate();
    Radii radii{cfg_.tx_radius, cfg_.interference_radius};
    MobilityParams mob{cfg_.mobility, cfg_.mobility_alpha, cfg_.sigma_speed,
                       cfg_.sigma_heading};
    Rng rng_topo{stream_seed(cfg_.seed, 1)};
    rng_flows_.seed(stream_seed(cfg_.seed, 2));
    rng_proto_.seed(stream_seed(cfg_.seed, 3));
    rng_mob_.seed(stream_seed(cfg_.seed, 4));
    rng_mac_.seed(stream_seed(cfg_.seed, 5));

    if (cfg_.positions.empty())
    {
        topo_ = build_topology(cfg_.nodes, cfg_.density, radii, rng_topo,
                               cfg_.radios, mob);
    }
    else
    {
        double w = 0, h = 0;
        for (auto p : cfg_.positions)
        {
            w = std::max(w, p.x);
            h = std::max(h, p.y);
        }
        topo_ = topology_from_positions(cfg_.positions, Area{w, h}, radii,
                                        cfg_.radios, mob);
    }
    tx_links_.rebuild(topo_, cfg_.tx_radius);
    ri_links_.rebuild(topo_, cfg_.interference_radius);

    for (auto const& n : topo_.nodes())
        sched_.emplace_back(n.id, n.radios);
    auto radios = topo_.radio_count();
    queues_.resize(radios);
    eff_tx_.resize(radios);
    obs_.assign(radios, TrafficObservation{cfg_.adapt_window});
    goodput_.assign(radios, GoodputStats{cfg_.adapt_window});

    assign_.universe_size = cfg_.universe;
    assign_.sequence_length = cfg_.link_length();
    assign_.delta = cfg_.delta();
    assign_.ancestor_depth = cfg_.effective_ancestor_depth();
    assign_.retry_budget = cfg_.retry_budget;
    baseline_ = assign_;
    baseline_.ancestor_depth = 0;
    adapt_.theta1 = cfg_.theta1;
    adapt_.theta2 = cfg_.theta2;
    adapt_.window = cfg_.adapt_window;
    adapt_.cadence = cfg_.adapt_cadence;

    if (cfg_.protocol == Protocol::tsch)
    {
        Rng rng_tsch{stream_seed(cfg_.seed, 6)};
        tsch_global_
            = gen_random_sequence(cfg_.universe, cfg_.tsch_length, rng_tsch);
    }
    if (cfg_.protocol == Protocol::csma)
    {
        ifaces_.resize(topo_.node_count()
                       * static_cast<std::size_t>(cfg_.csma_channels));
        for (auto& f : ifaces_)
            f.cw = cfg_.csma_cw_min;
        cca_busy_.assign(ifaces_.size(), 0);
    }

    total_ = cfg_.total_slots();
    arrival_ = cfg_.arrival_slot();
    int channels = cfg_.protocol == Protocol::csma ? cfg_.csma_channels
                                                   : cfg_.universe;
    report_.channel_histogram.assign(static_cast<std::size_t>(channels), 0);
    jam_hist_.assign(static_cast<std::size_t>(channels), 0);
    jammer_.center = topo_.area().center();
    jammer_.radius = cfg_.jammer_radius;
    if (cfg_.jammer)
        next_jam_select_ = arrival_ + cfg_.jammer_window;

    draw_flows();

    if (opts_.traces)
    {
        control_ << control_trace_header << '\n';
        adaptation_ << adaptation_trace_header << '\n';
        occupancy_ << occupancy_trace_header << '\n';
    }
}

inline void Simulator::draw_flows()
{
    auto n = topo_.node_count();
    int count = cfg_.flow_count();
    for (int i = 0; i < count; ++i)
    {
        FlowState f;
        f.id = FlowId{i};
        if (!cfg_.flow_pairs.empty())
        {
            auto [s, d] = cfg_.flow_pairs[static_cast<std::size_t>(i)];
            f.src = NodeId{s};
            f.dst = NodeId{d};
        }
        else
        {
            // Endpoints are redrawn until connected at deployment time
            int guard = 0;
            do
            {
                if (++guard > 10000)
                    throw ConfigError(
                        "no connected endpoint pair in the topology");
                f.src = NodeId{uniform_int(rng_flows_, 0,
                                           static_cast<int>(n) - 1)};
                do
                {
                    f.dst = NodeId{uniform_int(rng_flows_, 0,
                                               static_cast<int>(n) - 1)};
                } while (f.dst == f.src);
            } while (!connected(tx_links_, n, f.src, f.dst));
        }
        f.needed = cfg_.saturated ? -1 : cfg_.packets_per_flow();
        f.retry_at = arrival_;
        f.m.src = f.src.get();
        f.m.dst = f.dst.get();
        flows_.push_back(std::move(f));
    }
}

//---------------------------------------------------------------------------//
// SLOT LOOP
//---------------------------------------------------------------------------//
inline void Simulator::step()
{
    if (done())
        return;
    sync_effective_tx();
    move_nodes();
    maintain_routes();
    deliver_control();
    run_driver();
    if (cfg_.protocol == Protocol::csma)
        transmit_csma();
    else
        transmit_slotted();
    ++slot_;
}

inline void Simulator::sync_effective_tx()
{
    for (auto const& n : sched_)
    {
        for (auto const& s : n.radios())
        {
            auto& e = eff_tx_[idx(s.radio)];
            if (e != s.tx)
                e = s.tx;
        }
    }
}

inline void Simulator::move_nodes()
{
    if (!(cfg_.mobility > 0))
        return;
    topo_ = step_mobility(topo_, cfg_.slot(), rng_mob_);
    tx_links_.rebuild(topo_, cfg_.tx_radius);
    ri_links_.rebuild(topo_, cfg_.interference_radius);
}

inline void Simulator::maintain_routes()
{
    if (slot_ < arrival_)
        return;
    for (auto& f : flows_)
    {
        if (f.complete)
            continue;
        if (!f.routed())
        {
            if (slot_ >= f.retry_at)
                admit(f);
            continue;
        }
        for (std::size_t k = 0; k + 1 < f.path.size(); ++k)
        {
            if (!tx_links_.near(f.path[k], f.path[k + 1]))
            {
                repair(f, k);
                break;
            }
        }
    }
}

inline void Simulator::deliver_control()
{
    if (pending_.empty())
        return;
    std::vector<ControlMessage> batch;
    batch.swap(pending_);
    std::stable_sort(batch.begin(), batch.end(),
                     [&](ControlMessage const& a, ControlMessage const& b) {
                         auto ka = std::make_tuple(topo_.node_of(a.dst), a.dst,
                                                   static_cast<int>(a.kind));
                         auto kb = std::make_tuple(topo_.node_of(b.dst), b.dst,
                                                   static_cast<int>(b.kind));
                         return ka < kb;
                     });
    for (auto const& m : batch)
    {
        // Messages of a flow torn down meanwhile are lost with it
        if (!flows_[static_cast<std::size_t>(m.flow.get())].routed())
            continue;
        auto& node = node_of(m.dst);
        AssignmentResult res;
        bool qf = cfg_.protocol == Protocol::qfmac
                  || cfg_.protocol == Protocol::qfmac_a;
        switch (m.kind)
        {
            case MessageKind::seq_request:
                if (qf)
                    res = handle_seq_request(node, m, assign_, rng_proto_);
                else
                    baseline_request(m);
                break;
            case MessageKind::seq_update:
                if (qf)
                    res = handle_seq_update(node, m, assign_, rng_proto_);
                break;
            case MessageKind::seq_reject:
                if (qf)
                    res = handle_seq_reject(node, m, assign_, rng_proto_);
                break;
            case MessageKind::seq_cancel:
                res = handle_seq_cancel(node, m);
                break;
        }
        for (auto r : res.released)
            release_radio(r);
        if (res.decision == Decision::failed)
        {
            fail_setup(m.flow);
            continue;
        }
        emit_all(res.messages);
    }
}

inline void Simulator::run_driver()
{
    maybe_select_jammer();
    if (cfg_.protocol != Protocol::qfmac_a || slot_ <= arrival_
        || (slot_ - arrival_) % cfg_.adapt_cadence != 0)
        return;
    for (auto& node : sched_)
    {
        for (auto& s : node.radios())
        {
            if (!s.pinned() || !s.tx || !s.next)
                continue;
            auto r = s.radio;
            auto res = adapt(node, r, obs_[idx(r)], goodput_[idx(r)], adapt_,
                             assign_, rng_proto_);
            if (res.action != AdaptAction::none)
                ++report_.adaptation_events;
            if (opts_.traces)
                adaptation_ << format_adaptation_event(slot_, r, res) << '\n';
            emit_all(res.messages);
        }
    }
}

inline void Simulator::maybe_select_jammer()
{
    if (next_jam_select_ < 0 || slot_ != next_jam_select_)
        return;
    if (cfg_.protocol == Protocol::csma)
        jammer_.channels = ChannelSet{1};  // sub-band of channel A
    else
        jammer_.channels = jammer_select(jam_hist_, cfg_.jammer_channels);
    jammer_.active = true;
    if (report_.jammer_select_slot < 0)
        report_.jammer_select_slot = slot_;
    report_.jammed_channels = jammer_.channels;
    std::fill(jam_hist_.begin(), jam_hist_.end(), 0);
    next_jam_select_ = cfg_.jammer_cadence > 0
                           ? slot_ + cfg_.jammer_cadence
                           : -1;
}

//---------------------------------------------------------------------------//
// ROUTING AND FLOW LIFECYCLE
//---------------------------------------------------------------------------//
inline std::optional<std::vector<NodeId>>
Simulator::find_path(FlowState const& f,
                     NodeId from,
                     std::vector<NodeId> const& avoid)
{
    // Active senders per node: radios holding a flow with a next hop
    std::vector<int> senders(topo_.node_count(), 0);
    for (auto const& n : sched_)
    {
        for (auto const& s : n.radios())
            senders[idx(n.node())] += (s.pinned() && s.next) ? 1 : 0;
    }
    std::vector<int> load(topo_.node_count(), 0);
    for (std::size_t v = 0; v < load.size(); ++v)
    {
        load[v] = senders[v];
        for (auto u : ri_links_.neighbors(NodeId{static_cast<int>(v)}))
            load[v] += senders[idx(u)];
    }
    auto weight = [&](NodeId, NodeId to) { return 1.0 + load[idx(to)]; };
    auto usable = [&](NodeId n) {
        if (std::find(avoid.begin(), avoid.end(), n) != avoid.end())
            return false;
        auto const& ns = sched_[idx(n)];
        for (auto const& s : ns.radios())
        {
            if (!s.pinned() || s.flow == f.id)
                return true;
        }
        return false;
    };
    return route_flow(tx_links_, topo_.node_count(), from, f.dst, weight,
                      usable);
}

inline void Simulator::charge_discovery(FlowState const& f,
                                        NodeId from,
                                        std::vector<NodeId> const* path)
{
    // Route request flooded once per reachable node, reply along the path
    auto reach = component_size(tx_links_, topo_.node_count(), from);
    for (std::size_t i = 0; i < reach; ++i)
    {
        std::ostringstream line;
        line << slot_ << ",RREQ," << from << ",-1," << f.id << ",flood";
        trace_control(line.str(), routing_message_bytes);
    }
    if (path)
    {
        for (std::size_t k = path->size() - 1; k > 0; --k)
        {
            std::ostringstream line;
            line << slot_ << ",RREP," << (*path)[k] << ',' << (*path)[k - 1]
                 << ',' << f.id << ",reply";
            trace_control(line.str(), routing_message_bytes);
        }
    }
}

inline void Simulator::admit(FlowState& f)
{
    auto path = find_path(f, f.src, {});
    charge_discovery(f, f.src, path ? &*path : nullptr);
    if (!path)
    {
        if (!f.failure_open)
        {
            ++f.m.setup_failures;
            f.failure_open = true;
        }
        f.retry_at = slot_ + cfg_.reroute_backoff;
        return;
    }
    f.path = *path;
    f.radios.clear();
    for (auto n : f.path)
        f.radios.push_back(*sched_[idx(n)].free_radio());
    for (std::size_t k = 0; k < f.radios.size(); ++k)
    {
        std::optional<RadioId> prev, next;
        if (k > 0)
            prev = f.radios[k - 1];
        if (k + 1 < f.radios.size())
            next = f.radios[k + 1];
        state(f.radios[k]).rejects = 0;
        node_of(f.radios[k]).pin(f.radios[k], f.id, prev, next);
    }
    f.m.hops = static_cast<int>(f.path.size()) - 1;
    start_links(f);
}

inline void Simulator::start_links(FlowState& f)
{
    auto src = f.radios.front();
    switch (cfg_.protocol)
    {
        case Protocol::qfmac:
        case Protocol::qfmac_a: {
            FlowPath fp{f.id, f.radios};
            auto res = assign_at_source(node_of(src), fp, assign_, rng_proto_);
            if (res.decision != Decision::accepted)
            {
                teardown(f, true);
                return;
            }
            emit_all(res.messages);
            break;
        }
        case Protocol::tsch: {
            int L = cfg_.tsch_length;
            f.tsch_offset = uniform_int(rng_proto_, 0, L - 1);
            auto& s = state(src);
            s.tx = right_shift(tsch_global_, (L - f.tsch_offset) % L);
            emit(detail::make_downstream(MessageKind::seq_request, s, baseline_));
            break;
        }
        case Protocol::random: {
            auto& s = state(src);
            s.tx = gen_random_sequence(cfg_.universe, cfg_.sequence_length,
                                       rng_proto_);
            emit(detail::make_downstream(MessageKind::seq_request, s, baseline_));
            break;
        }
        case Protocol::csma:
            break;
    }
}

inline void Simulator::repair(FlowState& f, std::size_t broken)
{
    auto from = f.path[broken];
    std::vector<NodeId> avoid(f.path.begin(),
                              f.path.begin() + static_cast<long>(broken));
    auto suffix = find_path(f, from, avoid);
    charge_discovery(f, from, suffix ? &*suffix : nullptr);
    if (!suffix)
    {
        teardown(f, true);
        return;
    }

    // Old downstream nodes absent from the new suffix are released
    for (std::size_t k = broken + 1; k < f.path.size(); ++k)
    {
        if (std::find(suffix->begin(), suffix->end(), f.path[k])
            == suffix->end())
            release_radio(f.radios[k]);
    }
    auto old_next = f.radios[broken + 1];

    std::vector<NodeId> path(f.path.begin(),
                             f.path.begin() + static_cast<long>(broken));
    path.insert(path.end(), suffix->begin(), suffix->end());
    std::vector<RadioId> radios(f.radios.begin(),
                                f.radios.begin() + static_cast<long>(broken) + 1);
    for (std::size_t j = 1; j < suffix->size(); ++j)
    {
        auto& ns = sched_[idx((*suffix)[j])];
        auto* s = ns.find_flow(f.id);
        radios.push_back(s ? s->radio : *ns.free_radio());
    }
    for (std::size_t k = broken + 1; k < radios.size(); ++k)
    {
        std::optional<RadioId> next;
        if (k + 1 < radios.size())
            next = radios[k + 1];
        node_of(radios[k]).pin(radios[k], f.id, radios[k - 1], next);
    }
    auto me = radios[broken];
    auto new_next = radios[broken + 1];
    f.path = std::move(path);
    f.radios = std::move(radios);
    f.m.hops = static_cast<int>(f.path.size()) - 1;

    auto& s = state(me);
    if (cfg_.protocol == Protocol::qfmac || cfg_.protocol == Protocol::qfmac_a)
    {
        if (s.tx)
        {
            emit_all(handle_route_change(node_of(me), f.id, old_next, new_next,
                                         assign_)
                         .messages);
            return;
        }
        s.next = new_next;
        return;
    }
    s.next = new_next;
    ControlMessage cancel;
    cancel.kind = MessageKind::seq_cancel;
    cancel.flow = f.id;
    cancel.src = me;
    cancel.dst = old_next;
    emit(cancel);
    if (s.tx)
        emit(detail::make_downstream(MessageKind::seq_request, s, baseline_));
}

inline void Simulator::teardown(FlowState& f, bool failure)
{
    for (std::size_t k = 0; k < f.radios.size(); ++k)
    {
        auto r = f.radios[k];
        auto& s = state(r);
        if (s.flow != f.id)
            continue;
        if (s.next)
        {
            ControlMessage cancel;
            cancel.kind = MessageKind::seq_cancel;
            cancel.flow = f.id;
            cancel.src = r;
            cancel.dst = *s.next;
            std::ostringstream line;
            line << slot_ << ',' << summarize(cancel);
            trace_control(line.str(),
                          static_cast<std::int64_t>(message_bytes(cancel)));
        }
        release_radio(r);
    }
    std::erase_if(pending_,
                  [&](ControlMessage const& m) { return m.flow == f.id; });
    f.path.clear();
    f.radios.clear();
    if (failure)
    {
        if (!f.failure_open)
        {
            ++f.m.setup_failures;
            f.failure_open = true;
        }
        f.retry_at = slot_ + cfg_.reroute_backoff;
    }
}

inline void Simulator::fail_setup(FlowId id)
{
    auto& f = flows_[static_cast<std::size_t>(id.get())];
    if (f.routed())
        teardown(f, true);
}

//---------------------------------------------------------------------------//
// CONTROL PLANE
//---------------------------------------------------------------------------//
inline void Simulator::trace_control(std::string const& line,
                                     std::int64_t bytes)
{
    ++report_.ctrl_msgs;
    report_.ctrl_bytes += bytes;
    if (opts_.traces)
        control_ << line << '\n';
}

inline void Simulator::emit(ControlMessage const& m)
{
    std::ostringstream line;
    line << slot_ << ',' << summarize(m);
    trace_control(line.str(), static_cast<std::int64_t>(message_bytes(m)));
    pending_.push_back(m);
}

inline void Simulator::emit_all(std::vector<ControlMessage> const& ms)
{
    for (auto const& m : ms)
        emit(m);
}

inline std::optional<ChannelSequence>
Simulator::baseline_tx(ChannelSequence const& rx)
{
    if (cfg_.protocol == Protocol::tsch)
        return right_shift(rx, static_cast<int>(rx.size()) - 1);
    return gen_random_sequence(cfg_.universe, cfg_.sequence_length,
                               rng_proto_);
}

//! Uncoordinated setup: install what arrives and pass a Tx downstream.
inline void Simulator::baseline_request(ControlMessage const& m)
{
    auto& s = state(m.dst);
    if (!s.pinned() || s.flow != m.flow)
        return;
    validate_sequence(m.sequence, cfg_.universe, cfg_.link_length());
    s.prev = m.src;
    s.rx = m.sequence;
    if (!s.next)
        return;
    if (!s.tx)
        s.tx = baseline_tx(*s.rx);
    else if (cfg_.protocol == Protocol::tsch)
        s.tx = baseline_tx(*s.rx);
    emit(detail::make_downstream(MessageKind::seq_request, s, baseline_));
}

//---------------------------------------------------------------------------//
// DATA PLANE
//---------------------------------------------------------------------------//
inline bool Simulator::link_ready(RadioId r) const
{
    auto const& s = state(r);
    if (!s.pinned() || !s.next)
        return false;
    auto const& d = state(*s.next);
    if (d.flow != s.flow || d.prev != r)
        return false;
    if (cfg_.protocol == Protocol::csma)
        return true;
    return eff_tx_[idx(r)].has_value() && d.rx.has_value();
}

inline void Simulator::drop_queue(RadioId r)
{
    auto& q = queues_[idx(r)];
    for (auto const& p : q)
    {
        auto& m = flows_[static_cast<std::size_t>(p.flow.get())].m;
        ++m.dropped;
        --m.in_flight;
    }
    q.clear();
}

inline void Simulator::release_radio(RadioId r)
{
    drop_queue(r);
    auto& s = state(r);
    if (s.pinned())
        s.clear();
    obs_[idx(r)] = TrafficObservation{cfg_.adapt_window};
    goodput_[idx(r)] = GoodputStats{cfg_.adapt_window};
    if (!ifaces_.empty())
    {
        // An interrupted CSMA transmission simply ends
        auto nc = static_cast<std::size_t>(cfg_.csma_channels);
        auto k = static_cast<std::size_t>(r.get() % cfg_.radios);
        auto& f = ifaces_[idx(topo_.node_of(r)) * nc + k % nc];
        if (f.busy_tx && f.radio == r)
            f.busy_tx = false;
    }
}

inline void Simulator::generate()
{
    if (slot_ < arrival_)
        return;
    for (auto& f : flows_)
    {
        if (f.complete || !f.routed())
            continue;
        auto src = f.radios.front();
        if (!link_ready(src))
            continue;
        auto& q = queues_[idx(src)];
        if (static_cast<int>(q.size()) >= cfg_.queue_capacity)
            continue;
        if (f.needed >= 0 && f.m.delivered + f.m.in_flight >= f.needed)
            continue;
        q.push_back({f.id, slot_, 0});
        ++f.m.generated;
        ++f.m.in_flight;
    }
}

inline void Simulator::forward(RadioId, RadioId to, Packet p)
{
    auto& f = flows_[static_cast<std::size_t>(p.flow.get())];
    auto const& d = state(to);
    if (!d.next)
    {
        ++f.m.delivered;
        --f.m.in_flight;
        f.m.latency_slots += static_cast<double>(slot_ - p.generated + 1);
        if (f.needed >= 0 && f.m.delivered >= f.needed && !f.complete)
        {
            f.complete = true;
            f.m.completion_slot = slot_;
            teardown(f, false);
        }
        return;
    }
    auto& q = queues_[idx(to)];
    if (static_cast<int>(q.size()) >= cfg_.queue_capacity)
    {
        ++f.m.dropped;
        --f.m.in_flight;
        return;
    }
    p.retries = 0;
    q.push_back(p);
}

inline void Simulator::observe(std::vector<Transmission> const& txs,
                               std::vector<RadioId> const& senders,
                               std::vector<bool> const& acked)
{
    if (cfg_.protocol != Protocol::qfmac_a)
        return;
    std::vector<TrafficObservation::Heard> heard;
    std::vector<int> counts(static_cast<std::size_t>(cfg_.universe));
    for (auto const& node : sched_)
    {
        auto here = node.node();
        bool jam_here = jammer_.covers(topo_.node(here).position);
        for (auto const& s : node.radios())
        {
            if (!s.pinned() || !s.tx || !s.next)
                continue;
            std::fill(counts.begin(), counts.end(), 0);
            Channel own = -1;
            bool ok = false;
            for (std::size_t i = 0; i < txs.size(); ++i)
            {
                if (txs[i].src == s.radio)
                {
                    own = txs[i].channel;
                    ok = acked[i];
                    continue;
                }
                if (ri_links_.near(topo_.node_of(senders[i]), here))
                    ++counts[static_cast<std::size_t>(txs[i].channel)];
            }
            if (jam_here)
            {
                for (auto c : jammer_.channels.members())
                {
                    if (c < cfg_.universe)
                        ++counts[static_cast<std::size_t>(c)];
                }
            }
            heard.clear();
            for (std::size_t c = 0; c < counts.size(); ++c)
            {
                if (counts[c] > 0)
                    heard.push_back({static_cast<Channel>(c), counts[c]});
            }
            obs_[idx(s.radio)].observe_slot(own, heard);
            goodput_[idx(s.radio)].record(own, ok);
        }
    }
}

inline void Simulator::account_jam(std::vector<Transmission> const& txs)
{
    if (!cfg_.jammer)
        return;
    // Traffic heard by the jammer during the window before a selection
    if (next_jam_select_ >= 0 && slot_ >= next_jam_select_ - cfg_.jammer_window)
    {
        for (auto const& t : txs)
        {
            auto p = topo_.node(topo_.node_of(t.src)).position;
            if (distance(p, jammer_.center) <= jammer_.radius)
                ++jam_hist_[static_cast<std::size_t>(t.channel)];
        }
    }
    if (!jammer_.active)
        return;
    auto bin = static_cast<std::size_t>((slot_ - report_.jammer_select_slot)
                                        / cfg_.adapt_cadence);
    if (report_.jam_bins.size() <= bin)
        report_.jam_bins.resize(bin + 1);
    for (auto const& t : txs)
    {
        auto p = topo_.node(topo_.node_of(t.dst)).position;
        if (!jammer_.covers(p))
            continue;
        ++report_.jam_bins[bin].total;
        if (jammer_.channels.contains(t.channel))
            ++report_.jam_bins[bin].on_jammed;
    }
}

inline void Simulator::transmit_slotted()
{
    generate();
    std::vector<Transmission> txs;
    std::vector<FlowId> tx_flow;
    for (auto const& node : sched_)
    {
        for (auto const& s : node.radios())
        {
            if (queues_[idx(s.radio)].empty() || !link_ready(s.radio))
                continue;
            txs.push_back({s.radio, *s.next,
                           eff_tx_[idx(s.radio)]->at_slot(slot_)});
            tx_flow.push_back(*s.flow);
        }
    }
    std::vector<std::vector<std::size_t>> interferers;
    auto outcomes = resolve_slot(topo_, txs, jammer_,
                                 opts_.on_slot ? &interferers : nullptr);

    std::vector<bool> acked(txs.size(), false);
    std::vector<RadioId> senders;
    for (std::size_t i = 0; i < txs.size(); ++i)
    {
        senders.push_back(txs[i].src);
        // The receiver must be tuned to the sender's channel this slot
        auto const& d = state(txs[i].dst);
        if (outcomes[i] == Outcome::delivered
            && d.rx->at_slot(slot_) != txs[i].channel)
            outcomes[i] = Outcome::collided;
        acked[i] = outcomes[i] == Outcome::delivered;
        ++report_.channel_histogram[static_cast<std::size_t>(txs[i].channel)];
    }
    observe(txs, senders, acked);
    account_jam(txs);

    if (opts_.traces)
    {
        std::vector<int> occ(static_cast<std::size_t>(cfg_.universe), 0);
        for (auto const& t : txs)
            ++occ[static_cast<std::size_t>(t.channel)];
        for (std::size_t c = 0; c < occ.size(); ++c)
        {
            if (occ[c] > 0)
                occupancy_ << slot_ << ',' << c << ',' << occ[c] << '\n';
        }
    }
    if (opts_.on_slot)
    {
        std::vector<TxResult> results;
        for (std::size_t i = 0; i < txs.size(); ++i)
        {
            results.push_back({tx_flow[i], txs[i].src, txs[i].dst,
                               txs[i].channel, outcomes[i],
                               std::move(interferers[i])});
        }
        opts_.on_slot(slot_, results);
    }

    // Delivery runs after every outcome is fixed so a packet advances at
    // most one hop per slot
    for (std::size_t i = 0; i < txs.size(); ++i)
    {
        auto& q = queues_[idx(txs[i].src)];
        if (q.empty())
            continue;  // flushed by a completion earlier in this loop
        if (acked[i])
        {
            auto p = q.front();
            q.pop_front();
            if (state(txs[i].dst).flow == p.flow)
                forward(txs[i].src, txs[i].dst, p);
            else
            {
                auto& m = flows_[static_cast<std::size_t>(p.flow.get())].m;
                ++m.dropped;
                --m.in_flight;
            }
        }
        else if (++q.front().retries > cfg_.max_retries)
        {
            auto& m = flows_[static_cast<std::size_t>(q.front().flow.get())].m;
            ++m.dropped;
            --m.in_flight;
            q.pop_front();
        }
    }
}

inline void Simulator::transmit_csma()
{
    generate();
    auto nc = static_cast<std::size_t>(cfg_.csma_channels);
    auto C = static_cast<std::size_t>(cfg_.radios);
    double bits = 8.0 * cfg_.packet_bytes;

    // Start new transmissions on idle interfaces whose backoff expires
    for (std::size_t n = 0; n < topo_.node_count(); ++n)
    {
        for (std::size_t c = 0; c < nc; ++c)
        {
            auto& f = ifaces_[n * nc + c];
            if (f.busy_tx)
                continue;
            std::vector<RadioId> members;
            for (std::size_t k = c; k < C; k += nc)
                members.push_back(topo_.radio(NodeId{static_cast<int>(n)},
                                              static_cast<int>(k)));
            std::optional<std::size_t> pick;
            for (std::size_t j = 0; j < members.size(); ++j)
            {
                auto k = (f.rr + j) % members.size();
                if (!queues_[idx(members[k])].empty()
                    && link_ready(members[k]))
                {
                    pick = k;
                    break;
                }
            }
            if (!pick)
                continue;
            if (cca_busy_[n * nc + c])
                continue;
            if (f.backoff > 0 && --f.backoff > 0)
                continue;
            f.radio = members[*pick];
            f.rr = (*pick + 1) % members.size();
            auto dst_node = topo_.node_of(*state(f.radio).next);
            double rate = cfg_.csma_rate_bps;
            if (c == 0 && jammer_.covers(topo_.node(dst_node).position))
                rate = cfg_.csma_jammed_rate_bps;
            f.remaining = static_cast<int>(
                std::ceil(bits / (rate * cfg_.csma_slot_s) - 1e-9));
            f.failed = false;
            f.busy_tx = true;
            ++report_.channel_histogram[c];
        }
    }

    // Active set this slot
    std::vector<Transmission> txs;
    std::vector<std::size_t> owner;
    for (std::size_t i = 0; i < ifaces_.size(); ++i)
    {
        auto const& f = ifaces_[i];
        if (!f.busy_tx)
            continue;
        txs.push_back({f.radio, *state(f.radio).next,
                       static_cast<Channel>(i % nc)});
        owner.push_back(i);
    }
    std::vector<std::vector<std::size_t>> interferers;
    // The CSMA jammer only narrows channel A; it never blanks a reception
    auto outcomes = resolve_slot(topo_, txs, JammerState{},
                                 opts_.on_slot ? &interferers : nullptr);
    for (std::size_t i = 0; i < txs.size(); ++i)
    {
        if (outcomes[i] != Outcome::delivered)
            ifaces_[owner[i]].failed = true;
    }
    account_jam(txs);

    std::fill(cca_busy_.begin(), cca_busy_.end(), 0);
    for (auto const& t : txs)
    {
        auto from = topo_.node_of(t.src);
        auto mark = [&](NodeId n) {
            cca_busy_[idx(n) * nc + static_cast<std::size_t>(t.channel)] = 1;
        };
        for (auto n : ri_links_.neighbors(from))
            mark(n);
    }
    if (opts_.traces)
    {
        std::vector<int> occ(nc, 0);
        for (auto const& t : txs)
            ++occ[static_cast<std::size_t>(t.channel)];
        for (std::size_t c = 0; c < nc; ++c)
        {
            if (occ[c] > 0)
                occupancy_ << slot_ << ',' << c << ',' << occ[c] << '\n';
        }
    }
    if (opts_.on_slot)
    {
        std::vector<TxResult> results;
        for (std::size_t i = 0; i < txs.size(); ++i)
        {
            results.push_back({*state(txs[i].src).flow, txs[i].src, txs[i].dst,
                               txs[i].channel,
                               ifaces_[owner[i]].failed ? Outcome::collided
                                                        : Outcome::delivered,
                               std::move(interferers[i])});
        }
        opts_.on_slot(slot_, results);
    }

    // Finish transmissions whose airtime ends in this slot
    for (std::size_t i = 0; i < txs.size(); ++i)
    {
        auto& f = ifaces_[owner[i]];
        if (--f.remaining > 0)
            continue;
        f.busy_tx = false;
        auto& q = queues_[idx(f.radio)];
        if (q.empty())
            continue;
        if (!f.failed)
        {
            auto p = q.front();
            q.pop_front();
            f.cw = cfg_.csma_cw_min;
            forward(f.radio, txs[i].dst, p);
        }
        else if (++q.front().retries > cfg_.max_retries)
        {
            auto& m = flows_[static_cast<std::size_t>(q.front().flow.get())].m;
            ++m.dropped;
            --m.in_flight;
            q.pop_front();
            f.cw = cfg_.csma_cw_min;
        }
        else
        {
            f.cw = std::min(2 * f.cw, cfg_.csma_cw_max);
        }
        f.backoff = uniform_int(rng_mac_, 0, f.cw - 1);
    }
}

//---------------------------------------------------------------------------//
// REPORT
//---------------------------------------------------------------------------//
inline TrialResult Simulator::finish()
{
    while (!done())
        step();
    auto& r = report_;
    r.protocol = to_string(cfg_.protocol);
    r.size = static_cast<int>(topo_.node_count());
    r.density = cfg_.positions.empty() ? cfg_.density : realized_density(topo_);
    r.flows = cfg_.flow_count();
    r.mobility = cfg_.mobility;
    r.jammed = cfg_.jammer;
    r.seed = cfg_.seed;

    std::int64_t last = arrival_;
    bool all_done = !flows_.empty();
    double latency = 0;
    for (auto const& f : flows_)
    {
        r.generated += f.m.generated;
        r.delivered += f.m.delivered;
        r.dropped += f.m.dropped;
        r.in_flight += f.m.in_flight;
        r.setup_failures += f.m.setup_failures;
        latency += f.m.latency_slots;
        if (f.complete)
            last = std::max(last, f.m.completion_slot + 1);
        else
            all_done = false;
        r.per_flow.push_back(f.m);
    }
    auto end = all_done ? last : total_;
    r.window_s = static_cast<double>(end - arrival_) * cfg_.slot();
    double bits = static_cast<double>(r.delivered) * 8.0 * cfg_.packet_bytes;
    r.goodput_mbps = r.window_s > 0 ? bits / r.window_s / 1e6 : 0;
    r.latency_s = r.delivered > 0
                      ? latency / static_cast<double>(r.delivered) * cfg_.slot()
                      : 0;
    r.prr = r.generated > 0 ? static_cast<double>(r.delivered)
                                  / static_cast<double>(r.generated)
                            : 0;

    TrialResult out;
    out.report = r;
    if (opts_.traces)
    {
        out.traces.control = control_.str();
        out.traces.adaptation = adaptation_.str();
        out.traces.occupancy = occupancy_.str();
    }
    return out;
}

//! Run one trial to completion.
inline TrialResult run_trial(TrialConfig const& cfg, RunOptions opts = {})
{
    Simulator sim{cfg, std::move(opts)};
    return sim.finish();
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
