//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/qfmac_assignment.hpp
//! Per-node channel-sequence assignment: downstream request propagation
//! with intra-flow and intersecting-flow conflict avoidance, rejects,
//! updates, cancels and route changes.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "hop_sequences.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
// TYPES
//---------------------------------------------------------------------------//
//! Route of one flow, one pinned radio per node, source first.
struct FlowPath
{
    FlowId flow;
    std::vector<RadioId> route;
};

//! Throws unless the route has two or more radios on distinct nodes.
inline void validate_flow_path(FlowPath const& p, int radios_per_node)
{
    if (p.route.size() < 2)
        throw ConfigError("malformed flow: source equals destination");
    std::vector<int> nodes;
    for (auto r : p.route)
        nodes.push_back(r.get() / radios_per_node);
    std::sort(nodes.begin(), nodes.end());
    if (std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end())
        throw ConfigError("malformed flow: route revisits a node");
}

enum class MessageKind
{
    seq_request,
    seq_reject,
    seq_update,
    seq_cancel,
};

inline char const* to_string(MessageKind k)
{
    switch (k)
    {
        case MessageKind::seq_request: return "SeqRequest";
        case MessageKind::seq_reject: return "SeqReject";
        case MessageKind::seq_update: return "SeqUpdate";
        case MessageKind::seq_cancel: return "SeqCancel";
    }
    return "?";
}

enum class RejectReason
{
    none,
    conflict,  //!< Rx sequence collides with another Rx at the node
    busy,  //!< receiving radio is pinned to another flow
    infeasible,  //!< no conflict-free replacement channel exists
};

struct ControlMessage
{
    MessageKind kind{MessageKind::seq_request};
    FlowId flow;
    RadioId src;
    RadioId dst;
    //! Sender's Tx sequence for link (src, dst); request and update only
    ChannelSequence sequence;
    //! Upstream Tx sequences, nearest first; request and update only
    std::vector<ChannelSequence> ancestors;
    //! Sequences the sender of a reject cannot accept conflicts with
    std::vector<ChannelSequence> blocked;
    RejectReason reason{RejectReason::none};
};

//! Wire size: 12-byte header plus one byte per channel entry.
inline std::size_t message_bytes(ControlMessage const& m)
{
    std::size_t n = 12 + m.sequence.size();
    for (auto const& s : m.ancestors)
        n += s.size();
    for (auto const& s : m.blocked)
        n += s.size();
    return n;
}

//! "kind,src,dst,flow,summary" without the slot column; the summary holds
//! no commas so the line stays a valid CSV record.
inline std::string summarize(ControlMessage const& m)
{
    auto join = [](ChannelSequence const& s) {
        std::string out;
        for (std::size_t l = 0; l < s.size(); ++l)
            out += (l ? ":" : "") + std::to_string(s[l]);
        return out;
    };
    std::ostringstream os;
    os << to_string(m.kind) << ',' << m.src << ',' << m.dst << ',' << m.flow
       << ',';
    if (!m.sequence.empty())
        os << "seq=" << join(m.sequence);
    if (!m.ancestors.empty())
    {
        os << " anc=";
        for (std::size_t i = 0; i < m.ancestors.size(); ++i)
            os << (i ? "|" : "") << join(m.ancestors[i]);
    }
    if (!m.blocked.empty())
    {
        os << " blocked=";
        for (std::size_t i = 0; i < m.blocked.size(); ++i)
            os << (i ? "|" : "") << join(m.blocked[i]);
    }
    if (m.reason != RejectReason::none)
    {
        static char const* const names[]
            = {"none", "conflict", "busy", "infeasible"};
        os << " reason=" << names[static_cast<int>(m.reason)];
    }
    return os.str();
}

struct AssignmentParams
{
    int universe_size{7};
    int sequence_length{4};
    int delta{1};
    //! Upstream sequences carried in a request beyond the sender's own
    //! Tx; the default 2*delta-1 covers every link within 2*delta+1 hops.
    int ancestor_depth{1};
    int retry_budget{3};

    void validate(int radios_per_node) const
    {
        check_sequence_length(sequence_length, delta, radios_per_node,
                              universe_size);
        if (ancestor_depth < 0)
            throw ConfigError("ancestor depth must be non-negative");
        if (retry_budget < 0)
            throw ConfigError("retry budget must be non-negative");
    }
};

/*!
 * Schedule state of one radio pinned to at most one flow.
 */
struct RadioScheduleState
{
    RadioId radio;
    std::optional<FlowId> flow;
    std::optional<RadioId> prev;
    std::optional<RadioId> next;
    std::optional<ChannelSequence> rx;  //!< CHS_Rx(f, (prev, self))
    std::optional<ChannelSequence> tx;  //!< CHS_Tx(f, (self, next))
    std::vector<ChannelSequence> ancestors;  //!< upstream of prev's Tx
    //! Last request/update payload sent downstream
    std::optional<ChannelSequence> sent_tx;
    std::vector<ChannelSequence> sent_ancestors;
    int rejects{0};

    bool pinned() const { return flow.has_value(); }
    bool is_source() const { return pinned() && !prev; }
    bool is_destination() const { return pinned() && !next; }

    void clear()
    {
        auto id = radio;
        *this = RadioScheduleState{};
        radio = id;
    }
};

//---------------------------------------------------------------------------//
/*!
 * All radios of one node; the unit at which conflicts are resolved.
 */
class NodeSchedule
{
  public:
    NodeSchedule() = default;
    NodeSchedule(NodeId node, std::vector<RadioId> const& radios) : node_{node}
    {
        for (auto r : radios)
        {
            RadioScheduleState s;
            s.radio = r;
            radios_.push_back(std::move(s));
        }
    }

    NodeId node() const { return node_; }
    std::vector<RadioScheduleState> const& radios() const { return radios_; }
    std::vector<RadioScheduleState>& radios() { return radios_; }

    bool owns(RadioId r) const
    {
        return const_cast<NodeSchedule*>(this)->find(r) != nullptr;
    }

    RadioScheduleState& radio(RadioId r)
    {
        auto* s = find(r);
        if (!s)
            throw UnknownId("radio not on this node");
        return *s;
    }
    RadioScheduleState const& radio(RadioId r) const
    {
        return const_cast<NodeSchedule*>(this)->radio(r);
    }

    RadioScheduleState* find_flow(FlowId f)
    {
        for (auto& s : radios_)
        {
            if (s.flow == f)
                return &s;
        }
        return nullptr;
    }

    std::optional<RadioId> free_radio() const
    {
        for (auto const& s : radios_)
        {
            if (!s.pinned())
                return s.radio;
        }
        return std::nullopt;
    }

    int active_flows() const
    {
        return static_cast<int>(std::count_if(
            radios_.begin(), radios_.end(), [](auto& s) { return s.pinned(); }));
    }

    //! Reserve a radio for a flow hop; sequences arrive by messages.
    void pin(RadioId r,
             FlowId f,
             std::optional<RadioId> prev,
             std::optional<RadioId> next)
    {
        auto& s = radio(r);
        if (s.pinned() && s.flow != f)
            throw ConfigError("radio already serves another flow");
        s.flow = f;
        s.prev = prev;
        s.next = next;
    }

    void release(RadioId r) { radio(r).clear(); }

    /*!
     * Channels that radio \c r may not use for its Tx at slot \c l: every
     * other radio's Rx and Tx, its own Rx and its cached ancestors.
     */
    ChannelSet tx_exclusions(RadioId r, std::size_t l) const
    {
        ChannelSet out;
        for (auto const& s : radios_)
        {
            if (s.rx)
                out.insert((*s.rx)[l]);
            if (s.tx && s.radio != r)
                out.insert((*s.tx)[l]);
            if (s.radio == r)
            {
                for (auto const& a : s.ancestors)
                    out.insert(a[l]);
            }
        }
        return out;
    }

  private:
    RadioScheduleState* find(RadioId r)
    {
        for (auto& s : radios_)
        {
            if (s.radio == r)
                return &s;
        }
        return nullptr;
    }

    NodeId node_;
    std::vector<RadioScheduleState> radios_;
};

//! A pair of node-local sequences sharing a channel at some slot.
struct NodeConflict
{
    RadioId a;
    bool a_is_tx;
    RadioId b;
    bool b_is_tx;
    std::vector<int> slots;
};

//! Exhaustive slotwise check over every pair of the node's sequences.
inline std::vector<NodeConflict> node_conflicts(NodeSchedule const& n)
{
    struct Ref
    {
        RadioId r;
        bool tx;
        ChannelSequence const* seq;
    };
    std::vector<Ref> refs;
    for (auto const& s : n.radios())
    {
        if (s.rx)
            refs.push_back({s.radio, false, &*s.rx});
        if (s.tx)
            refs.push_back({s.radio, true, &*s.tx});
    }
    std::vector<NodeConflict> out;
    for (std::size_t i = 0; i < refs.size(); ++i)
    {
        for (std::size_t j = i + 1; j < refs.size(); ++j)
        {
            auto slots = conflict_slots(*refs[i].seq, *refs[j].seq);
            if (!slots.empty())
            {
                out.push_back({refs[i].r, refs[i].tx, refs[j].r, refs[j].tx,
                               std::move(slots)});
            }
        }
    }
    return out;
}

//---------------------------------------------------------------------------//
// RESULTS
//---------------------------------------------------------------------------//
enum class Decision
{
    accepted,
    rejected,  //!< a reject was sent upstream; nothing installed
    queued,  //!< no free radio at the source
    ignored,  //!< stale or duplicate message
    failed,  //!< retry budget or feasibility exhausted
};

struct AssignmentResult
{
    Decision decision{Decision::ignored};
    std::vector<ControlMessage> messages;
    std::optional<ChannelSequence> installed_rx;
    std::optional<ChannelSequence> installed_tx;
    //! Radios whose flow state was cleared by this call
    std::vector<RadioId> released;
    std::string note;
};

//---------------------------------------------------------------------------//
// HELPERS
//---------------------------------------------------------------------------//
namespace detail
{
//! Payload ancestors for the next hop: own Rx then cached, truncated.
inline std::vector<ChannelSequence>
forward_ancestors(RadioScheduleState const& s, int depth)
{
    std::vector<ChannelSequence> out;
    if (depth <= 0)
        return out;
    if (s.rx)
        out.push_back(*s.rx);
    for (auto const& a : s.ancestors)
    {
        if (static_cast<int>(out.size()) >= depth)
            break;
        out.push_back(a);
    }
    if (static_cast<int>(out.size()) > depth)
        out.resize(static_cast<std::size_t>(depth));
    return out;
}

inline ControlMessage make_downstream(MessageKind kind,
                                      RadioScheduleState& s,
                                      AssignmentParams const& p)
{
    ControlMessage m;
    m.kind = kind;
    m.flow = *s.flow;
    m.src = s.radio;
    m.dst = *s.next;
    m.sequence = *s.tx;
    m.ancestors = forward_ancestors(s, p.ancestor_depth);
    s.sent_tx = m.sequence;
    s.sent_ancestors = m.ancestors;
    return m;
}

//! Whether the downstream neighbour holds stale information about s.
inline bool downstream_stale(RadioScheduleState const& s,
                             AssignmentParams const& p)
{
    if (!s.tx || !s.next)
        return false;
    return s.sent_tx != s.tx
           || s.sent_ancestors != forward_ancestors(s, p.ancestor_depth);
}

/*!
 * Replace every Tx slot of radio r that collides with its exclusions.
 *
 * Each replacement is drawn uniformly from the conflict-free channels not
 * already in the sequence. Returns false if some slot has no candidate.
 */
inline bool repair_tx(NodeSchedule& node,
                      RadioScheduleState& s,
                      AssignmentParams const& p,
                      Rng& rng)
{
    auto all = ChannelSet::universe(p.universe_size);
    for (std::size_t l = 0; l < s.tx->size(); ++l)
    {
        auto blocked = node.tx_exclusions(s.radio, l);
        if (!blocked.contains((*s.tx)[l]))
            continue;
        auto options = all.without(blocked).without(s.tx->channels());
        if (options.empty())
            return false;
        s.tx->replace_at(l, pick_uniform(options, rng));
    }
    return true;
}

//! All Rx sequences of the node except radio r's.
inline std::vector<ChannelSequence> other_rx(NodeSchedule const& node,
                                             RadioId r)
{
    std::vector<ChannelSequence> out;
    for (auto const& s : node.radios())
    {
        if (s.radio != r && s.rx)
            out.push_back(*s.rx);
    }
    return out;
}

//! All Rx and Tx sequences of the node except radio r's.
inline std::vector<ChannelSequence> other_sequences(NodeSchedule const& node,
                                                    RadioId r)
{
    std::vector<ChannelSequence> out;
    for (auto const& s : node.radios())
    {
        if (s.radio == r)
            continue;
        if (s.rx)
            out.push_back(*s.rx);
        if (s.tx)
            out.push_back(*s.tx);
    }
    return out;
}

inline ControlMessage make_reject(ControlMessage const& in,
                                  RejectReason reason,
                                  std::vector<ChannelSequence> blocked)
{
    ControlMessage m;
    m.kind = MessageKind::seq_reject;
    m.flow = in.flow;
    m.src = in.dst;
    m.dst = in.src;
    m.reason = reason;
    m.blocked = std::move(blocked);
    return m;
}

/*!
 * Install an incoming Rx sequence at radio s and settle the node.
 *
 * Shared by requests (Tx re-derived by a right shift of one) and updates
 * (existing Tx kept, only colliding slots replaced). Works on a copy so a
 * reject leaves the node untouched.
 */
inline AssignmentResult settle_incoming(NodeSchedule& node,
                                        ControlMessage const& msg,
                                        bool fresh_request,
                                        AssignmentParams const& p,
                                        Rng& rng)
{
    AssignmentResult result;
    auto& current = node.radio(msg.dst);
    if (!current.pinned() || current.flow != msg.flow)
    {
        if (!fresh_request)
        {
            result.note = "update for a flow this radio does not serve";
            return result;
        }
        result.decision = Decision::rejected;
        result.messages.push_back(
            make_reject(msg, RejectReason::busy, {}));
        result.note = "receiving radio busy";
        return result;
    }
    if (!fresh_request && current.prev != msg.src)
    {
        result.note = "update from a former predecessor";
        return result;
    }
    validate_sequence(msg.sequence, p.universe_size, p.sequence_length);

    // (Rx, Rx): the incoming Rx cannot be changed here
    for (auto const& o : other_rx(node, msg.dst))
    {
        if (!conflict_free(msg.sequence, o))
        {
            result.decision = Decision::rejected;
            result.messages.push_back(make_reject(
                msg, RejectReason::conflict, other_rx(node, msg.dst)));
            result.note = "Rx/Rx conflict";
            return result;
        }
    }

    NodeSchedule trial = node;
    auto& s = trial.radio(msg.dst);
    s.prev = msg.src;
    s.rx = msg.sequence;
    s.ancestors = msg.ancestors;
    if (static_cast<int>(s.ancestors.size()) > p.ancestor_depth)
        s.ancestors.resize(static_cast<std::size_t>(p.ancestor_depth));

    // (Tx, Rx) and (Tx, Tx): replace the new Tx's colliding slots
    if (s.next)
    {
        if (fresh_request || !s.tx)
            s.tx = right_shift(*s.rx, 1);
        if (!repair_tx(trial, s, p, rng))
        {
            result.decision = Decision::rejected;
            result.messages.push_back(make_reject(
                msg, RejectReason::infeasible, other_sequences(node, msg.dst)));
            result.note = "no conflict-free channel for own Tx";
            return result;
        }
    }
    else
    {
        s.tx.reset();
    }

    // (Rx, Tx): other flows' Tx sequences give way to the new Rx
    std::vector<RadioId> modified;
    for (auto& o : trial.radios())
    {
        if (o.radio == s.radio || !o.tx)
            continue;
        if (conflict_free(*s.rx, *o.tx))
            continue;
        if (!repair_tx(trial, o, p, rng))
        {
            result.decision = Decision::rejected;
            result.messages.push_back(make_reject(
                msg, RejectReason::infeasible, other_sequences(node, msg.dst)));
            result.note = "no conflict-free channel for a crossing flow";
            return result;
        }
        modified.push_back(o.radio);
    }

    node = std::move(trial);
    auto& settled = node.radio(msg.dst);
    result.decision = Decision::accepted;
    result.installed_rx = settled.rx;
    result.installed_tx = settled.tx;

    for (auto r : modified)
    {
        auto& o = node.radio(r);
        if (o.next)
        {
            result.messages.push_back(
                make_downstream(MessageKind::seq_update, o, p));
        }
    }
    if (settled.next)
    {
        if (fresh_request)
        {
            result.messages.push_back(
                make_downstream(MessageKind::seq_request, settled, p));
        }
        else if (downstream_stale(settled, p))
        {
            result.messages.push_back(
                make_downstream(MessageKind::seq_update, settled, p));
        }
    }
    return result;
}
}  // namespace detail

//---------------------------------------------------------------------------//
// OPERATIONS
//---------------------------------------------------------------------------//
/*!
 * Start a flow at its source radio: draw L non-repeating random channels
 * and request the first hop.
 *
 * The source's route radio is pinned if free (otherwise any free radio of
 * the node). With no free radio the flow is queued and nothing is sent.
 */
inline AssignmentResult assign_at_source(NodeSchedule& node,
                                         FlowPath const& flow,
                                         AssignmentParams const& p,
                                         Rng& rng)
{
    if (flow.route.size() < 2)
        throw ConfigError("malformed flow: source equals destination");

    AssignmentResult result;
    auto* s = node.find_flow(flow.flow);
    if (!s)
    {
        std::optional<RadioId> r;
        if (node.owns(flow.route[0]) && !node.radio(flow.route[0]).pinned())
            r = flow.route[0];
        else
            r = node.free_radio();
        if (!r)
        {
            result.decision = Decision::queued;
            result.note = "no free radio";
            return result;
        }
        node.pin(*r, flow.flow, std::nullopt, flow.route[1]);
        s = &node.radio(*r);
    }
    s->next = flow.route[1];
    s->prev.reset();
    s->rx.reset();
    s->ancestors.clear();

    s->tx = gen_random_sequence(p.universe_size, p.sequence_length, rng);
    if (!detail::repair_tx(node, *s, p, rng))
    {
        std::vector<ChannelSet> forbidden;
        for (std::size_t l = 0; l < s->tx->size(); ++l)
            forbidden.push_back(node.tx_exclusions(s->radio, l));
        auto drawn = draw_constrained_sequence(p.universe_size, forbidden, rng);
        if (!drawn)
        {
            node.release(s->radio);
            result.decision = Decision::failed;
            result.note = "no conflict-free sequence at source";
            return result;
        }
        s->tx = *drawn;
    }
    result.decision = Decision::accepted;
    result.installed_tx = s->tx;
    result.messages.push_back(
        detail::make_downstream(MessageKind::seq_request, *s, p));
    return result;
}

//! Receive a SeqRequest at its destination radio.
inline AssignmentResult handle_seq_request(NodeSchedule& node,
                                           ControlMessage const& msg,
                                           AssignmentParams const& p,
                                           Rng& rng)
{
    return detail::settle_incoming(node, msg, true, p, rng);
}

/*!
 * Receive a SeqUpdate: the upstream Tx (or its ancestors) changed.
 *
 * Processed like a request, but the existing Tx is kept and only its
 * colliding slots are replaced; the update travels further downstream only
 * while the forwarded payload changes.
 */
inline AssignmentResult handle_seq_update(NodeSchedule& node,
                                          ControlMessage const& msg,
                                          AssignmentParams const& p,
                                          Rng& rng)
{
    return detail::settle_incoming(node, msg, false, p, rng);
}

/*!
 * Redraw the Tx sequence of a rejected link and re-request.
 *
 * The fresh sequence avoids, slot by slot, every channel listed in the
 * reject plus the node's own exclusions.
 */
inline AssignmentResult handle_seq_reject(NodeSchedule& node,
                                          ControlMessage const& msg,
                                          AssignmentParams const& p,
                                          Rng& rng)
{
    AssignmentResult result;
    auto* s = node.find_flow(msg.flow);
    if (!s || !node.owns(msg.dst) || s->radio != msg.dst || s->next != msg.src
        || !s->tx)
    {
        result.note = "reject for unknown flow link";
        return result;
    }
    if (++s->rejects > p.retry_budget)
    {
        result.decision = Decision::failed;
        result.note = "retry budget exhausted";
        return result;
    }
    std::vector<ChannelSet> forbidden;
    for (std::size_t l = 0; l < s->tx->size(); ++l)
    {
        auto f = node.tx_exclusions(s->radio, l);
        for (auto const& b : msg.blocked)
        {
            if (b.size() == s->tx->size())
                f.insert(b[l]);
        }
        forbidden.push_back(f);
    }
    auto drawn = draw_constrained_sequence(p.universe_size, forbidden, rng);
    if (!drawn)
    {
        result.decision = Decision::failed;
        result.note = "no sequence avoids the rejected channels";
        return result;
    }
    s->tx = *drawn;
    result.decision = Decision::accepted;
    result.installed_tx = s->tx;
    result.messages.push_back(
        detail::make_downstream(MessageKind::seq_request, *s, p));
    return result;
}

/*!
 * Release a flow's state at the receiving radio and pass the cancel on.
 *
 * Only a cancel from the current predecessor releases anything, so a
 * cancel racing a route change is harmless; repeated cancels are no-ops.
 */
inline AssignmentResult handle_seq_cancel(NodeSchedule& node,
                                          ControlMessage const& msg)
{
    AssignmentResult result;
    auto* s = node.find_flow(msg.flow);
    if (!s || s->radio != msg.dst || s->prev != msg.src)
    {
        result.note = "cancel for inactive state";
        return result;
    }
    if (s->next)
    {
        ControlMessage m;
        m.kind = MessageKind::seq_cancel;
        m.flow = msg.flow;
        m.src = s->radio;
        m.dst = *s->next;
        result.messages.push_back(m);
    }
    result.released.push_back(s->radio);
    node.release(s->radio);
    result.decision = Decision::accepted;
    return result;
}

//! Tear a flow down from its source radio.
inline AssignmentResult cancel_at_source(NodeSchedule& node, FlowId flow)
{
    AssignmentResult result;
    auto* s = node.find_flow(flow);
    if (!s)
        return result;
    if (s->next)
    {
        ControlMessage m;
        m.kind = MessageKind::seq_cancel;
        m.flow = flow;
        m.src = s->radio;
        m.dst = *s->next;
        result.messages.push_back(m);
    }
    result.released.push_back(s->radio);
    node.release(s->radio);
    result.decision = Decision::accepted;
    return result;
}

/*!
 * Next forwarder of a flow changed: cancel the old receiver and request
 * the new one with the retained Tx sequence.
 */
inline AssignmentResult handle_route_change(NodeSchedule& node,
                                            FlowId flow,
                                            RadioId old_next,
                                            RadioId new_next,
                                            AssignmentParams const& p)
{
    AssignmentResult result;
    auto* s = node.find_flow(flow);
    if (!s || !s->tx)
    {
        result.note = "route change for inactive flow";
        return result;
    }
    if (old_next == new_next)
    {
        result.decision = Decision::accepted;
        return result;
    }
    ControlMessage cancel;
    cancel.kind = MessageKind::seq_cancel;
    cancel.flow = flow;
    cancel.src = s->radio;
    cancel.dst = old_next;
    result.messages.push_back(cancel);

    s->next = new_next;
    s->rejects = 0;
    result.messages.push_back(
        detail::make_downstream(MessageKind::seq_request, *s, p));
    result.installed_tx = s->tx;
    result.decision = Decision::accepted;
    return result;
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
