//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/channel_adaptation.hpp
//! Passive traffic estimation and the augment / migrate / reduce channel
//! adaptation rule, plus channel and scheduling efficiency.
//---------------------------------------------------------------------------//
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "qfmac_assignment.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
struct AdaptationParams
{
    double theta1{0.5};  //!< goodput threshold for migration
    double theta2{0.5};  //!< load threshold for reduction, per channel
    int window{100};  //!< estimation window, slots
    int cadence{100};  //!< slots between evaluations
    bool reset_stats{true};  //!< forget ch_new history on swap

    void validate() const
    {
        if (!(theta1 > 0 && theta1 < 1))
            throw ConfigError("theta1 must lie in (0, 1)");
        if (!(theta2 > 0 && theta2 < 1))
            throw ConfigError("theta2 must lie in (0, 1)");
        if (window < 1)
            throw ConfigError("adaptation window must be positive");
        if (cadence < 1)
            throw ConfigError("adaptation cadence must be positive");
    }
};

//---------------------------------------------------------------------------//
/*!
 * Sliding-window estimate of aggregate traffic around one radio.
 *
 * Each slot records the channel the radio itself sent on (if any) and,
 * per channel, how many other transmitters in its interference set were
 * heard (a jammer counts as one). The aggregate traffic of a channel is the
 * windowed mean of own plus heard transmissions per slot.
 */
class TrafficObservation
{
  public:
    TrafficObservation() : TrafficObservation(100) {}
    explicit TrafficObservation(int window)
        : slots_(static_cast<std::size_t>(window))
    {
        if (window < 1)
            throw ConfigError("observation window must be positive");
    }

    struct Heard
    {
        Channel channel;
        int count;
    };

    //! Record one slot; \c own is the channel the radio sent on, or -1.
    void observe_slot(Channel own, std::span<Heard const> heard)
    {
        auto& rec = slots_[head_];
        if (filled_ == static_cast<int>(slots_.size()))
            retire(rec);
        else
            ++filled_;
        rec.own = own;
        rec.heard.assign(heard.begin(), heard.end());
        if (own >= 0)
            own_[static_cast<std::size_t>(own)] += 1;
        for (auto h : rec.heard)
            others_[static_cast<std::size_t>(h.channel)] += h.count;
        head_ = (head_ + 1) % slots_.size();
    }

    int window() const { return static_cast<int>(slots_.size()); }
    int filled() const { return filled_; }

    //! Own offered load p(i, ch): fraction of window slots sent on ch.
    double own_load(Channel ch) const { return frac(own_, ch); }
    //! Heard transmissions per slot from other sources on ch.
    double busy(Channel ch) const { return frac(others_, ch); }
    //! Aggregate traffic ag(ch) = own load + heard load.
    double ag(Channel ch) const { return own_load(ch) + busy(ch); }

    //! Channels with any own or heard activity in the window.
    ChannelSet active_set() const
    {
        ChannelSet s;
        for (int c = 0; c < max_universe_size; ++c)
        {
            if (own_[static_cast<std::size_t>(c)] > 0
                || others_[static_cast<std::size_t>(c)] > 0)
                s.insert(c);
        }
        return s;
    }

    //! Drop all history of one channel.
    void reset_channel(Channel ch)
    {
        for (auto& rec : slots_)
        {
            if (rec.own == ch)
                rec.own = -1;
            std::erase_if(rec.heard,
                          [ch](Heard const& h) { return h.channel == ch; });
        }
        own_[static_cast<std::size_t>(ch)] = 0;
        others_[static_cast<std::size_t>(ch)] = 0;
    }

  private:
    struct Record
    {
        Channel own{-1};
        std::vector<Heard> heard;
    };

    void retire(Record const& rec)
    {
        if (rec.own >= 0)
            own_[static_cast<std::size_t>(rec.own)] -= 1;
        for (auto h : rec.heard)
            others_[static_cast<std::size_t>(h.channel)] -= h.count;
    }

    double frac(std::array<int, max_universe_size> const& a, Channel ch) const
    {
        if (filled_ == 0 || ch < 0 || ch >= max_universe_size)
            return 0;
        return static_cast<double>(a[static_cast<std::size_t>(ch)]) / filled_;
    }

    std::vector<Record> slots_;
    std::size_t head_{0};
    int filled_{0};
    std::array<int, max_universe_size> own_{};
    std::array<int, max_universe_size> others_{};
};

//---------------------------------------------------------------------------//
/*!
 * Windowed ACKed-to-transmitted ratio per channel.
 */
class GoodputStats
{
  public:
    GoodputStats() : GoodputStats(100) {}
    explicit GoodputStats(int window) : slots_(static_cast<std::size_t>(window))
    {
        if (window < 1)
            throw ConfigError("goodput window must be positive");
    }

    //! One slot: channel transmitted on (-1 for none) and whether ACKed.
    void record(Channel ch, bool acked)
    {
        auto& rec = slots_[head_];
        if (filled_ == static_cast<int>(slots_.size()))
            retire(rec);
        else
            ++filled_;
        rec = {ch, acked};
        if (ch >= 0)
        {
            sent_[static_cast<std::size_t>(ch)] += 1;
            acked_[static_cast<std::size_t>(ch)] += acked ? 1 : 0;
        }
        head_ = (head_ + 1) % slots_.size();
    }

    int transmitted(Channel ch) const
    {
        return sent_[static_cast<std::size_t>(ch)];
    }
    int acked(Channel ch) const { return acked_[static_cast<std::size_t>(ch)]; }

    //! G(i, ch), absent when nothing was sent on ch in the window.
    std::optional<double> ratio(Channel ch) const
    {
        auto n = transmitted(ch);
        if (n == 0)
            return std::nullopt;
        return static_cast<double>(acked(ch)) / n;
    }

    void reset_channel(Channel ch)
    {
        for (auto& rec : slots_)
        {
            if (rec.channel == ch)
                rec = {};
        }
        sent_[static_cast<std::size_t>(ch)] = 0;
        acked_[static_cast<std::size_t>(ch)] = 0;
    }

  private:
    struct Record
    {
        Channel channel{-1};
        bool acked{false};
    };

    void retire(Record const& rec)
    {
        if (rec.channel < 0)
            return;
        sent_[static_cast<std::size_t>(rec.channel)] -= 1;
        acked_[static_cast<std::size_t>(rec.channel)] -= rec.acked ? 1 : 0;
    }

    std::vector<Record> slots_;
    std::size_t head_{0};
    int filled_{0};
    std::array<int, max_universe_size> sent_{};
    std::array<int, max_universe_size> acked_{};
};

//---------------------------------------------------------------------------//
// ADAPTATION
//---------------------------------------------------------------------------//
enum class AdaptAction
{
    none,
    augment,
    migrate,
    reduce,
};

inline char const* to_string(AdaptAction a)
{
    switch (a)
    {
        case AdaptAction::none: return "none";
        case AdaptAction::augment: return "augment";
        case AdaptAction::migrate: return "migrate";
        case AdaptAction::reduce: return "reduce";
    }
    return "?";
}

struct AdaptationResult
{
    AdaptAction action{AdaptAction::none};
    Channel ch_old{-1};
    Channel ch_new{-1};
    double sum_ag{0};
    int active_size{0};
    std::optional<double> g_min;
    std::vector<ControlMessage> messages;
    std::string note;
};

/*!
 * Selection weights over candidates, proportional to 1/ag.
 *
 * Aggregate traffic is floored at one transmission per window so an idle
 * channel gets a large but finite weight.
 */
inline std::vector<double> selection_probabilities(
    std::span<Channel const> candidates,
    std::function<double(Channel)> const& ag,
    int window)
{
    std::vector<double> w;
    double floor = 1.0 / std::max(window, 1);
    double total = 0;
    for (auto c : candidates)
    {
        w.push_back(1.0 / std::max(ag(c), floor));
        total += w.back();
    }
    for (auto& x : w)
        x /= total;
    return w;
}

namespace detail
{
inline Channel draw_inverse_load(std::vector<Channel> const& candidates,
                                 TrafficObservation const& obs,
                                 int window,
                                 Rng& rng)
{
    auto p = selection_probabilities(
        candidates, [&](Channel c) { return obs.ag(c); }, window);
    std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
    return candidates[pick(rng)];
}
}  // namespace detail

/*!
 * One evaluation of the adaptation rule at a radio with an active Tx.
 *
 * Augment if the region carries more than one transmission per active
 * channel per slot; else migrate off the channel with the worst goodput
 * ratio if it is below theta1; else reduce if the load is below theta2
 * per active channel. A swap keeps the node's sequences conflict-free and
 * emits a SeqUpdate to the next hop.
 */
inline AdaptationResult adapt(NodeSchedule& node,
                              RadioId radio,
                              TrafficObservation& obs,
                              GoodputStats& goodput,
                              AdaptationParams const& params,
                              AssignmentParams const& assign,
                              Rng& rng)
{
    AdaptationResult out;
    auto& s = node.radio(radio);
    if (!s.tx)
    {
        out.note = "no active Tx sequence";
        return out;
    }
    auto own = s.tx->channels();
    auto active = obs.active_set() | own;
    auto all = ChannelSet::universe(assign.universe_size);
    active = active & all;
    out.active_size = active.size();
    for (auto c : active.members())
        out.sum_ag += obs.ag(c);
    for (auto c : own.members())
    {
        if (auto g = goodput.ratio(c); g && (!out.g_min || *g < *out.g_min))
            out.g_min = g;
    }

    // Channels usable at the slot of ch_old without a node-local conflict
    auto usable_at = [&](Channel ch_old) {
        auto l = static_cast<std::size_t>(s.tx->index_of(ch_old));
        return all.without(node.tx_exclusions(radio, l)).without(own);
    };

    auto commit = [&](AdaptAction a, Channel ch_old, Channel ch_new) {
        auto l = static_cast<std::size_t>(s.tx->index_of(ch_old));
        s.tx->replace_at(l, ch_new);
        out.action = a;
        out.ch_old = ch_old;
        out.ch_new = ch_new;
        if (params.reset_stats)
        {
            obs.reset_channel(ch_new);
            goodput.reset_channel(ch_new);
        }
        if (s.next)
        {
            out.messages.push_back(
                detail::make_downstream(MessageKind::seq_update, s, assign));
        }
        return out;
    };

    auto argbest = [&](ChannelSet set, auto better) {
        Channel best = -1;
        for (auto c : set.members())
        {
            if (best < 0 || better(c, best))
                best = c;
        }
        return best;
    };

    if (out.sum_ag > out.active_size)
    {
        auto ch_old = argbest(
            own, [&](Channel a, Channel b) { return obs.ag(a) > obs.ag(b); });
        auto options = usable_at(ch_old).without(active);
        if (!options.empty())
            return commit(AdaptAction::augment, ch_old, pick_uniform(options, rng));
    }

    if (out.g_min && *out.g_min < params.theta1)
    {
        Channel ch_old = -1;
        double worst = 2;
        for (auto c : own.members())
        {
            auto g = goodput.ratio(c);
            if (g && *g < worst)
            {
                worst = *g;
                ch_old = c;
            }
        }
        auto x = (usable_at(ch_old) & active).members();
        if (x.empty())
        {
            out.note = "migration has no candidate channel";
            return out;
        }
        return commit(AdaptAction::migrate,
                      ch_old,
                      detail::draw_inverse_load(x, obs, params.window, rng));
    }

    if (out.sum_ag < params.theta2 * out.active_size)
    {
        auto ch_old = argbest(
            own, [&](Channel a, Channel b) { return obs.ag(a) < obs.ag(b); });
        auto x = (usable_at(ch_old) & active).members();
        if (x.empty())
        {
            out.note = "reduction has no candidate channel";
            return out;
        }
        return commit(AdaptAction::reduce,
                      ch_old,
                      detail::draw_inverse_load(x, obs, params.window, rng));
    }
    return out;
}

//! "slot,radio,action,ch_old,ch_new,sum_ag,active_size,g_min"
inline std::string format_adaptation_event(std::int64_t slot,
                                           RadioId radio,
                                           AdaptationResult const& r)
{
    std::ostringstream os;
    os.precision(6);
    os << slot << ',' << radio << ',' << to_string(r.action) << ','
       << r.ch_old << ',' << r.ch_new << ',' << r.sum_ag << ','
       << r.active_size << ',';
    if (r.g_min)
        os << *r.g_min;
    return os.str();
}

//---------------------------------------------------------------------------//
// EFFICIENCY
//---------------------------------------------------------------------------//
/*!
 * Probability that exactly one of the given senders transmits.
 *
 * \f[ e = \sum_j p_j \prod_{k \ne j} (1 - p_k) \f]
 */
inline double channel_efficiency(std::span<double const> p)
{
    double e = 0;
    for (std::size_t j = 0; j < p.size(); ++j)
    {
        if (p[j] < 0 || p[j] > 1)
            throw ConfigError("transmission probability outside [0, 1]");
        double term = p[j];
        for (std::size_t k = 0; k < p.size(); ++k)
        {
            if (k != j)
                term *= 1 - p[k];
        }
        e += term;
    }
    return e;
}

//! One radio's scheduled channel and transmit probability in one slot.
struct ScheduledRadio
{
    int radio;
    Channel channel;
    double p;
};

using SlotSchedule = std::vector<ScheduledRadio>;

/*!
 * Mean over slots of the summed per-radio efficiency on each radio's
 * scheduled channel. A radio's region is itself plus every radio for which
 * \c interferes(i, j) holds.
 */
inline double
avg_scheduling_efficiency(std::span<SlotSchedule const> trace,
                          std::function<bool(int, int)> const& interferes)
{
    if (trace.empty())
        throw ConfigError("scheduling trace is empty");
    double total = 0;
    std::vector<double> p;
    for (auto const& slot : trace)
    {
        for (auto const& i : slot)
        {
            p.clear();
            for (auto const& j : slot)
            {
                if (j.channel == i.channel
                    && (j.radio == i.radio || interferes(i.radio, j.radio)))
                    p.push_back(j.p);
            }
            total += channel_efficiency(p);
        }
    }
    return total / static_cast<double>(trace.size());
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
