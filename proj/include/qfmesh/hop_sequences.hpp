//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/hop_sequences.hpp
//! Channel hopping sequences: representation, generation, rotation, TSCH
//! lookup and slotwise conflict detection.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
/*!
 * Cyclic list of distinct channel ids; slot t uses entry t mod L.
 */
class ChannelSequence
{
  public:
    ChannelSequence() = default;

    explicit ChannelSequence(std::vector<Channel> entries)
        : entries_{std::move(entries)}
    {
        ChannelSet seen;
        for (auto c : entries_)
        {
            if (c < 0 || c >= max_universe_size)
                throw ConfigError("channel id out of range");
            if (seen.contains(c))
                throw ConfigError("channel sequence repeats a channel");
            seen.insert(c);
        }
    }

    std::size_t size() const { return entries_.size(); }
    int length() const { return static_cast<int>(entries_.size()); }
    bool empty() const { return entries_.empty(); }

    Channel operator[](std::size_t l) const { return entries_[l]; }
    Channel at_slot(std::int64_t asn) const
    {
        auto L = static_cast<std::int64_t>(entries_.size());
        return entries_[static_cast<std::size_t>(((asn % L) + L) % L)];
    }

    bool contains(Channel c) const
    {
        return std::find(entries_.begin(), entries_.end(), c)
               != entries_.end();
    }

    //! Index of a channel, or -1.
    int index_of(Channel c) const
    {
        auto it = std::find(entries_.begin(), entries_.end(), c);
        return it == entries_.end()
                   ? -1
                   : static_cast<int>(it - entries_.begin());
    }

    ChannelSet channels() const
    {
        ChannelSet s;
        for (auto c : entries_)
            s.insert(c);
        return s;
    }

    //! Overwrite one slot; the new channel must not already be present.
    void replace_at(std::size_t l, Channel c)
    {
        if (entries_[l] == c)
            return;
        if (contains(c))
            throw ConfigError("replacement would repeat a channel");
        entries_[l] = c;
    }

    std::vector<Channel> const& entries() const { return entries_; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    friend bool operator==(ChannelSequence const&, ChannelSequence const&)
        = default;

  private:
    std::vector<Channel> entries_;
};

//---------------------------------------------------------------------------//
// LENGTH BOUND
//---------------------------------------------------------------------------//
/*!
 * Smallest admissible sequence length, max(2*delta+1, C).
 *
 * Throws InfeasibleConfig when the universe cannot hold it.
 */
inline int min_sequence_length(int delta, int radios_per_node, int universe_size)
{
    if (delta < 1)
        throw ConfigError("delta must be at least 1");
    if (radios_per_node < 1)
        throw ConfigError("radios per node must be at least 1");
    int need = std::max(2 * delta + 1, radios_per_node);
    if (need > universe_size)
    {
        throw InfeasibleConfig(
            "infeasible: |U| >= L >= max(2*delta+1, C) requires |U| >= "
            + std::to_string(need) + " but |U| = "
            + std::to_string(universe_size));
    }
    return need;
}

//! Validate |U| >= L >= max(2*delta+1, C), naming the violated side.
inline void check_sequence_length(int length,
                                  int delta,
                                  int radios_per_node,
                                  int universe_size)
{
    if (universe_size < 1 || universe_size > max_universe_size)
        throw ConfigError("|U| must lie in [1, 64]");
    int lower = std::max(2 * delta + 1, radios_per_node);
    if (length < lower)
    {
        throw InfeasibleConfig(
            "L >= max(2*delta+1, C) violated: L = " + std::to_string(length)
            + " < max(2*" + std::to_string(delta) + "+1, "
            + std::to_string(radios_per_node) + ") = " + std::to_string(lower));
    }
    if (length > universe_size)
    {
        throw InfeasibleConfig("|U| >= L violated: |U| = "
                               + std::to_string(universe_size) + " < L = "
                               + std::to_string(length));
    }
}

//! Throws unless the sequence has length L and draws only from U.
inline void validate_sequence(ChannelSequence const& s,
                              int universe_size,
                              int length)
{
    if (s.length() != length)
        throw ConfigError("sequence length differs from L");
    for (auto c : s)
    {
        if (c >= universe_size)
            throw ConfigError("sequence uses a channel outside U");
    }
}

//---------------------------------------------------------------------------//
// OPERATIONS
//---------------------------------------------------------------------------//
//! out[(l + offset) mod L] = in[l].
inline ChannelSequence right_shift(ChannelSequence const& seq, int offset)
{
    if (offset < 0)
        throw ConfigError("shift offset must be non-negative");
    auto L = seq.size();
    if (L == 0)
        return seq;
    std::vector<Channel> out(L);
    for (std::size_t l = 0; l < L; ++l)
        out[(l + static_cast<std::size_t>(offset)) % L] = seq[l];
    return ChannelSequence{std::move(out)};
}

//! Globally shared sequence staggered by a per-link channel offset.
struct TschSchedule
{
    ChannelSequence global_sequence;
    int offset{0};
};

//! CHS[(ASN + OF) mod L].
inline Channel tsch_channel(TschSchedule const& s, std::int64_t asn)
{
    auto L = s.global_sequence.length();
    if (s.offset < 0 || s.offset >= L)
        throw ConfigError("channel offset outside [0, L)");
    return s.global_sequence.at_slot(asn + s.offset);
}

//! Uniformly random ordered selection of L distinct channels from U.
inline ChannelSequence
gen_random_sequence(int universe_size, int length, Rng& rng)
{
    if (length > universe_size)
        throw InfeasibleConfig("cannot draw L distinct channels: L > |U|");
    if (length < 0)
        throw ConfigError("negative sequence length");
    std::vector<Channel> pool(static_cast<std::size_t>(universe_size));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < length; ++i)
    {
        int j = uniform_int(rng, i, universe_size - 1);
        std::swap(pool[static_cast<std::size_t>(i)],
                  pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(length));
    return ChannelSequence{std::move(pool)};
}

/*!
 * Slot indices at which two sequences use the same channel.
 *
 * In strict mode the lengths must match; otherwise the comparison runs
 * over lcm(|a|, |b|) slots.
 */
inline std::vector<int> conflict_slots(ChannelSequence const& a,
                                       ChannelSequence const& b,
                                       bool strict = true)
{
    std::vector<int> out;
    if (a.empty() || b.empty())
        return out;
    if (a.size() != b.size())
    {
        if (strict)
            throw ConfigError("sequence lengths differ");
        auto span = std::lcm(a.size(), b.size());
        for (std::size_t l = 0; l < span; ++l)
        {
            if (a[l % a.size()] == b[l % b.size()])
                out.push_back(static_cast<int>(l));
        }
        return out;
    }
    for (std::size_t l = 0; l < a.size(); ++l)
    {
        if (a[l] == b[l])
            out.push_back(static_cast<int>(l));
    }
    return out;
}

inline bool conflict_free(ChannelSequence const& a, ChannelSequence const& b)
{
    return conflict_slots(a, b).empty();
}

/*!
 * Random sequence honoring per-slot exclusions.
 *
 * Slot l may only use channels in universe \ forbidden[l]; entries stay
 * distinct. Randomized depth-first search, so a solution is found whenever
 * one exists.
 */
inline std::optional<ChannelSequence>
draw_constrained_sequence(int universe_size,
                          std::span<ChannelSet const> forbidden,
                          Rng& rng)
{
    auto L = forbidden.size();
    auto all = ChannelSet::universe(universe_size);
    std::vector<Channel> chosen(L, -1);
    std::vector<std::vector<Channel>> options(L);

    // Fill the most constrained slots first
    std::vector<std::size_t> order(L);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) {
        return forbidden[x].size() > forbidden[y].size();
    });

    auto candidates = [&](std::size_t depth, ChannelSet used) {
        auto slot = order[depth];
        auto opts = all.without(forbidden[slot]).without(used).members();
        std::shuffle(opts.begin(), opts.end(), rng);
        return opts;
    };

    ChannelSet used;
    std::vector<std::size_t> cursor(L, 0);
    std::size_t depth = 0;
    if (L == 0)
        return ChannelSequence{};
    options[0] = candidates(0, used);
    while (true)
    {
        if (cursor[depth] < options[depth].size())
        {
            auto c = options[depth][cursor[depth]++];
            chosen[order[depth]] = c;
            used.insert(c);
            if (depth + 1 == L)
                return ChannelSequence{chosen};
            ++depth;
            cursor[depth] = 0;
            options[depth] = candidates(depth, used);
            continue;
        }
        if (depth == 0)
            return std::nullopt;
        --depth;
        used.erase(chosen[order[depth]]);
    }
}

//---------------------------------------------------------------------------//
// TEXT FORM
//---------------------------------------------------------------------------//
//! "3,1,4,0"
inline std::string format_sequence(ChannelSequence const& s)
{
    std::string out;
    for (std::size_t l = 0; l < s.size(); ++l)
    {
        if (l)
            out += ',';
        out += std::to_string(s[l]);
    }
    return out;
}

inline ChannelSequence parse_sequence(std::string_view text)
{
    std::vector<Channel> out;
    std::string item;
    std::istringstream is{std::string{text}};
    while (std::getline(is, item, ','))
    {
        auto b = item.find_first_not_of(" \t");
        auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos)
            throw ConfigError("empty entry in sequence literal");
        item = item.substr(b, e - b + 1);
        std::size_t used = 0;
        int v = 0;
        try
        {
            v = std::stoi(item, &used);
        }
        catch (std::exception const&)
        {
            throw ConfigError("bad channel in sequence literal: " + item);
        }
        if (used != item.size())
            throw ConfigError("bad channel in sequence literal: " + item);
        out.push_back(v);
    }
    return ChannelSequence{std::move(out)};
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
