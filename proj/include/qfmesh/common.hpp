//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/common.hpp
//! Identifiers, channel sets, error types and seeded randomness shared by
//! every module.
//---------------------------------------------------------------------------//
#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfmesh
{
//---------------------------------------------------------------------------//
// ERRORS
//---------------------------------------------------------------------------//
//! Invalid or inconsistent configuration value.
struct ConfigError : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

//! Configuration that violates the sequence-length feasibility bound.
struct InfeasibleConfig : ConfigError
{
    using ConfigError::ConfigError;
};

//! Reference to a radio, node or flow that does not exist.
struct UnknownId : std::out_of_range
{
    using std::out_of_range::out_of_range;
};

//---------------------------------------------------------------------------//
// STRONG IDENTIFIERS
//---------------------------------------------------------------------------//
template<class Tag>
class StrongId
{
  public:
    using value_type = std::int32_t;

    constexpr StrongId() = default;
    constexpr explicit StrongId(value_type v) : value_{v} {}

    constexpr value_type get() const { return value_; }
    constexpr bool valid() const { return value_ >= 0; }

    friend constexpr auto operator<=>(StrongId, StrongId) = default;
    friend std::ostream& operator<<(std::ostream& os, StrongId id)
    {
        return os << id.value_;
    }

  private:
    value_type value_{-1};
};

using NodeId = StrongId<struct NodeTag>;
using RadioId = StrongId<struct RadioTag>;
using FlowId = StrongId<struct FlowTag>;

//! Data channel index in [0, |U|). The control channel lives outside U.
using Channel = std::int32_t;

inline constexpr int max_universe_size = 64;

//---------------------------------------------------------------------------//
/*!
 * Small set of channel ids backed by a 64-bit mask.
 */
class ChannelSet
{
  public:
    constexpr ChannelSet() = default;
    constexpr explicit ChannelSet(std::uint64_t bits) : bits_{bits} {}

    static constexpr ChannelSet universe(int size)
    {
        return ChannelSet{size >= 64 ? ~std::uint64_t{0}
                                     : (std::uint64_t{1} << size) - 1};
    }

    constexpr void insert(Channel c) { bits_ |= bit(c); }
    constexpr void erase(Channel c) { bits_ &= ~bit(c); }
    constexpr bool contains(Channel c) const
    {
        return c >= 0 && c < 64 && (bits_ & bit(c)) != 0;
    }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr int size() const { return std::popcount(bits_); }
    constexpr std::uint64_t bits() const { return bits_; }

    constexpr ChannelSet operator|(ChannelSet o) const
    {
        return ChannelSet{bits_ | o.bits_};
    }
    constexpr ChannelSet operator&(ChannelSet o) const
    {
        return ChannelSet{bits_ & o.bits_};
    }
    constexpr ChannelSet without(ChannelSet o) const
    {
        return ChannelSet{bits_ & ~o.bits_};
    }
    constexpr ChannelSet& operator|=(ChannelSet o)
    {
        bits_ |= o.bits_;
        return *this;
    }
    friend constexpr bool operator==(ChannelSet, ChannelSet) = default;

    //! Members in increasing order.
    std::vector<Channel> members() const
    {
        std::vector<Channel> out;
        for (auto b = bits_; b != 0; b &= b - 1)
            out.push_back(static_cast<Channel>(std::countr_zero(b)));
        return out;
    }

  private:
    static constexpr std::uint64_t bit(Channel c)
    {
        return std::uint64_t{1} << static_cast<unsigned>(c);
    }

    std::uint64_t bits_{0};
};

//---------------------------------------------------------------------------//
// RANDOMNESS
//---------------------------------------------------------------------------//
using Rng = std::mt19937_64;

//! SplitMix64 finalizer, used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

//! Sub-seed for a named stream of one trial.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream)
{
    return mix_seed(seed ^ mix_seed(stream + 0x51ed27ULL));
}

//! Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>{lo, hi}(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>{lo, hi}(rng);
}

//! Uniformly random member of a nonempty set.
inline Channel pick_uniform(ChannelSet set, Rng& rng)
{
    auto members = set.members();
    return members[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(members.size()) - 1))];
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh

template<class Tag>
struct std::hash<qfmesh::StrongId<Tag>>
{
    std::size_t operator()(qfmesh::StrongId<Tag> id) const noexcept
    {
        return std::hash<std::int32_t>{}(id.get());
    }
};
