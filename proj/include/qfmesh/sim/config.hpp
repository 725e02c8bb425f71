//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/sim/config.hpp
//! Trial configuration: defaults, key = value parsing and validation.
//---------------------------------------------------------------------------//
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "../hop_sequences.hpp"
#include "../mesh_model.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
enum class Protocol
{
    qfmac,
    qfmac_a,
    tsch,
    random,
    csma,
};

inline char const* to_string(Protocol p)
{
    switch (p)
    {
        case Protocol::qfmac:
            return "qfmac";
        case Protocol::qfmac_a:
            return "qfmac-a";
        case Protocol::tsch:
            return "tsch";
        case Protocol::random:
            return "random";
        case Protocol::csma:
            return "csma";
    }
    return "?";
}

inline Protocol parse_protocol(std::string const& s)
{
    for (auto p : {Protocol::qfmac, Protocol::qfmac_a, Protocol::tsch,
                   Protocol::random, Protocol::csma})
    {
        if (s == to_string(p))
            return p;
    }
    throw ConfigError("unknown protocol '" + s + "'");
}

//! Whether the protocol hops over per-link channel sequences.
inline bool uses_sequences(Protocol p)
{
    return p != Protocol::csma;
}

//---------------------------------------------------------------------------//
/*!
 * Everything that determines one simulated trial.
 *
 * Times are seconds, distances meters, rates bits per second. Slot-valued
 * fields count slots of the protocol's own slot length.
 */
struct TrialConfig
{
    Protocol protocol{Protocol::qfmac};
    int nodes{64};
    double density{2.0};  //!< nodes per R_t^2
    int flows{7};
    double flow_bits{3e6};
    bool saturated{false};  //!< flows never complete
    double mobility{0};  //!< mean speed [m/s]
    double mobility_alpha{0.75};
    double sigma_speed{1.0};
    double sigma_heading{0.3};
    bool jammer{false};
    double jammer_radius{1320};
    int jammer_channels{2};
    int jammer_window{100};
    int jammer_cadence{0};  //!< 0: select once after the first window
    double slot_s{0.010};
    double csma_slot_s{0.003};
    int packet_bytes{1000};
    double channel_rate_bps{1e6};
    double csma_rate_bps{3.5e6};
    double csma_jammed_rate_bps{1.5e6};
    int csma_channels{2};
    int sequence_length{4};
    int tsch_length{7};
    int universe{7};
    int radios{4};
    double tx_radius{1000};
    double interference_radius{1000};
    double duration_s{60};
    double arrival_s{5};
    std::uint64_t seed{1};
    int queue_capacity{64};
    int max_retries{3};
    int retry_budget{3};
    int ancestor_depth{-1};  //!< negative: 2*delta-1
    double theta1{0.5};
    double theta2{0.5};
    int adapt_window{100};
    int adapt_cadence{100};
    int csma_cw_min{4};
    int csma_cw_max{64};
    int reroute_backoff{100};
    //! Fixed placement; overrides nodes/density when nonempty
    std::vector<Vec2> positions;
    //! Fixed endpoints (node indices); overrides random flow draws
    std::vector<std::pair<int, int>> flow_pairs;

    double slot() const
    {
        return protocol == Protocol::csma ? csma_slot_s : slot_s;
    }
    int node_count() const
    {
        return positions.empty() ? nodes : static_cast<int>(positions.size());
    }
    int flow_count() const
    {
        return flow_pairs.empty() ? flows : static_cast<int>(flow_pairs.size());
    }
    int delta() const
    {
        return static_cast<int>(
            std::ceil(interference_radius / tx_radius - 1e-12));
    }
    //! Hopping sequence length used by this protocol's links.
    int link_length() const
    {
        return protocol == Protocol::tsch ? tsch_length : sequence_length;
    }
    int effective_ancestor_depth() const
    {
        return ancestor_depth < 0 ? 2 * delta() - 1 : ancestor_depth;
    }
    std::int64_t total_slots() const
    {
        return std::llround(duration_s / slot());
    }
    std::int64_t arrival_slot() const
    {
        return std::llround(arrival_s / slot());
    }
    std::int64_t packets_per_flow() const
    {
        return static_cast<std::int64_t>(
            std::ceil(flow_bits / (8.0 * packet_bytes) - 1e-9));
    }

    void validate() const;
};

//---------------------------------------------------------------------------//
// KEY TABLE
//---------------------------------------------------------------------------//
namespace detail
{
inline std::string trim(std::string s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(std::string const& key, std::string const& v)
{
    try
    {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d))
            throw ConfigError("");
        return d;
    }
    catch (std::exception const&)
    {
        throw ConfigError("key '" + key + "': expected a number, got '" + v
                          + "'");
    }
}

template<class I>
I parse_integer(std::string const& key, std::string const& v)
{
    I out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("key '" + key + "': expected an integer, got '" + v
                          + "'");
    return out;
}

inline bool parse_bool(std::string const& key, std::string const& v)
{
    if (v == "true" || v == "1" || v == "on" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "off" || v == "no")
        return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v
                      + "'");
}

inline std::vector<std::string> split(std::string const& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        out.push_back(trim(cur));
    return out;
}

inline std::string format_double(double d)
{
    std::ostringstream os;
    os << std::setprecision(17) << d;
    return os.str();
}

struct Field
{
    std::function<void(TrialConfig&, std::string const&, std::string const&)>
        set;
    std::function<std::string(TrialConfig const&)> get;
};

template<class T>
Field number_field(T TrialConfig::*m)
{
    return {[m](TrialConfig& c, std::string const& k, std::string const& v) {
                if constexpr (std::is_same_v<T, double>)
                    c.*m = parse_double(k, v);
                else
                    c.*m = parse_integer<T>(k, v);
            },
            [m](TrialConfig const& c) {
                if constexpr (std::is_same_v<T, double>)
                    return format_double(c.*m);
                else
                    return std::to_string(c.*m);
            }};
}

inline Field bool_field(bool TrialConfig::*m)
{
    return {[m](TrialConfig& c, std::string const& k, std::string const& v) {
                c.*m = parse_bool(k, v);
            },
            [m](TrialConfig const& c) {
                return std::string{c.*m ? "true" : "false"};
            }};
}

inline std::map<std::string, Field> const& fields()
{
    static std::map<std::string, Field> const table = [] {
        std::map<std::string, Field> t;
        t["protocol"] = {[](TrialConfig& c, std::string const&,
                            std::string const& v) {
                             c.protocol = parse_protocol(v);
                         },
                         [](TrialConfig const& c) {
                             return std::string{to_string(c.protocol)};
                         }};
        t["nodes"] = number_field(&TrialConfig::nodes);
        t["density"] = number_field(&TrialConfig::density);
        t["flows"] = number_field(&TrialConfig::flows);
        t["flow_bits"] = number_field(&TrialConfig::flow_bits);
        t["saturated"] = bool_field(&TrialConfig::saturated);
        t["mobility"] = number_field(&TrialConfig::mobility);
        t["mobility_alpha"] = number_field(&TrialConfig::mobility_alpha);
        t["sigma_speed"] = number_field(&TrialConfig::sigma_speed);
        t["sigma_heading"] = number_field(&TrialConfig::sigma_heading);
        t["jammer"] = bool_field(&TrialConfig::jammer);
        t["jammer_radius"] = number_field(&TrialConfig::jammer_radius);
        t["jammer_channels"] = number_field(&TrialConfig::jammer_channels);
        t["jammer_window"] = number_field(&TrialConfig::jammer_window);
        t["jammer_cadence"] = number_field(&TrialConfig::jammer_cadence);
        t["slot_s"] = number_field(&TrialConfig::slot_s);
        t["csma_slot_s"] = number_field(&TrialConfig::csma_slot_s);
        t["packet_bytes"] = number_field(&TrialConfig::packet_bytes);
        t["channel_rate_bps"] = number_field(&TrialConfig::channel_rate_bps);
        t["csma_rate_bps"] = number_field(&TrialConfig::csma_rate_bps);
        t["csma_jammed_rate_bps"]
            = number_field(&TrialConfig::csma_jammed_rate_bps);
        t["csma_channels"] = number_field(&TrialConfig::csma_channels);
        t["sequence_length"] = number_field(&TrialConfig::sequence_length);
        t["tsch_length"] = number_field(&TrialConfig::tsch_length);
        t["universe"] = number_field(&TrialConfig::universe);
        t["radios"] = number_field(&TrialConfig::radios);
        t["tx_radius"] = number_field(&TrialConfig::tx_radius);
        t["interference_radius"]
            = number_field(&TrialConfig::interference_radius);
        t["duration_s"] = number_field(&TrialConfig::duration_s);
        t["arrival_s"] = number_field(&TrialConfig::arrival_s);
        t["seed"] = number_field(&TrialConfig::seed);
        t["queue_capacity"] = number_field(&TrialConfig::queue_capacity);
        t["max_retries"] = number_field(&TrialConfig::max_retries);
        t["retry_budget"] = number_field(&TrialConfig::retry_budget);
        t["ancestor_depth"] = number_field(&TrialConfig::ancestor_depth);
        t["theta1"] = number_field(&TrialConfig::theta1);
        t["theta2"] = number_field(&TrialConfig::theta2);
        t["adapt_window"] = number_field(&TrialConfig::adapt_window);
        t["adapt_cadence"] = number_field(&TrialConfig::adapt_cadence);
        t["csma_cw_min"] = number_field(&TrialConfig::csma_cw_min);
        t["csma_cw_max"] = number_field(&TrialConfig::csma_cw_max);
        t["reroute_backoff"] = number_field(&TrialConfig::reroute_backoff);
        // x:y;x:y
        t["positions"] = {
            [](TrialConfig& c, std::string const& k, std::string const& v) {
                c.positions.clear();
                for (auto const& item : split(v, ';'))
                {
                    if (item.empty())
                        continue;
                    auto xy = split(item, ':');
                    if (xy.size() != 2)
                        throw ConfigError("key '" + k
                                          + "': expected x:y, got '" + item
                                          + "'");
                    c.positions.push_back(
                        {parse_double(k, xy[0]), parse_double(k, xy[1])});
                }
            },
            [](TrialConfig const& c) {
                std::string out;
                for (auto const& p : c.positions)
                {
                    if (!out.empty())
                        out += ';';
                    out += format_double(p.x) + ':' + format_double(p.y);
                }
                return out;
            }};
        // src-dst;src-dst
        t["flow_pairs"] = {
            [](TrialConfig& c, std::string const& k, std::string const& v) {
                c.flow_pairs.clear();
                for (auto const& item : split(v, ';'))
                {
                    if (item.empty())
                        continue;
                    auto sd = split(item, '-');
                    if (sd.size() != 2)
                        throw ConfigError("key '" + k
                                          + "': expected src-dst, got '"
                                          + item + "'");
                    c.flow_pairs.emplace_back(parse_integer<int>(k, sd[0]),
                                              parse_integer<int>(k, sd[1]));
                }
            },
            [](TrialConfig const& c) {
                std::string out;
                for (auto [s, d] : c.flow_pairs)
                {
                    if (!out.empty())
                        out += ';';
                    out += std::to_string(s) + '-' + std::to_string(d);
                }
                return out;
            }};
        return t;
    }();
    return table;
}
}  // namespace detail

//! Set one field from its textual form; unknown keys are rejected.
inline void apply_setting(TrialConfig& c,
                          std::string const& key,
                          std::string const& value)
{
    auto const& t = detail::fields();
    auto it = t.find(key);
    if (it == t.end())
        throw ConfigError("unknown config key '" + key + "'");
    it->second.set(c, key, value);
}

inline std::vector<std::string> config_keys()
{
    std::vector<std::string> out;
    for (auto const& [k, f] : detail::fields())
        out.push_back(k);
    return out;
}

//! Parse key = value lines ('#' starts a comment) over the defaults.
inline TrialConfig parse_config(std::istream& is, TrialConfig base = {})
{
    std::string line;
    int lineno = 0;
    while (std::getline(is, line))
    {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos)
            line.erase(h);
        line = detail::trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno)
                              + ": expected key = value");
        auto key = detail::trim(line.substr(0, eq));
        auto value = detail::trim(line.substr(eq + 1));
        try
        {
            apply_setting(base, key, value);
        }
        catch (ConfigError const& e)
        {
            throw ConfigError("line " + std::to_string(lineno) + ": "
                              + e.what());
        }
    }
    return base;
}

inline TrialConfig parse_config_file(std::string const& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

//! Every key in sorted order; parse_config of the output round-trips.
inline void write_config(std::ostream& os, TrialConfig const& c)
{
    for (auto const& [k, f] : detail::fields())
        os << k << " = " << f.get(c) << '\n';
}

//---------------------------------------------------------------------------//
inline void TrialConfig::validate() const
{
    auto require = [](bool ok, char const* what) {
        if (!ok)
            throw ConfigError(what);
    };
    require(positions.empty() ? nodes >= 2 : positions.size() >= 2,
            "need at least two nodes");
    require(positions.empty() ? density > 0 : true, "density must be positive");
    require(flow_pairs.empty() ? flows >= 0 : true,
            "flow count must be non-negative");
    require(saturated || flow_bits > 0, "flow size must be positive");
    require(mobility >= 0, "mobility speed must be non-negative");
    require(tx_radius > 0 && interference_radius >= tx_radius,
            "radii must satisfy interference >= transmission > 0");
    require(slot_s > 0 && csma_slot_s > 0, "slot lengths must be positive");
    require(packet_bytes > 0, "packet size must be positive");
    require(channel_rate_bps > 0 && csma_rate_bps > 0
                && csma_jammed_rate_bps > 0
                && csma_jammed_rate_bps <= csma_rate_bps,
            "channel rates must be positive (jammed <= clean)");
    require(duration_s > 0, "duration must be positive");
    require(arrival_s >= 0 && arrival_s < duration_s,
            "flow arrival must fall inside the trial");
    require(radios >= 1, "each node needs at least one radio");
    require(universe >= 1 && universe <= max_universe_size,
            "channel universe size out of range");
    require(queue_capacity >= 1, "queue capacity must be positive");
    require(max_retries >= 0 && retry_budget >= 0,
            "retry limits must be non-negative");
    require(jammer_radius > 0, "jammer radius must be positive");
    require(jammer_channels >= 1 && jammer_channels <= universe,
            "jammer channel count out of range");
    require(jammer_window >= 1 && jammer_cadence >= 0,
            "jammer window must be positive and cadence non-negative");
    require(csma_channels >= 1 && csma_channels <= radios,
            "CSMA channel count must lie in [1, C]");
    require(csma_cw_min >= 1 && csma_cw_max >= csma_cw_min,
            "CSMA contention window bounds invalid");
    require(reroute_backoff >= 1, "reroute backoff must be positive");
    require(!(theta1 <= 0 || theta1 >= 1 || theta2 <= 0 || theta2 >= 1),
            "thresholds must lie in (0, 1)");
    require(adapt_window >= 1 && adapt_cadence >= 1,
            "adaptation window and cadence must be positive");
    require(arrival_slot() < total_slots(), "no slots after flow arrival");
    for (auto [s, d] : flow_pairs)
    {
        require(s >= 0 && d >= 0 && s < node_count() && d < node_count(),
                "flow endpoint out of range");
        require(s != d, "flow endpoints must differ");
    }

    // The bound is a property of the deployment, so it is enforced for
    // every protocol; TSCH additionally checks its own global length.
    check_sequence_length(sequence_length, delta(), radios, universe);
    if (protocol == Protocol::tsch)
        check_sequence_length(tsch_length, delta(), radios, universe);
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
