//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/sweep.hpp
//! Experiment grids: expansion, seeding, parallel execution and CSV output.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "sim/config.hpp"
#include "sim/simulator.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
//! Keys a sweep file may list, in expansion order (first varies slowest).
inline std::vector<std::string> const& sweep_axis_keys()
{
    static std::vector<std::string> const keys{
        "protocol", "nodes", "density", "flows", "mobility", "jammer"};
    return keys;
}

struct SweepAxis
{
    std::string key;
    std::vector<std::string> values;
};

/*!
 * A grid over the trial configuration.
 *
 * Axes absent from the file keep the base config's value. Every cell runs
 * \c trials times with seeds derived from the base seed.
 */
struct Sweep
{
    std::vector<SweepAxis> axes;
    int trials{1};
    std::optional<std::uint64_t> seed;

    std::size_t cell_count() const
    {
        std::size_t n = 1;
        for (auto const& a : axes)
            n *= a.values.size();
        return n;
    }
    std::size_t run_count() const
    {
        return cell_count() * static_cast<std::size_t>(trials);
    }
};

/*!
 * Parse "key = v1, v2, ..." lines. Besides the axis keys, \c trials and
 * \c seed take a single value.
 */
inline Sweep parse_sweep(std::istream& is)
{
    Sweep out;
    std::map<std::string, SweepAxis> found;
    std::string line;
    int lineno = 0;
    auto fail = [&](std::string const& msg) {
        throw ConfigError("sweep line " + std::to_string(lineno) + ": " + msg);
    };
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
            fail("expected key = value[, value...]");
        auto key = detail::trim(line.substr(0, eq));
        auto rhs = detail::trim(line.substr(eq + 1));
        try
        {
            if (key == "trials")
            {
                out.trials = detail::parse_integer<int>(key, rhs);
                if (out.trials < 1)
                    fail("trials must be at least 1");
                continue;
            }
            if (key == "seed")
            {
                out.seed = detail::parse_integer<std::uint64_t>(key, rhs);
                continue;
            }
            auto const& keys = sweep_axis_keys();
            if (std::find(keys.begin(), keys.end(), key) == keys.end())
            {
                fail("unknown sweep key '" + key
                     + "' (axes: protocol, nodes, density, flows, mobility, "
                       "jammer; also trials, seed)");
            }
            if (found.count(key))
                fail("axis '" + key + "' listed twice");
            SweepAxis axis{key, {}};
            if (!rhs.empty())
                axis.values = detail::split(rhs, ',');
            if (axis.values.empty())
                fail("axis '" + key + "' has no values");
            TrialConfig probe;
            for (auto const& v : axis.values)
            {
                if (v.empty())
                    fail("axis '" + key + "' has an empty value");
                apply_setting(probe, key, v);
            }
            found.emplace(key, std::move(axis));
        }
        catch (ConfigError const& e)
        {
            std::string what = e.what();
            if (what.rfind("sweep line", 0) == 0)
                throw;
            fail(what);
        }
    }
    for (auto const& k : sweep_axis_keys())
    {
        if (auto it = found.find(k); it != found.end())
            out.axes.push_back(it->second);
    }
    return out;
}

//---------------------------------------------------------------------------//
// SEEDING
//---------------------------------------------------------------------------//
//! 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s)
    {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/*!
 * Seed of one trial of one cell.
 *
 * Hashes the scenario coordinates (size, density, flows, mobility) and the
 * trial index in canonical text form, so the result depends only on them
 * and the base seed. Protocol and jammer are left out on purpose: every
 * protocol, jammed or not, sees the same topologies and flows.
 */
inline std::uint64_t
cell_seed(std::uint64_t base, TrialConfig const& cfg, int trial)
{
    std::string key = "nodes=" + std::to_string(cfg.node_count())
                      + ";density=" + detail::format_double(cfg.density)
                      + ";flows=" + std::to_string(cfg.flow_count())
                      + ";mobility=" + detail::format_double(cfg.mobility)
                      + ";trial=" + std::to_string(trial);
    return mix_seed(base ^ fnv1a(key));
}

//---------------------------------------------------------------------------//
// EXPANSION
//---------------------------------------------------------------------------//
struct SweepCell
{
    TrialConfig config;
    std::string label;  //!< "protocol=qfmac nodes=64 ..."
    std::size_t cell{0};
    int trial{0};
};

/*!
 * Every (cell, trial) of the grid over \c base, in row order.
 *
 * All cells are validated before returning; on failure the error lists
 * every offending cell.
 */
inline std::vector<SweepCell>
expand_sweep(Sweep const& sweep, TrialConfig const& base, std::uint64_t seed)
{
    std::vector<SweepCell> out;
    std::vector<std::string> errors;
    std::size_t cells = sweep.cell_count();
    for (std::size_t c = 0; c < cells; ++c)
    {
        TrialConfig cfg = base;
        std::string label;
        auto rest = c;
        // Last axis varies fastest
        std::vector<std::size_t> pick(sweep.axes.size());
        for (std::size_t a = sweep.axes.size(); a-- > 0;)
        {
            pick[a] = rest % sweep.axes[a].values.size();
            rest /= sweep.axes[a].values.size();
        }
        for (std::size_t a = 0; a < sweep.axes.size(); ++a)
        {
            auto const& axis = sweep.axes[a];
            auto const& v = axis.values[pick[a]];
            apply_setting(cfg, axis.key, v);
            if (!label.empty())
                label += ' ';
            label += axis.key + '=' + v;
        }
        if (label.empty())
            label = "base";
        try
        {
            cfg.validate();
        }
        catch (ConfigError const& e)
        {
            errors.push_back("cell [" + label + "]: " + e.what());
            continue;
        }
        for (int t = 0; t < sweep.trials; ++t)
        {
            SweepCell sc{cfg, label, c, t};
            sc.config.seed = cell_seed(seed, cfg, t);
            out.push_back(std::move(sc));
        }
    }
    if (!errors.empty())
    {
        std::string msg = std::to_string(errors.size()) + " invalid cell(s):";
        for (auto const& e : errors)
            msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return out;
}

//---------------------------------------------------------------------------//
// EXECUTION
//---------------------------------------------------------------------------//
struct SweepRun
{
    std::vector<std::optional<TrialResult>> results;  //!< empty on error
    std::vector<std::string> errors;  //!< parallel to results

    bool ok() const
    {
        return std::all_of(results.begin(), results.end(),
                           [](auto const& r) { return r.has_value(); });
    }
};

using SweepProgress = std::function<void(std::size_t index, SweepCell const&,
                                         std::string const& error)>;

/*!
 * Run every cell on \c workers threads.
 *
 * Results are stored by index, so scheduling order never changes output.
 * \c progress is called under a lock after each run.
 */
inline SweepRun run_cells(std::vector<SweepCell> const& cells,
                          unsigned workers,
                          bool traces,
                          SweepProgress const& progress = {})
{
    SweepRun out;
    out.results.resize(cells.size());
    out.errors.resize(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex report;
    auto work = [&] {
        for (auto i = next++; i < cells.size(); i = next++)
        {
            try
            {
                RunOptions o;
                o.traces = traces;
                out.results[i] = run_trial(cells[i].config, o);
            }
            catch (std::exception const& e)
            {
                out.errors[i] = e.what();
            }
            if (progress)
            {
                std::lock_guard lock{report};
                progress(i, cells[i], out.errors[i]);
            }
        }
    };
    workers = std::max(1u, std::min<unsigned>(
                               workers, static_cast<unsigned>(cells.size())));
    if (workers == 1)
    {
        work();
        return out;
    }
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back(work);
    }
    return out;
}

//---------------------------------------------------------------------------//
// OUTPUT
//---------------------------------------------------------------------------//
//! One row per completed run, in cell order.
inline void write_metrics_csv(std::ostream& os, SweepRun const& run)
{
    os << metrics_csv_header() << '\n';
    for (auto const& r : run.results)
    {
        if (r)
            write_metrics_row(os, r->report);
    }
}

inline char const* aggregate_csv_header()
{
    return "protocol,size,density,flows,mobility,jammed,trials,goodput_mbps,"
           "latency_s,prr,ctrl_msgs,ctrl_bytes,setup_failures";
}

/*!
 * Trial means per cell. When several flow counts ran, extra rows with
 * flows = "all" also average over them.
 */
inline void write_aggregate_csv(std::ostream& os, SweepRun const& run)
{
    struct Acc
    {
        int n{0};
        double goodput{0}, latency{0}, prr{0}, msgs{0}, bytes{0}, fails{0};
    };
    using Key = std::tuple<std::string, int, std::string, std::string,
                           std::string, int>;
    std::map<Key, Acc> per_cell, per_scenario;
    std::vector<Key> order, scenario_order;
    std::map<Key, std::set<int>> flow_values;

    auto add = [](Acc& a, MetricsReport const& r) {
        ++a.n;
        a.goodput += r.goodput_mbps;
        a.latency += r.latency_s;
        a.prr += r.prr;
        a.msgs += static_cast<double>(r.ctrl_msgs);
        a.bytes += static_cast<double>(r.ctrl_bytes);
        a.fails += r.setup_failures;
    };
    for (auto const& res : run.results)
    {
        if (!res)
            continue;
        auto const& r = res->report;
        Key k{r.protocol, r.size, detail::fmt6(r.density),
              std::to_string(r.flows), detail::fmt6(r.mobility), r.jammed};
        Key s = k;
        std::get<3>(s) = "all";
        if (!per_cell.count(k))
            order.push_back(k);
        if (!per_scenario.count(s))
            scenario_order.push_back(s);
        add(per_cell[k], r);
        add(per_scenario[s], r);
        flow_values[s].insert(r.flows);
    }
    auto emit = [&os](Key const& k, Acc const& a) {
        double n = a.n;
        os << std::get<0>(k) << ',' << std::get<1>(k) << ',' << std::get<2>(k)
           << ',' << std::get<3>(k) << ',' << std::get<4>(k) << ','
           << std::get<5>(k) << ',' << a.n << ',' << detail::fmt6(a.goodput / n)
           << ',' << detail::fmt6(a.latency / n) << ','
           << detail::fmt6(a.prr / n) << ',' << detail::fmt6(a.msgs / n) << ','
           << detail::fmt6(a.bytes / n) << ',' << detail::fmt6(a.fails / n)
           << '\n';
    };
    os << aggregate_csv_header() << '\n';
    for (auto const& k : order)
        emit(k, per_cell[k]);
    for (auto const& s : scenario_order)
    {
        if (flow_values[s].size() > 1)
            emit(s, per_scenario[s]);
    }
}

//! File name prefix for one run's traces.
inline std::string trace_stem(SweepCell const& c)
{
    return "cell" + std::to_string(c.cell) + "_trial"
           + std::to_string(c.trial);
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
