//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/sim/metrics.hpp
//! Per-trial metrics and their CSV form.
//---------------------------------------------------------------------------//
#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "../common.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
struct FlowMetrics
{
    int src{-1};
    int dst{-1};
    std::int64_t generated{0};
    std::int64_t delivered{0};
    std::int64_t dropped{0};
    std::int64_t in_flight{0};
    std::int64_t completion_slot{-1};
    int hops{0};  //!< of the last installed route
    int setup_failures{0};
    double latency_slots{0};  //!< summed over delivered packets
};

//! Counts of traffic toward receivers inside the jammer disk.
struct JamBin
{
    std::int64_t on_jammed{0};
    std::int64_t total{0};
};

struct MetricsReport
{
    std::string protocol;
    int size{0};
    double density{0};
    int flows{0};
    double mobility{0};
    bool jammed{false};
    std::uint64_t seed{0};

    double goodput_mbps{0};
    double latency_s{0};  //!< zero when nothing was delivered
    double prr{0};
    std::int64_t ctrl_msgs{0};
    std::int64_t ctrl_bytes{0};
    int setup_failures{0};

    std::int64_t generated{0};
    std::int64_t delivered{0};
    std::int64_t dropped{0};
    std::int64_t in_flight{0};
    double window_s{0};  //!< goodput denominator
    std::vector<std::int64_t> channel_histogram;
    std::vector<FlowMetrics> per_flow;

    ChannelSet jammed_channels;
    std::int64_t jammer_select_slot{-1};
    //! One bin per adaptation cadence starting at jammer selection
    std::vector<JamBin> jam_bins;
    std::int64_t adaptation_events{0};
};

inline char const* metrics_csv_header()
{
    return "protocol,size,density,flows,mobility,jammed,seed,goodput_mbps,"
           "latency_s,prr,ctrl_msgs,ctrl_bytes,setup_failures";
}

namespace detail
{
inline std::string fmt6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}
}  // namespace detail

inline void write_metrics_row(std::ostream& os, MetricsReport const& r)
{
    os << r.protocol << ',' << r.size << ',' << detail::fmt6(r.density) << ','
       << r.flows << ',' << detail::fmt6(r.mobility) << ','
       << (r.jammed ? 1 : 0) << ',' << r.seed << ','
       << detail::fmt6(r.goodput_mbps) << ',' << detail::fmt6(r.latency_s)
       << ',' << detail::fmt6(r.prr) << ',' << r.ctrl_msgs << ','
       << r.ctrl_bytes << ',' << r.setup_failures << '\n';
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
