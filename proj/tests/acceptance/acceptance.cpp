//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file tests/acceptance/acceptance.cpp
//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//---------------------------------------------------------------------------//
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qfmesh/analysis.hpp"
#include "qfmesh/sweep.hpp"

using namespace qfmesh;

namespace
{
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, bool ok, std::string const& summary)
{
    std::printf("CRITERION %d: %s - %s\n", id, ok ? "PASS" : "FAIL",
                summary.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
}

void note(std::string const& s)
{
    std::printf("  %s\n", s.c_str());
}

std::string fmt(char const* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

//---------------------------------------------------------------------------//
// 1. Monte Carlo against the closed forms
//---------------------------------------------------------------------------//
void oracle_equivalence()
{
    auto t0 = Clock::now();
    int checks = 0, out_sigma = 0, out_abs = 0;
    double worst_z = 0;
    std::string worst;
    for (int U : {4, 7, 10})
    {
        for (int M = 1; M <= U; ++M)
        {
            for (int F = 1; F <= M; ++F)
            {
                if (M % F)
                    continue;
                for (int L = 3; L <= U; ++L)
                {
                    RegionParams p{U, M, F, L};
                    if (p.K() > L)
                        continue;
                    for (auto s : {Scheduler::random, Scheduler::global,
                                   Scheduler::perflow})
                    {
                        Rng rng{stream_seed(
                            fnv1a(std::string{to_string(s)} + ':'
                                  + std::to_string(U) + ':' + std::to_string(M)
                                  + ':' + std::to_string(F) + ':'
                                  + std::to_string(L)),
                            1)};
                        std::int64_t slots = (100000 + M - 1) / M;
                        auto e = monte_carlo_collision(s, p, slots, rng);
                        double a = analytic_probability(s, p);
                        double d = std::abs(e.p - a);
                        ++checks;
                        bool sig_ok = d <= 3 * e.sigma + 1e-12;
                        out_sigma += sig_ok ? 0 : 1;
                        out_abs += d <= 0.01 ? 0 : 1;
                        double z = e.sigma > 0 ? d / e.sigma : (d > 0 ? 1e9 : 0);
                        if (z > worst_z)
                        {
                            worst_z = z;
                            std::ostringstream os;
                            os << to_string(s) << " U=" << U << " M=" << M
                               << " F=" << F << " L=" << L << " analytic=" << a
                               << " empirical=" << e.p;
                            worst = os.str();
                        }
                    }
                }
            }
        }
    }
    double t = seconds_since(t0);
    note("largest deviation " + fmt("%.2f", worst_z) + " sigma: " + worst);
    std::ostringstream os;
    os << checks << " estimates, " << out_sigma << " outside 3 sigma, "
       << out_abs << " outside +-0.01; " << fmt("%.1f", t) << " s";
    verdict(1, out_sigma == 0 && out_abs == 0 && t < 120, os.str());
}

//---------------------------------------------------------------------------//
// 2. Per-flow dominance
//---------------------------------------------------------------------------//
void lemma1()
{
    auto t0 = Clock::now();
    Rng rng{stream_seed(2, 12)};
    std::vector<RegionParams> points{
        {7, 4, 4, 4}, {8, 8, 2, 4}, {7, 6, 3, 3}, {10, 6, 2, 5}, {12, 12, 4, 6}};
    auto rep = verify_lemma1(2, 12, points, 100000, rng);
    int misplaced_equal = 0;
    for (auto const& r : rep.rows)
    {
        if (r.relation == "mc")
            continue;
        bool m_eq_f = r.params.M == r.params.F;
        misplaced_equal += m_eq_f != (r.relation == "equal") ? 1 : 0;
    }
    double t = seconds_since(t0);
    std::ostringstream os;
    os << rep.points << " grid points, " << rep.violations << " violations, "
       << rep.equalities << " equalities (" << misplaced_equal
       << " not at M=F), Monte Carlo " << rep.mc_checks - rep.mc_failures << '/'
       << rep.mc_checks << " within 3 sigma; " << fmt("%.1f", t) << " s";
    verdict(2,
            rep.violations == 0 && misplaced_equal == 0 && rep.mc_failures == 0
                && t < 60,
            os.str());
}

//---------------------------------------------------------------------------//
// 3. Installed QF-MAC schedules are conflict-free
//---------------------------------------------------------------------------//
void conflict_freedom()
{
    auto t0 = Clock::now();
    int const topologies = 200;
    std::int64_t node_checks = 0, node_bad = 0, link_checks = 0, link_bad = 0,
                 window_checks = 0, window_bad = 0;
    std::set<std::pair<int, int>> accepted;  // (seed, flow)
    for (int seed = 1; seed <= topologies; ++seed)
    {
        TrialConfig c;
        c.seed = static_cast<std::uint64_t>(seed);
        c.duration_s = 30;
        Simulator sim{c};
        int window = 2 * c.delta();
        int depth = c.effective_ancestor_depth();
        while (!sim.done())
        {
            sim.step();
            for (auto const& n : sim.schedules())
            {
                bool active = false;
                for (auto const& r : n.radios())
                    active = active || r.rx || r.tx;
                if (!active)
                    continue;
                ++node_checks;
                node_bad += node_conflicts(n).empty() ? 0 : 1;
            }
            for (auto const& f : sim.flows())
            {
                if (!f.routed())
                    continue;
                // Settled: every hop's Tx installed and matched downstream,
                std::vector<ChannelSequence const*> tx;
                bool settled = true;
                for (std::size_t k = 0; k + 1 < f.radios.size(); ++k)
                {
                    auto const& node = sim.schedules()[static_cast<std::size_t>(
                        sim.topology().node_of(f.radios[k]).get())];
                    auto const& nxt = sim.schedules()[static_cast<std::size_t>(
                        sim.topology().node_of(f.radios[k + 1]).get())];
                    auto const& a = node.radio(f.radios[k]);
                    auto const& b = nxt.radio(f.radios[k + 1]);
                    if (!a.tx || !b.rx || *a.tx != *b.rx)
                    {
                        settled = false;
                        break;
                    }
                    tx.push_back(&*a.tx);
                }
                // ... and every hop has seen its current upstream window
                for (std::size_t k = 2; settled && k < tx.size(); ++k)
                {
                    auto const& me = sim.schedules()[static_cast<std::size_t>(
                                         sim.topology().node_of(f.radios[k]).get())]
                                         .radio(f.radios[k]);
                    std::vector<ChannelSequence> want;
                    for (std::size_t d = 2; d <= k && static_cast<int>(d - 1) <= depth;
                         ++d)
                        want.push_back(*tx[k - d]);
                    settled = me.ancestors == want;
                }
                if (!settled)
                    continue;
                accepted.insert({seed, f.id.get()});
                for (std::size_t i = 0; i < tx.size(); ++i)
                {
                    for (std::size_t j = i + 1;
                         j < tx.size() && static_cast<int>(j - i) <= window;
                         ++j)
                    {
                        bool ok = conflict_free(*tx[i], *tx[j]);
                        if (j == i + 1)
                        {
                            ++link_checks;
                            link_bad += ok ? 0 : 1;
                        }
                        else
                        {
                            ++window_checks;
                            window_bad += ok ? 0 : 1;
                        }
                    }
                }
            }
        }
    }
    double t = seconds_since(t0);
    std::ostringstream info;
    info << "intra-flow window (up to " << 2 << " hops apart): "
         << window_checks << " checks, " << window_bad << " violations";
    note(info.str());
    std::ostringstream os;
    os << topologies << " topologies, " << accepted.size()
       << " accepted flows; node-local " << node_bad << '/' << node_checks
       << " violations, consecutive links " << link_bad << '/' << link_checks
       << " violations; " << fmt("%.1f", t) << " s";
    verdict(3,
            node_bad == 0 && link_bad == 0 && window_bad == 0
                && accepted.size() >= 200 && t < 120,
            os.str());
}

//---------------------------------------------------------------------------//
// 4. Eight saturated links in one region
//---------------------------------------------------------------------------//
struct RecurringProbe
{
    int frame{1};
    std::int64_t start{0};
    // Pairs seen in each slotframe, keyed by frame index
    std::map<std::int64_t, std::set<std::pair<int, int>>> frames;

    void operator()(std::int64_t slot, std::vector<TxResult> const& rs)
    {
        if (slot < start)
            return;
        auto& set = frames[(slot - start) / frame];
        for (std::size_t i = 0; i < rs.size(); ++i)
        {
            for (auto k : rs[i].interferers)
            {
                int a = rs[i].flow.get(), b = rs[k].flow.get();
                set.insert({std::min(a, b), std::max(a, b)});
            }
        }
    }

    //! Pairs colliding in every slotframe of [first, last).
    std::set<std::pair<int, int>> recurring(std::int64_t first,
                                            std::int64_t last) const
    {
        std::set<std::pair<int, int>> out;
        bool init = false;
        for (auto f = first; f < last; ++f)
        {
            auto it = frames.find(f);
            std::set<std::pair<int, int>> here;
            if (it != frames.end())
                here = it->second;
            if (!init)
            {
                out = here;
                init = true;
                continue;
            }
            std::set<std::pair<int, int>> keep;
            for (auto const& p : out)
            {
                if (here.count(p))
                    keep.insert(p);
            }
            out = std::move(keep);
        }
        return out;
    }
};

TrialConfig saturated_region(Protocol p, std::uint64_t seed)
{
    TrialConfig c;
    c.protocol = p;
    c.universe = 10;
    c.tsch_length = 7;
    c.sequence_length = 4;
    c.saturated = true;
    c.seed = seed;
    c.arrival_s = 0.5;
    c.duration_s = 0.5 + 1 + 50 * c.adapt_cadence * c.slot_s + 1;
    for (int k = 0; k < 8; ++k)
    {
        c.positions.push_back({100.0 * k, 0});
        c.positions.push_back({100.0 * k, 150});
        c.flow_pairs.push_back({2 * k, 2 * k + 1});
    }
    return c;
}

void tsch_saturation()
{
    auto t0 = Clock::now();
    int const seeds = 5;
    int tsch_ok = 0, qf_ok = 0;
    std::vector<std::string> rounds;
    for (int s = 1; s <= seeds; ++s)
    {
        // TSCH: frames of L = 7 slots once all links run
        auto c = saturated_region(Protocol::tsch, static_cast<std::uint64_t>(s));
        RecurringProbe tp;
        tp.frame = c.tsch_length;
        tp.start = c.arrival_slot() + 20;
        RunOptions o;
        o.on_slot = std::ref(tp);
        auto r = run_trial(c, o).report;
        std::int64_t frames = (c.total_slots() - tp.start) / tp.frame;
        auto rec = tp.recurring(0, frames);
        double worst_prr = 1;
        for (auto const& f : r.per_flow)
        {
            if (f.generated > 0)
                worst_prr = std::min(
                    worst_prr, static_cast<double>(f.delivered)
                                   / static_cast<double>(f.generated));
        }
        tsch_ok += rec.empty() ? 0 : 1;

        // QF-MAC-A: one adaptation round = cadence slots
        auto q = saturated_region(Protocol::qfmac_a, static_cast<std::uint64_t>(s));
        RecurringProbe qp;
        qp.frame = q.sequence_length;
        qp.start = q.arrival_slot() + 1;
        o.on_slot = std::ref(qp);
        run_trial(q, o);
        int per_round = q.adapt_cadence / q.sequence_length;
        int reached = -1;
        for (int round = 0; round < 50; ++round)
        {
            auto rr = qp.recurring(round * per_round, (round + 1) * per_round);
            if (rr.empty())
            {
                reached = round + 1;
                break;
            }
        }
        qf_ok += reached > 0 ? 1 : 0;
        std::ostringstream os;
        os << "seed " << s << ": TSCH " << rec.size()
           << " recurring pair(s) over " << frames
           << " slotframes, min link PRR " << fmt("%.3f", worst_prr)
           << "; QF-MAC-A zero recurring pairs "
           << (reached > 0 ? "from round " + std::to_string(reached)
                           : std::string{"not reached"});
        note(os.str());
    }
    std::ostringstream os;
    os << "TSCH recurring collisions in " << tsch_ok << '/' << seeds
       << " instances; QF-MAC-A cleared them in " << qf_ok << '/' << seeds
       << " within 50 rounds; " << fmt("%.1f", seconds_since(t0)) << " s";
    verdict(4, tsch_ok == seeds && qf_ok == seeds, os.str());
}

//---------------------------------------------------------------------------//
// 5 and 6. Desk-scale protocol comparison
//---------------------------------------------------------------------------//
struct Means
{
    double goodput{0}, latency{0}, prr{0};
};

std::map<std::string, Means> clean, jammed;

Means desk_means(Protocol p, bool jam, int seeds)
{
    Means m;
    for (int s = 1; s <= seeds; ++s)
    {
        TrialConfig c;
        c.protocol = p;
        c.jammer = jam;
        c.seed = static_cast<std::uint64_t>(s);
        auto r = run_trial(c).report;
        m.goodput += r.goodput_mbps / seeds;
        m.latency += r.latency_s / seeds;
        m.prr += r.prr / seeds;
    }
    return m;
}

void trend_reproduction()
{
    auto t0 = Clock::now();
    for (auto p : {Protocol::qfmac_a, Protocol::qfmac, Protocol::csma,
                   Protocol::tsch, Protocol::random})
    {
        clean[to_string(p)] = desk_means(p, false, 4);
        jammed[to_string(p)] = desk_means(p, true, 4);
    }
    for (auto const& [name, m] : clean)
    {
        auto const& j = jammed[name];
        std::ostringstream os;
        os << name << ": goodput " << fmt("%.3f", m.goodput) << " Mbps, latency "
           << fmt("%.3f", m.latency) << " s, PRR " << fmt("%.3f", m.prr)
           << " | jammed: " << fmt("%.3f", j.goodput) << " Mbps, "
           << fmt("%.3f", j.latency) << " s, PRR " << fmt("%.3f", j.prr);
        note(os.str());
    }
    auto const& qa = clean["qfmac-a"];
    auto const& qf = clean["qfmac"];
    auto const& cs = clean["csma"];
    auto const& ts = clean["tsch"];
    bool goodput_order = qa.goodput >= qf.goodput && qf.goodput > cs.goodput
                         && cs.goodput > ts.goodput && ts.goodput < 1.0;
    bool latency_order = qa.latency <= qf.latency && qf.latency < cs.latency
                         && qf.latency < ts.latency;
    std::ostringstream os;
    os << "goodput order QF-MAC-A >= QF-MAC > CSMA > TSCH, TSCH < 1 Mbps: "
       << (goodput_order ? "holds" : "violated")
       << "; latency order QF-MAC-A <= QF-MAC < CSMA, TSCH: "
       << (latency_order ? "holds" : "violated");
    if (!latency_order && qa.latency <= qf.latency && qf.latency < cs.latency)
        os << " (only QF-MAC < TSCH fails)";
    os << "; " << fmt("%.1f", seconds_since(t0)) << " s";
    verdict(5, goodput_order && latency_order, os.str());
}

void jamming_adaptation()
{
    auto t0 = Clock::now();
    auto drop = [](std::string const& p) {
        return 1 - jammed[p].goodput / clean[p].goodput;
    };
    double qa_drop = drop("qfmac-a"), cs_drop = drop("csma");
    bool drop_ok = cs_drop - qa_drop >= 0.10;

    // Share of traffic toward in-disk receivers on jammed channels, pooled
    // over seeds, in the 50th adaptation round under saturated load
    JamBin round50, round1;
    for (int s = 1; s <= 4; ++s)
    {
        TrialConfig c;
        c.protocol = Protocol::qfmac_a;
        c.jammer = true;
        c.saturated = true;
        c.seed = static_cast<std::uint64_t>(s);
        auto r = run_trial(c).report;
        if (r.jam_bins.size() > 49)
        {
            round50.on_jammed += r.jam_bins[49].on_jammed;
            round50.total += r.jam_bins[49].total;
        }
        if (!r.jam_bins.empty())
        {
            round1.on_jammed += r.jam_bins[0].on_jammed;
            round1.total += r.jam_bins[0].total;
        }
    }
    auto share = [](JamBin const& b) {
        return b.total ? static_cast<double>(b.on_jammed)
                             / static_cast<double>(b.total)
                       : 1.0;
    };
    bool share_ok = round50.total > 0 && share(round50) < 0.05;
    double lat = jammed["qfmac-a"].latency;
    bool lat_ok = lat < 1.0;

    note("jammed-channel share: round 1 " + fmt("%.3f", share(round1))
         + " (" + std::to_string(round1.total) + " tx), round 50 "
         + fmt("%.3f", share(round50)) + " (" + std::to_string(round50.total)
         + " tx)");
    std::ostringstream os;
    os << "goodput drop QF-MAC-A " << fmt("%.1f", 100 * qa_drop) << "% vs CSMA "
       << fmt("%.1f", 100 * cs_drop) << "% (margin "
       << fmt("%.1f", 100 * (cs_drop - qa_drop)) << " pp, need 10): "
       << (drop_ok ? "ok" : "no") << "; jammed share after 50 rounds "
       << fmt("%.2f", 100 * share(round50)) << "%: " << (share_ok ? "ok" : "no")
       << "; QF-MAC-A jammed latency " << fmt("%.3f", lat)
       << " s: " << (lat_ok ? "ok" : "no") << "; "
       << fmt("%.1f", seconds_since(t0)) << " s";
    verdict(6, drop_ok && share_ok && lat_ok, os.str());
}

//---------------------------------------------------------------------------//
// 7. Determinism
//---------------------------------------------------------------------------//
void determinism()
{
    auto t0 = Clock::now();
    int runs = 0, mismatches = 0;
    auto row = [](MetricsReport const& r) {
        std::ostringstream os;
        write_metrics_row(os, r);
        return os.str();
    };
    for (auto p : {Protocol::qfmac, Protocol::qfmac_a, Protocol::tsch,
                   Protocol::random, Protocol::csma})
    {
        for (bool dynamic : {false, true})
        {
            TrialConfig c;
            c.protocol = p;
            c.duration_s = 20;
            c.jammer = dynamic;
            c.mobility = dynamic ? 10 : 0;
            c.seed = 11;
            RunOptions o;
            o.traces = true;
            auto a = run_trial(c, o);
            auto b = run_trial(c, o);
            ++runs;
            bool same = row(a.report) == row(b.report)
                        && a.traces.control == b.traces.control
                        && a.traces.adaptation == b.traces.adaptation
                        && a.traces.occupancy == b.traces.occupancy;
            mismatches += same ? 0 : 1;
        }
    }

    // Parallel sweep against a serial one
    Sweep sw;
    sw.axes = {{"protocol", {"qfmac-a", "csma"}}, {"flows", {"3", "7"}}};
    sw.trials = 2;
    TrialConfig base;
    base.duration_s = 15;
    auto cells = expand_sweep(sw, base, 5);
    auto serial = run_cells(cells, 1, true);
    auto parallel = run_cells(cells, 4, true);
    std::ostringstream a, b;
    write_metrics_csv(a, serial);
    write_metrics_csv(b, parallel);
    bool sweep_same = a.str() == b.str();
    for (std::size_t i = 0; i < cells.size(); ++i)
    {
        sweep_same = sweep_same && serial.results[i] && parallel.results[i]
                     && serial.results[i]->traces.occupancy
                            == parallel.results[i]->traces.occupancy;
    }
    std::ostringstream os;
    os << runs << " re-run pairs, " << mismatches
       << " differing; serial vs 4-worker sweep of " << cells.size()
       << " runs " << (sweep_same ? "identical" : "differs") << "; "
       << fmt("%.1f", seconds_since(t0)) << " s";
    verdict(7, mismatches == 0 && sweep_same, os.str());
}

//---------------------------------------------------------------------------//
// 8. Sequence-length bound
//---------------------------------------------------------------------------//
void length_bound()
{
    int rejected_ok = 0, cases = 0;
    auto expect_reject = [&](TrialConfig c, std::string const& bound) {
        ++cases;
        try
        {
            run_trial(c);
            note("not rejected: expected '" + bound + "'");
        }
        catch (InfeasibleConfig const& e)
        {
            if (std::string{e.what()}.find(bound) != std::string::npos)
                ++rejected_ok;
            else
                note(std::string{"wrong diagnostic: "} + e.what());
        }
    };
    TrialConfig c;
    c.sequence_length = 3;  // below C = 4
    expect_reject(c, "L >= max(2*delta+1, C)");
    c = {};
    c.sequence_length = 8;  // above |U| = 7
    expect_reject(c, "|U| >= L");
    c = {};
    c.interference_radius = 2000;  // delta = 2 needs L >= 5
    expect_reject(c, "L >= max(2*delta+1, C)");
    c = {};
    c.protocol = Protocol::tsch;
    c.tsch_length = 8;
    expect_reject(c, "|U| >= L");

    // Boundary: L = max(2*delta+1, C) = |U|
    int ran = 0, boundary = 0;
    std::ostringstream info;
    auto run_boundary = [&](TrialConfig b, std::string const& label) {
        ++boundary;
        try
        {
            auto r = run_trial(b).report;
            ++ran;
            info << label << " delivered " << r.delivered << "; ";
        }
        catch (std::exception const& e)
        {
            info << label << " threw: " << e.what() << "; ";
        }
    };
    for (auto p : {Protocol::qfmac, Protocol::qfmac_a, Protocol::tsch})
    {
        TrialConfig b;
        b.protocol = p;
        b.duration_s = 20;
        b.universe = 4;
        b.sequence_length = 4;
        b.tsch_length = 4;
        run_boundary(b, std::string{to_string(p)} + " L=C=|U|=4");
    }
    {
        TrialConfig b;
        b.duration_s = 20;
        b.interference_radius = 2000;
        b.universe = 5;
        b.sequence_length = 5;
        run_boundary(b, "qfmac delta=2 L=|U|=5");
    }
    note(info.str());
    std::ostringstream os;
    os << rejected_ok << '/' << cases
       << " violating configs rejected naming the bound; " << ran << '/'
       << boundary << " boundary configs ran";
    verdict(8, rejected_ok == cases && ran == boundary, os.str());
}
}  // namespace

//---------------------------------------------------------------------------//
int main()
{
    auto t0 = Clock::now();
    oracle_equivalence();
    lemma1();
    conflict_freedom();
    tsch_saturation();
    trend_reproduction();
    jamming_adaptation();
    determinism();
    length_bound();
    std::printf("%d of 8 criteria failed; total %.1f s\n", failures,
                seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
