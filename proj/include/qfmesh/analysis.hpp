//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file qfmesh/analysis.hpp
//! Collision probabilities of the random, global-offset and per-flow
//! sequence schedulers in one interference region, with Monte Carlo
//! oracles and the per-flow dominance check.
//---------------------------------------------------------------------------//
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "hop_sequences.hpp"

namespace qfmesh
{
//---------------------------------------------------------------------------//
// CLOSED FORMS
//---------------------------------------------------------------------------//
//! Every radio hops independently over U channels.
inline double p_random(int U, int M)
{
    if (U < 1 || M < 1)
        throw ConfigError("p_random needs U >= 1 and M >= 1");
    return 1 - std::pow(static_cast<double>(U - 1) / U, M - 1);
}

//! One shared sequence of length L; flows own K consecutive offsets.
inline double p_global(int L, int K, int F)
{
    if (K < 1 || F < 1)
        throw ConfigError("p_global needs K >= 1 and F >= 1");
    if (K > L)
    {
        throw InfeasibleConfig("global scheduler needs K <= L: K = "
                               + std::to_string(K)
                               + " > L = " + std::to_string(L));
    }
    return 1 - std::pow(static_cast<double>(L - K) / L, F - 1);
}

//! Each flow draws its own sequence; hops are right shifts of it.
inline double p_perflow(int U, int K, int F)
{
    if (K < 1 || F < 1 || U < K)
        throw ConfigError("p_perflow needs U >= K >= 1 and F >= 1");
    return 1 - std::pow(static_cast<double>(U - K) / U, F - 1);
}

//---------------------------------------------------------------------------//
// MONTE CARLO
//---------------------------------------------------------------------------//
enum class Scheduler
{
    random,
    global,
    perflow,
};

inline char const* to_string(Scheduler s)
{
    switch (s)
    {
        case Scheduler::random: return "random";
        case Scheduler::global: return "global";
        case Scheduler::perflow: return "perflow";
    }
    return "?";
}

inline Scheduler parse_scheduler(std::string_view s)
{
    if (s == "random")
        return Scheduler::random;
    if (s == "global")
        return Scheduler::global;
    if (s == "perflow")
        return Scheduler::perflow;
    throw ConfigError("unknown scheduler: " + std::string{s});
}

//! One interference region: M radios in F flows of K = M/F radios.
struct RegionParams
{
    int U{7};
    int M{4};
    int F{1};
    int L{4};

    int K() const { return M / F; }

    void validate(Scheduler s) const
    {
        if (U < 1 || U > max_universe_size)
            throw ConfigError("U must lie in [1, 64]");
        if (M < 1 || F < 1 || M < F)
            throw ConfigError("need M >= F >= 1");
        if (M % F != 0)
            throw ConfigError("F must divide M");
        if (s == Scheduler::random)
            return;
        if (L < 1 || L > U)
            throw ConfigError("need 1 <= L <= U");
        if (K() > L)
        {
            throw InfeasibleConfig("need K <= L: K = " + std::to_string(K())
                                   + " > L = " + std::to_string(L));
        }
    }
};

inline double analytic_probability(Scheduler s, RegionParams const& p)
{
    switch (s)
    {
        case Scheduler::random: return p_random(p.U, p.M);
        case Scheduler::global: return p_global(p.L, p.K(), p.F);
        case Scheduler::perflow: return p_perflow(p.U, p.K(), p.F);
    }
    return 0;
}

struct McEstimate
{
    double p{0};
    double sigma{0};  //!< standard error from batch means
    std::int64_t radio_slots{0};
};

/*!
 * Empirical per-radio per-slot collision rate of M always-on radios.
 *
 * Sequences (and offsets) are redrawn every \c redraw_every slots so the
 * estimate averages over the scheduler's randomness. The standard error
 * comes from 100 batch means of per-slot averages, which accounts for the
 * correlation between radios within a slot.
 */
inline McEstimate monte_carlo_collision(Scheduler s,
                                        RegionParams const& p,
                                        std::int64_t slots,
                                        Rng& rng,
                                        std::int64_t redraw_every = 1)
{
    p.validate(s);
    if (slots < 1)
        throw ConfigError("Monte Carlo needs at least one slot");
    if (redraw_every < 1)
        throw ConfigError("redraw interval must be positive");

    auto const M = static_cast<std::size_t>(p.M);
    auto const K = p.K();
    std::vector<ChannelSequence> seqs(M);
    std::vector<int> phase(M, 0);
    auto redraw = [&] {
        switch (s)
        {
            case Scheduler::random:
                for (auto& q : seqs)
                    q = gen_random_sequence(p.U, std::clamp(p.L, 1, p.U), rng);
                break;
            case Scheduler::global: {
                auto g = gen_random_sequence(p.U, p.L, rng);
                for (int f = 0; f < p.F; ++f)
                {
                    int offset = uniform_int(rng, 0, p.L - 1);
                    for (int k = 0; k < K; ++k)
                    {
                        auto r = static_cast<std::size_t>(f * K + k);
                        seqs[r] = g;
                        phase[r] = offset + k;
                    }
                }
                break;
            }
            case Scheduler::perflow:
                for (int f = 0; f < p.F; ++f)
                {
                    auto base = gen_random_sequence(p.U, p.L, rng);
                    for (int k = 0; k < K; ++k)
                    {
                        auto r = static_cast<std::size_t>(f * K + k);
                        seqs[r] = right_shift(base, k);
                        phase[r] = 0;
                    }
                }
                break;
        }
    };

    constexpr std::int64_t batches = 100;
    std::int64_t batch_len = std::max<std::int64_t>(1, slots / batches);
    std::vector<double> batch_sum;
    double batch_acc = 0;
    std::int64_t in_batch = 0;
    double total = 0;

    std::array<int, max_universe_size> count{};
    std::vector<Channel> ch(M);
    for (std::int64_t t = 0; t < slots; ++t)
    {
        if (t % redraw_every == 0)
            redraw();
        count.fill(0);
        for (std::size_t r = 0; r < M; ++r)
        {
            ch[r] = seqs[r].at_slot(t + phase[r]);
            ++count[static_cast<std::size_t>(ch[r])];
        }
        int hit = 0;
        for (std::size_t r = 0; r < M; ++r)
            hit += count[static_cast<std::size_t>(ch[r])] > 1 ? 1 : 0;
        double x = static_cast<double>(hit) / p.M;
        total += x;
        batch_acc += x;
        if (++in_batch == batch_len)
        {
            batch_sum.push_back(batch_acc / static_cast<double>(batch_len));
            batch_acc = 0;
            in_batch = 0;
        }
    }

    McEstimate e;
    e.p = total / static_cast<double>(slots);
    e.radio_slots = slots * p.M;
    if (batch_sum.size() > 1)
    {
        double var = 0;
        for (auto b : batch_sum)
            var += (b - e.p) * (b - e.p);
        var /= static_cast<double>(batch_sum.size() - 1);
        e.sigma = std::sqrt(var / static_cast<double>(batch_sum.size()));
    }
    return e;
}

//---------------------------------------------------------------------------//
// REPORTS
//---------------------------------------------------------------------------//
//! One CSV row; \c p_empirical is absent for analytic-only rows.
struct ProbabilityRow
{
    Scheduler scheduler{Scheduler::random};
    RegionParams params;
    double p_analytic{0};
    std::optional<double> p_empirical;
    double ci_halfwidth{0};
    bool violation{false};
    std::string relation;  //!< lemma rows only: "equal" or "strict"
};

inline constexpr char const* probability_csv_header
    = "scheduler,U,M,F,K,L,p_analytic,p_empirical,ci_halfwidth,"
      "violation_flag";

inline void write_probability_row(std::ostream& os,
                                  ProbabilityRow const& r,
                                  bool with_relation = false)
{
    auto const& q = r.params;
    char buf[64];
    os << to_string(r.scheduler) << ',' << q.U << ',' << q.M << ',' << q.F
       << ',' << q.K() << ',' << q.L << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.p_analytic);
    os << buf << ',';
    if (r.p_empirical)
    {
        std::snprintf(buf, sizeof buf, "%.6f", *r.p_empirical);
        os << buf;
    }
    os << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.ci_halfwidth);
    os << buf << ',' << (r.violation ? 1 : 0);
    if (with_relation)
        os << ',' << r.relation;
    os << '\n';
}

//! Analytic value plus a Monte Carlo estimate checked at 3 sigma.
inline ProbabilityRow probability_row(Scheduler s,
                                      RegionParams const& p,
                                      std::int64_t slots,
                                      Rng& rng)
{
    ProbabilityRow row;
    row.scheduler = s;
    row.params = p;
    row.p_analytic = analytic_probability(s, p);
    auto e = monte_carlo_collision(s, p, slots, rng);
    row.p_empirical = e.p;
    row.ci_halfwidth = 3 * e.sigma;
    row.violation = std::abs(e.p - row.p_analytic) > row.ci_halfwidth + 1e-12;
    return row;
}

struct Lemma1Report
{
    std::vector<ProbabilityRow> rows;
    int points{0};
    int violations{0};
    int equalities{0};  //!< grid points where perflow equals random
    int mc_checks{0};
    int mc_failures{0};
};

/*!
 * Check per-flow dominance over a grid of U in [umin, umax], every
 * F | M with U >= M >= F > 1, and every feasible L in [K, U].
 *
 * Each grid point contributes a perflow row whose violation flag marks
 * p_perflow exceeding either competitor; equality with the random scheduler
 * is reported as "equal". Monte Carlo confirmation runs at each of
 * \c mc_points, which need not lie on the grid.
 */
inline Lemma1Report verify_lemma1(int umin,
                                  int umax,
                                  std::vector<RegionParams> const& mc_points,
                                  std::int64_t mc_slots,
                                  Rng& rng)
{
    if (umin < 2 || umax < umin || umax > max_universe_size)
        throw ConfigError("lemma grid needs 2 <= umin <= umax <= 64");
    constexpr double tol = 1e-12;
    Lemma1Report rep;
    for (int U = umin; U <= umax; ++U)
    {
        for (int M = 2; M <= U; ++M)
        {
            for (int F = 2; F <= M; ++F)
            {
                if (M % F)
                    continue;
                int K = M / F;
                for (int L = K; L <= U; ++L)
                {
                    RegionParams q{U, M, F, L};
                    double pf = p_perflow(U, K, F);
                    double pg = p_global(L, K, F);
                    double pr = p_random(U, M);
                    ProbabilityRow row;
                    row.scheduler = Scheduler::perflow;
                    row.params = q;
                    row.p_analytic = pf;
                    row.violation = pf > pg + tol || pf > pr + tol;
                    row.relation
                        = std::abs(pf - pr) <= tol ? "equal" : "strict";
                    ++rep.points;
                    rep.violations += row.violation ? 1 : 0;
                    rep.equalities += row.relation == "equal" ? 1 : 0;
                    rep.rows.push_back(std::move(row));
                }
            }
        }
    }
    for (auto const& q : mc_points)
    {
        for (auto s : {Scheduler::random, Scheduler::global, Scheduler::perflow})
        {
            auto row = probability_row(s, q, mc_slots, rng);
            row.relation = "mc";
            ++rep.mc_checks;
            rep.mc_failures += row.violation ? 1 : 0;
            rep.rows.push_back(std::move(row));
        }
    }
    return rep;
}

//---------------------------------------------------------------------------//
}  // namespace qfmesh
