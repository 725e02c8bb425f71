//---------------------------------------------------------------------------//
// Copyright qfmesh contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file tools/qfmesh.cpp
//! Experiment runner: trial sweeps and the analytic collision reports.
//---------------------------------------------------------------------------//
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "qfmesh/analysis.hpp"
#include "qfmesh/sweep.hpp"

namespace fs = std::filesystem;
using namespace qfmesh;

namespace
{
std::optional<std::uint64_t> env_seed()
{
    char const* v = std::getenv("QFMESH_SEED");
    if (!v || !*v)
        return std::nullopt;
    return detail::parse_integer<std::uint64_t>("QFMESH_SEED", v);
}

void write_file(fs::path const& p, std::string const& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    out << text;
}

//---------------------------------------------------------------------------//
struct RunArgs
{
    std::string config;
    std::string sweep;
    std::string out;
    unsigned workers{0};
    bool traces{false};
};

int run(RunArgs const& a)
{
    auto base = parse_config_file(a.config);
    std::vector<SweepCell> cells;
    if (a.sweep.empty())
    {
        // A bare config is one trial at its own seed
        if (auto s = env_seed())
            base.seed = *s;
        base.validate();
        cells.push_back({base, "base", 0, 0});
    }
    else
    {
        std::ifstream in(a.sweep);
        if (!in)
            throw ConfigError("cannot open sweep file '" + a.sweep + "'");
        auto sweep = parse_sweep(in);
        auto seed = env_seed().value_or(sweep.seed.value_or(base.seed));
        cells = expand_sweep(sweep, base, seed);
    }

    fs::path out{a.out};
    fs::create_directories(out);
    if (a.traces)
        fs::create_directories(out / "traces");

    unsigned workers = a.workers ? a.workers
                                 : std::max(1u, std::thread::hardware_concurrency());
    std::size_t finished = 0;
    std::cerr << "running " << cells.size() << " trial(s) on " << workers
              << " worker(s)\n";
    auto result = run_cells(
        cells, workers, a.traces,
        [&](std::size_t, SweepCell const& c, std::string const& err) {
            ++finished;
            std::cerr << '[' << finished << '/' << cells.size() << "] "
                      << c.label << " trial=" << c.trial
                      << " seed=" << c.config.seed << ' '
                      << (err.empty() ? "ok" : "error: " + err) << '\n';
        });

    std::ostringstream metrics, aggregate;
    write_metrics_csv(metrics, result);
    write_aggregate_csv(aggregate, result);
    write_file(out / "metrics.csv", metrics.str());
    write_file(out / "aggregate.csv", aggregate.str());
    if (a.traces)
    {
        for (std::size_t i = 0; i < cells.size(); ++i)
        {
            if (!result.results[i])
                continue;
            auto const& t = result.results[i]->traces;
            auto stem = trace_stem(cells[i]);
            write_file(out / "traces" / (stem + "_control.csv"), t.control);
            write_file(out / "traces" / (stem + "_adaptation.csv"),
                       t.adaptation);
            write_file(out / "traces" / (stem + "_occupancy.csv"), t.occupancy);
        }
    }
    return result.ok() ? 0 : 1;
}

//---------------------------------------------------------------------------//
struct ProbArgs
{
    std::string scheduler{"all"};
    RegionParams params;
    std::int64_t slots{100000};
    std::uint64_t seed{1};
    std::string out;
};

std::ostream& sink(std::string const& path, std::ofstream& file)
{
    if (path.empty())
        return std::cout;
    file.open(path, std::ios::binary);
    if (!file)
        throw std::runtime_error("cannot write " + path);
    return file;
}

int probabilities(ProbArgs const& a)
{
    std::vector<Scheduler> which;
    if (a.scheduler == "all")
        which = {Scheduler::random, Scheduler::global, Scheduler::perflow};
    else
        which = {parse_scheduler(a.scheduler)};
    for (auto s : which)
        a.params.validate(s);

    Rng rng{stream_seed(env_seed().value_or(a.seed), 11)};
    std::ofstream file;
    auto& os = sink(a.out, file);
    os << probability_csv_header << '\n';
    for (auto s : which)
        write_probability_row(os, probability_row(s, a.params, a.slots, rng));
    return 0;
}

struct LemmaArgs
{
    int umin{2};
    int umax{12};
    std::int64_t slots{100000};
    std::uint64_t seed{1};
    std::string out;
};

int lemma1(LemmaArgs const& a)
{
    // Spot checks spanning the three proof regimes
    std::vector<RegionParams> points{
        {7, 4, 4, 4}, {8, 8, 2, 4}, {7, 6, 3, 3}, {10, 6, 2, 5}, {12, 12, 4, 6}};
    Rng rng{stream_seed(env_seed().value_or(a.seed), 12)};
    auto rep = verify_lemma1(a.umin, a.umax, points, a.slots, rng);

    std::ofstream file;
    auto& os = sink(a.out, file);
    os << probability_csv_header << ",relation\n";
    for (auto const& r : rep.rows)
        write_probability_row(os, r, true);
    std::cerr << "lemma1: " << rep.points << " grid points, " << rep.violations
              << " violation(s), " << rep.equalities << " equality point(s); "
              << rep.mc_checks << " Monte Carlo check(s), " << rep.mc_failures
              << " outside 3 sigma\n";
    return rep.violations == 0 && rep.mc_failures == 0 ? 0 : 1;
}
}  // namespace

//---------------------------------------------------------------------------//
int main(int argc, char** argv)
{
    CLI::App app{"Multi-channel multi-radio mesh MAC simulator"};
    app.require_subcommand(1);

    RunArgs ra;
    auto* run_cmd = app.add_subcommand("run", "Run a trial or a sweep grid");
    run_cmd->add_option("--config", ra.config, "Trial config (key = value)")
        ->required()
        ->check(CLI::ExistingFile);
    run_cmd->add_option("--sweep", ra.sweep, "Sweep grid file")
        ->check(CLI::ExistingFile);
    run_cmd->add_option("--out", ra.out, "Output directory")->required();
    run_cmd->add_option("--workers", ra.workers,
                        "Parallel trials (default: hardware threads)")
        ->check(CLI::PositiveNumber);
    run_cmd->add_flag("--traces", ra.traces,
                      "Write control, adaptation and occupancy traces");

    auto* an = app.add_subcommand("analyze", "Closed-form collision analysis");
    an->require_subcommand(1);

    ProbArgs pa;
    auto* prob = an->add_subcommand("probabilities",
                                    "Analytic and Monte Carlo collision rates");
    prob->add_option("--scheduler", pa.scheduler, "random, global, perflow or all")
        ->capture_default_str();
    prob->add_option("--u", pa.params.U, "Channel count")->capture_default_str();
    prob->add_option("--m", pa.params.M, "Radios in the region")
        ->capture_default_str();
    prob->add_option("--f", pa.params.F, "Flows")->capture_default_str();
    prob->add_option("--l", pa.params.L, "Sequence length")
        ->capture_default_str();
    prob->add_option("--slots", pa.slots, "Monte Carlo slots")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    prob->add_option("--seed", pa.seed)->capture_default_str();
    prob->add_option("--out", pa.out, "CSV path (default: stdout)");

    LemmaArgs la;
    auto* lem = an->add_subcommand("lemma1", "Per-flow dominance grid");
    lem->add_option("--umin", la.umin)->capture_default_str();
    lem->add_option("--umax", la.umax)->capture_default_str();
    lem->add_option("--slots", la.slots, "Monte Carlo slots per spot check")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    lem->add_option("--seed", la.seed)->capture_default_str();
    lem->add_option("--out", la.out, "CSV path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (run_cmd->parsed())
            return run(ra);
        if (prob->parsed())
            return probabilities(pa);
        return lemma1(la);
    }
    catch (ConfigError const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
