#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "comptree/rng.hpp"
#include "comptree/solver.hpp"

namespace comptree {

// Ground truth of the synthetic experiments:
//   g(x) = 0.3 sin(3 pi x1) cos(2 pi x2) + 0.4 x3^2 - 0.3 x4.
inline double g_star(std::span<const double> x) {
    if (x.size() < 4) throw std::invalid_argument("g_star needs at least 4 covariates");
    return 0.3 * std::sin(3.0 * std::numbers::pi * x[0]) *
               std::cos(2.0 * std::numbers::pi * x[1]) +
           0.4 * x[2] * x[2] - 0.3 * x[3];
}

struct SynthSpec {
    int p = 4;
    int n_train = 0;
    int n_test = 0;  // 0 means the default ceil(n_train/3)
    double sigma = 0.05;
    std::uint64_t seed = 0;
};

namespace detail {

inline Dataset draw_dataset(Rng& rng, int n, int p, double sigma) {
    Dataset d;
    d.n = n;
    d.p = p;
    d.X.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(p));
    d.y.resize(static_cast<std::size_t>(n));
    // Row by row: p uniforms, then the response with one normal noise draw.
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < p; ++c)
            d.X[static_cast<std::size_t>(r) * p + c] = rng.uniform01();
        const double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
        d.y[static_cast<std::size_t>(r)] = g_star(d.row(r)) + noise;
    }
    return d;
}

}  // namespace detail

// Draws (train, test) with X ~ Uniform[0,1]^p and y = g*(x) + N(0, sigma^2),
// sequentially from one splitmix64 stream so runs are reproducible per seed.
inline std::pair<Dataset, Dataset> generate(const SynthSpec& spec) {
    if (spec.p < 4) throw std::invalid_argument("generate: p must be >= 4 (g* uses x4)");
    if (spec.n_train < 1) throw std::invalid_argument("generate: n_train must be >= 1");
    const int n_test =
        spec.n_test > 0 ? spec.n_test : static_cast<int>((spec.n_train + 2) / 3);
    Rng rng(spec.seed);
    Dataset train = detail::draw_dataset(rng, spec.n_train, spec.p, spec.sigma);
    Dataset test = detail::draw_dataset(rng, n_test, spec.p, spec.sigma);
    return {std::move(train), std::move(test)};
}

struct ExperimentResult {
    int experiment = 0;
    std::string sweep_variable;
    double sweep_value = 0.0;
    std::vector<double> trial_errors;
    double mean = 0.0;
    double ci95_half_width = 0.0;  // 1.96 * sd / sqrt(trials)
};

struct ExperimentConfig {
    int trials = 20;
    std::uint64_t seed = 0;
    double scale = 1.0;  // shrinks the published grid proportionally
    int jobs = 0;
};

struct ExperimentGrid {
    std::string sweep_var;
    std::vector<long long> sweep;
    long long n = 0, p = 0, q = 0, k = 0;  // fixed values; the swept one is ignored
};

namespace detail {

inline long long scale_value(long long v, double scale, long long floor_at) {
    return std::max(floor_at, static_cast<long long>(std::llround(v * scale)));
}

}  // namespace detail

// The published sweep grids, optionally shrunk by `scale` (values are rounded
// and floored so the runs stay well-posed; duplicates after rounding are
// dropped).
inline ExperimentGrid experiment_grid(int id, double scale = 1.0) {
    if (scale <= 0.0) throw std::invalid_argument("experiment scale must be > 0");
    ExperimentGrid g;
    switch (id) {
        case 1:
            g = {"n", {50, 100, 150, 200, 250}, 0, 100, 40, 10};
            break;
        case 2:
            g = {"p", {10, 20, 50, 100, 200}, 250, 0, 40, 10};
            break;
        case 3:
            g = {"k", {1, 5, 10, 20}, 250, 100, 40, 0};
            break;
        case 4:
            g = {"q", {10, 20, 50, 100}, 250, 20, 0, 10};
            break;
        default:
            throw std::invalid_argument("experiment id must be 1..4");
    }
    g.n = detail::scale_value(g.n, scale, 10);
    g.p = detail::scale_value(g.p, scale, 4);
    g.q = detail::scale_value(g.q, scale, 1);
    g.k = detail::scale_value(g.k, scale, 1);
    const long long sweep_floor = g.sweep_var == "n" ? 10 : (g.sweep_var == "p" ? 4 : 1);
    std::vector<long long> sweep;
    for (const long long v : g.sweep) {
        const long long s = detail::scale_value(v, scale, sweep_floor);
        if (sweep.empty() || sweep.back() != s) sweep.push_back(s);
    }
    g.sweep = std::move(sweep);
    return g;
}

// Runs one published experiment: for each sweep value, `trials` independent
// draws are fitted and the clipped test risk recorded. Per-trial seeds are
// seed*10^6 + trial. A trial that throws is recorded as NaN and excluded
// from the aggregates.
inline std::vector<ExperimentResult> run_experiment(int id, const ExperimentConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("trials must be >= 1");
    const ExperimentGrid grid = experiment_grid(id, cfg.scale);
    std::vector<ExperimentResult> results;
    for (const long long v : grid.sweep) {
        const long long n = grid.sweep_var == "n" ? v : grid.n;
        const long long p = grid.sweep_var == "p" ? v : grid.p;
        const long long q = grid.sweep_var == "q" ? v : grid.q;
        const long long k = grid.sweep_var == "k" ? v : grid.k;

        ExperimentResult res;
        res.experiment = id;
        res.sweep_variable = grid.sweep_var;
        res.sweep_value = static_cast<double>(v);

        const auto basis = std::make_shared<const BasisSet>(
            standard_catalog(static_cast<int>(q), {0.0, 1.0}));
        for (int trial = 0; trial < cfg.trials; ++trial) {
            const std::uint64_t trial_seed = cfg.seed * 1000000ULL + static_cast<std::uint64_t>(trial);
            double err = std::numeric_limits<double>::quiet_NaN();
            try {
                SynthSpec spec;
                spec.p = static_cast<int>(p);
                spec.n_train = static_cast<int>(n);
                spec.sigma = 0.05;
                spec.seed = trial_seed;
                const auto [train, test] = generate(spec);
                FitConfig fit_cfg;
                fit_cfg.iters = static_cast<int>(k);
                fit_cfg.seed = trial_seed;
                fit_cfg.jobs = cfg.jobs;
                const FitResult fr = fit(train, basis, fit_cfg);
                err = risk(fr.model, test, RiskKind::Clipped);
            } catch (const std::exception&) {
                // failed trial; the sweep continues
            }
            res.trial_errors.push_back(err);
        }

        double sum = 0.0;
        int valid = 0;
        for (const double e : res.trial_errors)
            if (!std::isnan(e)) {
                sum += e;
                ++valid;
            }
        res.mean = valid > 0 ? sum / valid : std::numeric_limits<double>::quiet_NaN();
        if (valid > 1) {
            double ss = 0.0;
            for (const double e : res.trial_errors)
                if (!std::isnan(e)) ss += (e - res.mean) * (e - res.mean);
            const double sd = std::sqrt(ss / (valid - 1));
            res.ci95_half_width = 1.96 * sd / std::sqrt(static_cast<double>(valid));
        }
        results.push_back(std::move(res));
    }
    return results;
}

// ---------------------------------------------------------------------------
// Result emission: results.csv plus a standalone SVG line chart with error
// bars. Both are pure functions of the results, so re-emission is
// byte-identical.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_value(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_svg(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace detail

inline std::string results_csv(std::span<const ExperimentResult> results) {
    std::string out = "experiment,sweep_var,sweep_value,trial,error,mean,ci95\n";
    for (const ExperimentResult& r : results)
        for (std::size_t t = 0; t < r.trial_errors.size(); ++t) {
            out += std::to_string(r.experiment) + "," + r.sweep_variable + "," +
                   detail::fmt_value(r.sweep_value) + "," + std::to_string(t) + "," +
                   detail::fmt_value(r.trial_errors[t]) + "," + detail::fmt_value(r.mean) + "," +
                   detail::fmt_value(r.ci95_half_width) + "\n";
        }
    return out;
}

// 800x600 chart, one series per experiment id, error bars at +-ci95.
inline std::string results_svg(std::span<const ExperimentResult> results) {
    const double width = 800.0, height = 600.0;
    const double ml = 80.0, mr = 30.0, mt = 50.0, mb = 70.0;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymax = 0.0;
    for (const ExperimentResult& r : results) {
        xmin = std::min(xmin, r.sweep_value);
        xmax = std::max(xmax, r.sweep_value);
        if (!std::isnan(r.mean)) ymax = std::max(ymax, r.mean + r.ci95_half_width);
    }
    if (!(xmax > xmin)) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.1;

    const auto sx = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * pw; };
    const auto sy = [&](double v) { return mt + ph - v / ymax * ph; };

    static constexpr const char* palette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44"};

    std::string xlabel;
    std::vector<int> ids;
    for (const ExperimentResult& r : results) {
        if (xlabel.empty()) xlabel = r.sweep_variable;
        if (std::find(ids.begin(), ids.end(), r.experiment) == ids.end())
            ids.push_back(r.experiment);
    }

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
         "viewBox=\"0 0 800 600\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
    s += "<text x=\"400\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"18\">mean clipped risk vs " + xlabel + "</text>\n";

    // axes
    s += "<line x1=\"" + detail::fmt_svg(ml) + "\" y1=\"" + detail::fmt_svg(mt + ph) +
         "\" x2=\"" + detail::fmt_svg(ml + pw) + "\" y2=\"" + detail::fmt_svg(mt + ph) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + detail::fmt_svg(ml) + "\" y1=\"" + detail::fmt_svg(mt) + "\" x2=\"" +
         detail::fmt_svg(ml) + "\" y2=\"" + detail::fmt_svg(mt + ph) + "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 5; ++tick) {
        const double yv = ymax * tick / 5.0;
        const double ypix = sy(yv);
        s += "<line x1=\"" + detail::fmt_svg(ml - 5) + "\" y1=\"" + detail::fmt_svg(ypix) +
             "\" x2=\"" + detail::fmt_svg(ml) + "\" y2=\"" + detail::fmt_svg(ypix) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + detail::fmt_svg(ml - 10) + "\" y=\"" + detail::fmt_svg(ypix + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
             detail::fmt_svg(yv) + "</text>\n";
        const double xv = xmin + (xmax - xmin) * tick / 5.0;
        const double xpix = sx(xv);
        s += "<line x1=\"" + detail::fmt_svg(xpix) + "\" y1=\"" + detail::fmt_svg(mt + ph) +
             "\" x2=\"" + detail::fmt_svg(xpix) + "\" y2=\"" + detail::fmt_svg(mt + ph + 5) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + detail::fmt_svg(xpix) + "\" y=\"" + detail::fmt_svg(mt + ph + 20) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
             detail::fmt_svg(xv) + "</text>\n";
    }
    s += "<text x=\"" + detail::fmt_svg(ml + pw / 2) + "\" y=\"" + detail::fmt_svg(height - 20) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + xlabel +
         "</text>\n";
    s += "<text x=\"20\" y=\"" + detail::fmt_svg(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
         "transform=\"rotate(-90 20 " + detail::fmt_svg(mt + ph / 2) +
         ")\">mean clipped risk</text>\n";

    for (std::size_t s_idx = 0; s_idx < ids.size(); ++s_idx) {
        const int id = ids[s_idx];
        const char* color = palette[s_idx % 4];
        std::string points;
        for (const ExperimentResult& r : results) {
            if (r.experiment != id || std::isnan(r.mean)) continue;
            const double px = sx(r.sweep_value), py = sy(r.mean);
            points += detail::fmt_svg(px) + "," + detail::fmt_svg(py) + " ";
            const double lo = sy(std::max(0.0, r.mean - r.ci95_half_width));
            const double hi = sy(r.mean + r.ci95_half_width);
            s += "<line x1=\"" + detail::fmt_svg(px) + "\" y1=\"" + detail::fmt_svg(hi) +
                 "\" x2=\"" + detail::fmt_svg(px) + "\" y2=\"" + detail::fmt_svg(lo) +
                 "\" stroke=\"" + color + "\"/>\n";
            s += "<line x1=\"" + detail::fmt_svg(px - 4) + "\" y1=\"" + detail::fmt_svg(hi) +
                 "\" x2=\"" + detail::fmt_svg(px + 4) + "\" y2=\"" + detail::fmt_svg(hi) +
                 "\" stroke=\"" + color + "\"/>\n";
            s += "<line x1=\"" + detail::fmt_svg(px - 4) + "\" y1=\"" + detail::fmt_svg(lo) +
                 "\" x2=\"" + detail::fmt_svg(px + 4) + "\" y2=\"" + detail::fmt_svg(lo) +
                 "\" stroke=\"" + color + "\"/>\n";
            s += "<circle cx=\"" + detail::fmt_svg(px) + "\" cy=\"" + detail::fmt_svg(py) +
                 "\" r=\"3\" fill=\"" + color + "\"/>\n";
        }
        if (!points.empty()) points.pop_back();
        s += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"1.5\"/>\n";
        s += "<text x=\"" + detail::fmt_svg(ml + pw - 10) + "\" y=\"" +
             detail::fmt_svg(mt + 20 + 18 * static_cast<double>(s_idx)) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"13\" fill=\"" +
             color + "\">experiment " + std::to_string(id) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

// Writes results.csv and results.svg under `dir`.
inline void emit_results(std::span<const ExperimentResult> results,
                         const std::filesystem::path& dir) {
    if (results.empty()) throw std::invalid_argument("emit_results: no results");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    {
        std::ofstream f(dir / "results.csv", std::ios::binary);
        if (!f) throw DataError("cannot write " + (dir / "results.csv").string());
        f << results_csv(results);
    }
    {
        std::ofstream f(dir / "results.svg", std::ios::binary);
        if (!f) throw DataError("cannot write " + (dir / "results.svg").string());
        f << results_svg(results);
    }
}

}  // namespace comptree
