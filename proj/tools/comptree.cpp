// comptree: fit, inspect and stress compositional sum-product tree models.
//
// Exit codes: 0 ok, 2 argument errors, 3 data errors, 4 enumeration guard.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "comptree/csv.hpp"
#include "comptree/solver.hpp"
#include "comptree/synth.hpp"
#include "comptree/theory.hpp"
#include "comptree/tree.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitArgs = 2;
constexpr int kExitData = 3;
constexpr int kExitGuard = 4;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw comptree::DataError("cannot write " + path);
    f << content;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw comptree::DataError("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

struct FitOptions {
    std::string data, target = "y", basis = "standard", out = "model.txt", trace;
    int q = 30;
    int iters = 10;
    std::uint64_t seed = 0;
    bool no_early_stop = false;
    bool rescale = false;
    int jobs = 0;
};

int run_fit(const FitOptions& opt) {
    if (opt.q < 1) throw std::invalid_argument("--q must be >= 1");
    if (opt.iters < 0) throw std::invalid_argument("--iters must be >= 0");
    comptree::CsvDataset csv =
        comptree::load_csv_dataset(opt.data, opt.target, /*require_target=*/true, opt.rescale);
    const auto basis = std::make_shared<const comptree::BasisSet>(
        comptree::parse_basis_spec(opt.basis, opt.q, {0.0, 1.0}));

    comptree::FitConfig cfg;
    cfg.iters = opt.iters;
    cfg.early_stop = !opt.no_early_stop;
    cfg.seed = opt.seed;
    cfg.jobs = opt.jobs;

    comptree::FitResult res;
    try {
        res = comptree::fit(csv.data, basis, cfg);
    } catch (const std::invalid_argument& e) {
        // out-of-domain covariates are a data problem, not a flag problem
        if (std::string(e.what()).find("outside the basis domain") != std::string::npos)
            throw comptree::DataError(std::string(e.what()) +
                                      " (use --rescale to map columns into [0,1])");
        throw;
    }
    res.model.rescale = csv.rescale;

    write_file(opt.out, comptree::serialize(res.model) + "\n");
    if (!opt.trace.empty()) {
        std::string t = "iter,leaf_path,op,phi,dim,w,rss\n";
        for (const comptree::TraceRow& row : res.trace)
            t += std::to_string(row.iter) + "," + row.leaf_path + "," + row.op + "," +
                 std::to_string(row.phi) + "," + std::to_string(row.dim) + "," +
                 comptree::detail::fmt17(row.w) + "," + comptree::detail::fmt17(row.rss) + "\n";
        write_file(opt.trace, t);
    }

    std::printf("model            %s\n", opt.out.c_str());
    std::printf("nodes            %d\n", res.model.root ? comptree::node_count(*res.model.root) : 0);
    std::printf("train_rss        %.17g\n", res.rss);
    std::printf("train_clipped    %.17g\n",
                comptree::risk(res.model, csv.data, comptree::RiskKind::Clipped));
    return kExitOk;
}

struct PredictOptions {
    std::string model, data, out = "predictions.csv", target = "y";
};

int run_predict(const PredictOptions& opt) {
    comptree::Model m = comptree::deserialize(read_file(opt.model));
    if (!m.basis)
        throw comptree::DataError(opt.model + ": model file has no :basis metadata; "
                                              "cannot evaluate");
    comptree::CsvDataset csv =
        comptree::load_csv_dataset(opt.data, opt.target, /*require_target=*/false,
                                   /*rescale_columns=*/false);
    comptree::apply_rescale(m, csv.data);

    std::vector<double> preds;
    try {
        preds = comptree::predict(m, csv.data);
    } catch (const std::domain_error& e) {
        throw comptree::DataError(std::string(e.what()) + " (data outside the model domain)");
    } catch (const std::invalid_argument& e) {
        throw comptree::DataError(e.what());  // width mismatch is a data problem here
    }
    std::string out = "prediction\n";
    for (const double v : preds) out += comptree::detail::fmt17(v) + "\n";
    write_file(opt.out, out);

    std::printf("predictions      %s\n", opt.out.c_str());
    if (csv.has_target) {
        double rss = 0.0;
        for (int r = 0; r < csv.data.n; ++r) {
            const double e = csv.data.y[static_cast<std::size_t>(r)] -
                             preds[static_cast<std::size_t>(r)];
            rss += e * e;
        }
        std::printf("rss              %.17g\n", rss);
        std::printf("clipped_risk     %.17g\n",
                    comptree::risk(m, csv.data, comptree::RiskKind::Clipped));
    }
    return kExitOk;
}

struct BoundsOptions {
    comptree::BoundInputs in;
    bool csv = false;
};

int run_bounds(const BoundsOptions& opt) {
    const double gap = comptree::generalization_gap(opt.in);
    const std::int64_t suff = comptree::sufficient_n(opt.in);
    std::string nec = "n/a (requires p >= k+1)";
    double nec_val = std::numeric_limits<double>::quiet_NaN();
    if (opt.in.p >= opt.in.k + 1) {
        nec_val = comptree::necessary_n(opt.in);
        nec = fmt(nec_val);
    }
    if (opt.csv) {
        std::printf("n,k,p,q,delta,eps,sigma,gap,sufficient_n,necessary_n\n");
        std::printf("%lld,%lld,%lld,%lld,%s,%s,%s,%.12g,%lld,%.12g\n",
                    static_cast<long long>(opt.in.n), static_cast<long long>(opt.in.k),
                    static_cast<long long>(opt.in.p), static_cast<long long>(opt.in.q),
                    fmt(opt.in.delta).c_str(), fmt(opt.in.epsilon).c_str(),
                    fmt(opt.in.sigma_eps).c_str(), gap, static_cast<long long>(suff), nec_val);
        return kExitOk;
    }
    std::printf("n                %lld\n", static_cast<long long>(opt.in.n));
    std::printf("k                %lld\n", static_cast<long long>(opt.in.k));
    std::printf("p                %lld\n", static_cast<long long>(opt.in.p));
    std::printf("q                %lld\n", static_cast<long long>(opt.in.q));
    std::printf("delta            %s\n", fmt(opt.in.delta).c_str());
    std::printf("eps              %s\n", fmt(opt.in.epsilon).c_str());
    std::printf("sigma            %s\n", fmt(opt.in.sigma_eps).c_str());
    std::printf("gap              %.12g\n", gap);
    std::printf("sufficient_n     %lld\n", static_cast<long long>(suff));
    std::printf("necessary_n      %s\n", nec.c_str());
    return kExitOk;
}

struct EnumerateOptions {
    int k = 1, p = 2, q = 2;
    bool exact = false;
    bool verify = false;
};

int run_enumerate(const EnumerateOptions& opt) {
    const std::uint64_t count = comptree::count_trees(opt.k, opt.p, opt.q, opt.exact);
    const double bound = comptree::tree_count_bound(opt.k, opt.p, opt.q);
    std::printf("k                %d\n", opt.k);
    std::printf("p                %d\n", opt.p);
    std::printf("q                %d\n", opt.q);
    std::printf("%s %llu\n", opt.exact ? "count (=2k+1)    " : "count (<=2k+1)   ",
                static_cast<unsigned long long>(count));
    std::printf("size_bound       %.12g\n", bound);
    if (opt.verify) {
        const auto trees = opt.exact ? comptree::enumerate_trees_exact(opt.k, opt.p, opt.q)
                                     : comptree::enumerate_trees(opt.k, opt.p, opt.q);
        const std::uint64_t mf = comptree::max_mf(opt.k);
        const double mf_bound = std::pow(1.45, opt.k + 1);
        std::printf("enumerated       %zu\n", trees.size());
        std::printf("max_mf           %llu\n", static_cast<unsigned long long>(mf));
        std::printf("mf_bound         %.12g  (1.45^(k+1))\n", mf_bound);
        const bool ok = trees.size() == count && static_cast<double>(count) <= bound &&
                        (opt.k == 0 || static_cast<double>(mf) < mf_bound);
        std::printf("verify           %s\n", ok ? "OK" : "FAILED");
        if (!ok) return 1;
    }
    return kExitOk;
}

struct ExperimentOptions {
    int id = 1;
    int trials = 20;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    double scale = 1.0;
    int jobs = 0;
};

int run_experiment_cmd(const ExperimentOptions& opt) {
    comptree::ExperimentConfig cfg;
    cfg.trials = opt.trials;
    cfg.seed = opt.seed;
    cfg.scale = opt.scale;
    cfg.jobs = opt.jobs;
    const auto results = comptree::run_experiment(opt.id, cfg);
    comptree::emit_results(results, opt.out_dir);
    std::printf("experiment       %d\n", opt.id);
    for (const comptree::ExperimentResult& r : results)
        std::printf("%s=%-12g mean=%.6g ci95=%.6g\n", r.sweep_variable.c_str(), r.sweep_value,
                    r.mean, r.ci95_half_width);
    std::printf("wrote            %s\n",
                (std::filesystem::path(opt.out_dir) / "results.csv").string().c_str());
    std::printf("wrote            %s\n",
                (std::filesystem::path(opt.out_dir) / "results.svg").string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compositional sum-product tree regression"};
    app.require_subcommand(1);

    FitOptions fit_opt;
    CLI::App* fit = app.add_subcommand("fit", "fit a model to a CSV dataset");
    fit->add_option("--data", fit_opt.data, "training CSV")->required();
    fit->add_option("--target", fit_opt.target, "target column name (default y)");
    fit->add_option("--basis", fit_opt.basis,
                    "basis spec: standard | fourier:8,poly:3,knots:9,bspline:10");
    fit->add_option("--q", fit_opt.q, "basis truncation (default 30)");
    fit->add_option("--iters", fit_opt.iters, "greedy insertions after init (default 10)");
    fit->add_option("--seed", fit_opt.seed, "run seed")->envname("COMPTREE_SEED");
    fit->add_option("--out", fit_opt.out, "model output path");
    fit->add_option("--trace", fit_opt.trace, "per-iteration trace CSV path");
    fit->add_flag("--no-early-stop", fit_opt.no_early_stop, "always run all iterations");
    fit->add_flag("--rescale", fit_opt.rescale, "min-max map each covariate to [0,1]");
    fit->add_option("--jobs", fit_opt.jobs, "worker threads (0 = hardware)");

    PredictOptions pred_opt;
    CLI::App* predict = app.add_subcommand("predict", "evaluate a model over a CSV");
    predict->add_option("--model", pred_opt.model, "model file")->required();
    predict->add_option("--data", pred_opt.data, "input CSV")->required();
    predict->add_option("--out", pred_opt.out, "predictions CSV path");
    predict->add_option("--target", pred_opt.target, "target column name (default y)");

    BoundsOptions bounds_opt;
    CLI::App* bounds = app.add_subcommand("bounds", "evaluate the sample-complexity bounds");
    bounds->add_option("--n", bounds_opt.in.n, "sample count")->required();
    bounds->add_option("--k", bounds_opt.in.k, "operation count")->required();
    bounds->add_option("--p", bounds_opt.in.p, "covariate dimension")->required();
    bounds->add_option("--q", bounds_opt.in.q, "basis count")->required();
    bounds->add_option("--delta", bounds_opt.in.delta, "confidence level (default 0.05)");
    bounds->add_option("--eps", bounds_opt.in.epsilon, "excess risk target (default 0.1)");
    bounds->add_option("--sigma", bounds_opt.in.sigma_eps, "noise sd (default 1)");
    bounds->add_flag("--csv", bounds_opt.csv, "emit a CSV row instead of aligned text");

    EnumerateOptions enum_opt;
    CLI::App* enumerate = app.add_subcommand("enumerate", "count/enumerate labeled trees");
    enumerate->add_option("--k", enum_opt.k, "operation count")->required();
    enumerate->add_option("--p", enum_opt.p, "covariate dimension")->required();
    enumerate->add_option("--q", enum_opt.q, "basis count")->required();
    enumerate->add_flag("--exact", enum_opt.exact, "exactly 2k+1 nodes instead of <=");
    enumerate->add_flag("--verify", enum_opt.verify,
                        "enumerate, check counts against the size bound, report max M_f");

    ExperimentOptions exp_opt;
    CLI::App* experiment = app.add_subcommand("experiment", "run a synthetic experiment");
    experiment->add_option("--id", exp_opt.id, "experiment id 1..4")->required();
    experiment->add_option("--trials", exp_opt.trials, "trials per sweep point (default 20)");
    experiment->add_option("--seed", exp_opt.seed, "base seed")->envname("COMPTREE_SEED");
    experiment->add_option("--out-dir", exp_opt.out_dir, "output directory (default .)");
    experiment->add_option("--scale", exp_opt.scale, "shrink the published grid (default 1)");
    experiment->add_option("--jobs", exp_opt.jobs, "worker threads (0 = hardware)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitArgs;
    }

    try {
        if (fit->parsed()) return run_fit(fit_opt);
        if (predict->parsed()) return run_predict(pred_opt);
        if (bounds->parsed()) return run_bounds(bounds_opt);
        if (enumerate->parsed()) return run_enumerate(enum_opt);
        if (experiment->parsed()) return run_experiment_cmd(exp_opt);
    } catch (const comptree::GuardError& e) {
        std::fprintf(stderr, "comptree: %s\n", e.what());
        return kExitGuard;
    } catch (const comptree::ParseError& e) {
        std::fprintf(stderr, "comptree: %s\n", e.what());
        return kExitData;
    } catch (const comptree::DataError& e) {
        std::fprintf(stderr, "comptree: %s\n", e.what());
        return kExitData;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "comptree: %s\n", e.what());
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "comptree: %s\n", e.what());
        return kExitArgs;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "comptree: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}
