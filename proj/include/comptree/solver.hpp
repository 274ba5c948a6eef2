#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "comptree/tree.hpp"

namespace comptree {

struct Dataset {
    int n = 0;
    int p = 0;
    std::vector<double> X;  // row-major n*p
    std::vector<double> y;

    double x(int row, int col) const {
        return X[static_cast<std::size_t>(row) * static_cast<std::size_t>(p) +
                 static_cast<std::size_t>(col)];
    }
    std::span<const double> row(int r) const {
        return {X.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(p),
                static_cast<std::size_t>(p)};
    }
};

struct FitConfig {
    int iters = 0;             // greedy insertion rounds after the 1-leaf init
    int cd_passes_max = 10;
    double cd_rel_tol = 1e-8;
    bool early_stop = true;
    std::uint64_t seed = 0;
    int jobs = 0;              // 0 = hardware concurrency
};

// Affine context of a leaf: model output = intercept + b + k * (leaf value).
struct PathConstants {
    double b = 0.0;
    double k = 1.0;
};

// Walks from the root along `path`; at each step the sibling subtree is
// evaluated to val and folded into the context: '+' adds val*k to b, '*'
// multiplies k by val. b excludes the global intercept.
inline PathConstants path_constants(const Model& m, std::span<const Dir> path,
                                    std::span<const double> x) {
    if (!m.root) throw std::invalid_argument("path_constants: model has no tree");
    PathConstants pc;
    const TreeNode* node = m.root.get();
    for (const Dir d : path) {
        if (node->is_leaf())
            throw std::invalid_argument("path_constants: path falls off the tree");
        const TreeNode* sibling = (d == Dir::Left) ? node->right.get() : node->left.get();
        const double val = evaluate_node(*sibling, *m.basis, x);
        if (node->op == OpKind::Plus)
            pc.b += val * pc.k;
        else
            pc.k *= val;
        node = (d == Dir::Left) ? node->left.get() : node->right.get();
    }
    return pc;
}

struct InsertionSolution {
    double w0 = 0.0;
    double w = 0.0;
    double rss = 0.0;
    bool degenerate = false;  // regressor variance below the noise floor
};

namespace detail {

inline constexpr double kVarianceFloor = 1e-14;

// Least squares of t on a with a free intercept and w restricted to [-1,1].
// The 1-D objective is convex in w, so clipping the unconstrained minimizer
// is the constrained optimum; w0 is then re-solved for the clipped w.
inline InsertionSolution fit_affine_clipped(std::span<const double> t,
                                            std::span<const double> a) {
    const std::size_t n = t.size();
    double tbar = 0.0, abar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        tbar += t[i];
        abar += a[i];
    }
    tbar /= static_cast<double>(n);
    abar /= static_cast<double>(n);

    double var = 0.0, cov = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - abar;
        const double dt = t[i] - tbar;
        var += da * da;
        cov += da * dt;
        sst += dt * dt;
    }

    InsertionSolution s;
    if (var / static_cast<double>(n) < kVarianceFloor) {
        s.degenerate = true;
        s.w = 0.0;
        s.w0 = tbar;
        s.rss = sst;
        return s;
    }
    if (sst / static_cast<double>(n) < kVarianceFloor) {
        s.w = 0.0;  // constant target
        s.w0 = tbar;
        s.rss = sst;
        return s;
    }
    s.w = std::clamp(cov / var, -1.0, 1.0);
    s.w0 = tbar - s.w * abar;
    // Summed directly rather than via the sst - 2w cov + w^2 var identity:
    // near an exact fit the identity cancels to rounding noise of the sums.
    s.rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = t[i] - s.w0 - s.w * a[i];
        s.rss += r * r;
    }
    return s;
}

}  // namespace detail

// Candidate-leaf regression for both insertion flavors. The model with the
// new leaf V' at context (b,k) around leaf value c outputs
//   '+' : w0 + b + k*(c + w*phi)     ->  t = y-b-k*c,  a = k*phi
//   '*' : w0 + b + k*(c * w*phi)     ->  t = y-b,      a = k*c*phi
// and both reduce to the clipped affine fit above.
inline InsertionSolution solve_insertion(std::span<const double> y_minus_b,
                                         std::span<const double> k,
                                         std::span<const double> c,
                                         std::span<const double> phi, OpKind op) {
    const std::size_t n = y_minus_b.size();
    std::vector<double> t(n), a(n);
    if (op == OpKind::Plus) {
        for (std::size_t m = 0; m < n; ++m) {
            t[m] = y_minus_b[m] - k[m] * c[m];
            a[m] = k[m] * phi[m];
        }
    } else {
        for (std::size_t m = 0; m < n; ++m) {
            t[m] = y_minus_b[m];
            a[m] = k[m] * c[m] * phi[m];
        }
    }
    return detail::fit_affine_clipped(t, a);
}

namespace detail {

// All basis values over the dataset, contiguous per (dim, basis) column.
class PhiTable {
public:
    PhiTable(const Dataset& d, const BasisSet& basis)
        : n_(d.n), q_(basis.q()) {
        vals_.resize(static_cast<std::size_t>(d.p) * static_cast<std::size_t>(q_) *
                     static_cast<std::size_t>(n_));
        for (int j = 0; j < d.p; ++j)
            for (int i = 0; i < q_; ++i) {
                double* col = col_ptr(i, j);
                for (int m = 0; m < n_; ++m) col[m] = evaluate(basis.functions[i], d.x(m, j));
            }
    }

    // i, j are 0-based basis/dim indices.
    std::span<const double> col(int i, int j) const {
        return {col_ptr(i, j), static_cast<std::size_t>(n_)};
    }

private:
    double* col_ptr(int i, int j) const {
        return const_cast<double*>(vals_.data()) +
               (static_cast<std::size_t>(j) * q_ + static_cast<std::size_t>(i)) * n_;
    }

    int n_, q_;
    std::vector<double> vals_;
};

struct LeafRef {
    TreeNode* node = nullptr;
    std::vector<Dir> path;
};

inline void collect_leaves(TreeNode* n, std::vector<Dir>& cur, std::vector<LeafRef>& out) {
    if (n->is_leaf()) {
        out.push_back({n, cur});
        return;
    }
    cur.push_back(Dir::Left);
    collect_leaves(n->left.get(), cur, out);
    cur.back() = Dir::Right;
    collect_leaves(n->right.get(), cur, out);
    cur.pop_back();
}

inline std::vector<LeafRef> leaves_of(Model& m) {
    std::vector<LeafRef> out;
    if (!m.root) return out;
    std::vector<Dir> cur;
    collect_leaves(m.root.get(), cur, out);
    return out;
}

inline double model_rss(const Model& m, const Dataset& d) {
    double rss = 0.0;
    for (int r = 0; r < d.n; ++r) {
        const double e = d.y[static_cast<std::size_t>(r)] - evaluate(m, d.row(r));
        rss += e * e;
    }
    return rss;
}

inline int worker_count(const FitConfig& cfg) {
    if (cfg.jobs > 0) return cfg.jobs;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace detail

inline std::vector<double> predict(const Model& m, const Dataset& d) {
    if (d.p != m.p)
        throw std::invalid_argument("predict: dataset width " + std::to_string(d.p) +
                                    " != model p " + std::to_string(m.p));
    std::vector<double> out(static_cast<std::size_t>(d.n));
    for (int r = 0; r < d.n; ++r) out[static_cast<std::size_t>(r)] = evaluate(m, d.row(r));
    return out;
}

enum class RiskKind { Squared, Clipped };

// Bounded classification loss for +-1 labels. Provided as a metric only;
// fitting always minimizes the squared loss.
inline double hinge_loss_clipped(double y, double yhat) {
    return std::min(1.0, std::max(0.0, 1.0 - y * yhat));
}

// Mean loss over the dataset: (y-yhat)^2/2, optionally clipped at 1.
inline double risk(const Model& m, const Dataset& d, RiskKind kind) {
    const std::vector<double> yhat = predict(m, d);
    double total = 0.0;
    for (int r = 0; r < d.n; ++r) {
        const double e = d.y[static_cast<std::size_t>(r)] - yhat[static_cast<std::size_t>(r)];
        double loss = e * e / 2.0;
        if (kind == RiskKind::Clipped) loss = std::min(1.0, loss);
        total += loss;
    }
    return total / static_cast<double>(d.n);
}

inline double rss(const Model& m, const Dataset& d) { return detail::model_rss(m, d); }

namespace detail {

// One full coordinate-descent run: cycles over (w0, each leaf weight);
// every update is an exact 1-D minimization, so the RSS never increases.
// Returns the final RSS.
inline double coordinate_descent_inplace(Model& m, const Dataset& d, const FitConfig& cfg,
                                         const PhiTable& table) {
    const std::size_t n = static_cast<std::size_t>(d.n);
    double prev = model_rss(m, d);
    for (int pass = 0; pass < cfg.cd_passes_max; ++pass) {
        // Intercept: optimal shift is the mean residual.
        {
            double mean_res = 0.0;
            for (int r = 0; r < d.n; ++r)
                mean_res += d.y[static_cast<std::size_t>(r)] - evaluate(m, d.row(r));
            m.intercept += mean_res / static_cast<double>(d.n);
        }
        for (const LeafRef& lf : leaves_of(m)) {
            const std::span<const double> phi =
                table.col(lf.node->leaf.basis_id - 1, lf.node->leaf.dim - 1);
            double num = 0.0, den = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const PathConstants pc = path_constants(m, lf.path, d.row(static_cast<int>(r)));
                const double beta = pc.k * phi[r];
                const double target = d.y[r] - m.intercept - pc.b;
                num += beta * target;
                den += beta * beta;
            }
            if (den / static_cast<double>(n) < kVarianceFloor) continue;
            lf.node->leaf.weight = std::clamp(num / den, -1.0, 1.0);
        }
        const double cur = model_rss(m, d);
        if (prev - cur < cfg.cd_rel_tol * std::max(prev, 1e-300)) {
            prev = cur;
            break;
        }
        prev = cur;
    }
    return prev;
}

}  // namespace detail

// Weight refinement on a copy of the model; structure is untouched.
inline Model coordinate_descent(const Model& m, const Dataset& d, const FitConfig& cfg) {
    if (!m.root) throw std::invalid_argument("coordinate_descent: model has no leaves");
    Model out = m;
    const detail::PhiTable table(d, *m.basis);
    detail::coordinate_descent_inplace(out, d, cfg, table);
    return out;
}

struct TraceRow {
    int iter = 0;
    std::string leaf_path;  // L/R characters from the root; empty at the root
    std::string op;         // "init", "+", or "*"
    int phi = 0;
    int dim = 0;
    double w = 0.0;
    double rss = 0.0;
};

struct FitResult {
    Model model;
    double rss = 0.0;
    std::vector<TraceRow> trace;
};

namespace detail {

// Total order for candidate selection: lower RSS first, ties broken by the
// encoded (op, leaf, basis, dim) rank so the outcome is independent of the
// scoring schedule.
struct Scored {
    double rss = std::numeric_limits<double>::infinity();
    std::int64_t ord = std::numeric_limits<std::int64_t>::max();
    double w0 = 0.0;
    double w = 0.0;
    bool degenerate = true;

    bool better_than(const Scored& o) const {
        if (rss != o.rss) return rss < o.rss;
        return ord < o.ord;
    }
};

inline std::string path_string(std::span<const Dir> path) {
    std::string s;
    for (const Dir d : path) s += (d == Dir::Left) ? 'L' : 'R';
    return s;
}

}  // namespace detail

// Greedy structure search: a 1-leaf initialization over all (basis, dim)
// pairs, then cfg.iters rounds that try replacing every leaf V with V op V'
// for every op and candidate leaf V', committing the globally best insertion
// and re-tuning all weights by coordinate descent. Deterministic for a given
// (dataset, basis, config), including under parallel candidate scoring.
inline FitResult fit(const Dataset& d, std::shared_ptr<const BasisSet> basis,
                     const FitConfig& cfg) {
    if (d.n < 1) throw std::invalid_argument("fit: empty dataset");
    if (d.p < 1) throw std::invalid_argument("fit: dataset has no covariates");
    if (cfg.iters < 0) throw std::invalid_argument("fit: iters must be >= 0");
    if (static_cast<std::size_t>(d.n) * d.p != d.X.size() ||
        static_cast<std::size_t>(d.n) != d.y.size())
        throw std::invalid_argument("fit: dataset shape mismatch");
    for (const double v : d.X)
        if (!basis->domain.contains(v))
            throw std::invalid_argument("fit: covariate value " + std::to_string(v) +
                                        " outside the basis domain");

    const int q = basis->q();
    const int p = d.p;
    const std::size_t n = static_cast<std::size_t>(d.n);
    const detail::PhiTable table(d, *basis);

    FitResult res;
    Model& m = res.model;
    m.p = p;
    m.basis = basis;

    // Initialization: best single weighted leaf with a free intercept.
    detail::Scored init;
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < p; ++j) {
            const InsertionSolution s =
                detail::fit_affine_clipped(std::span<const double>(d.y), table.col(i, j));
            detail::Scored cand{s.rss, static_cast<std::int64_t>(i) * p + j, s.w0, s.w,
                                s.degenerate};
            if (cand.better_than(init)) init = cand;
        }
    {
        const int i = static_cast<int>(init.ord / p), j = static_cast<int>(init.ord % p);
        m.intercept = init.w0;
        m.root = TreeNode::make_leaf({i + 1, j + 1, init.w});
        res.trace.push_back({0, "", "init", i + 1, j + 1, init.w, init.rss});
    }
    double cur_rss = init.rss;

    std::vector<double> y_minus_b, kvec, cvec, t_buf, a_buf;
    for (int it = 1; it <= cfg.iters; ++it) {
        const std::vector<detail::LeafRef> leaves = detail::leaves_of(m);
        const int L = static_cast<int>(leaves.size());

        // Per-leaf contexts: b, k per sample, plus the leaf's own value c.
        y_minus_b.assign(n * L, 0.0);
        kvec.assign(n * L, 0.0);
        cvec.assign(n * L, 0.0);
        for (int l = 0; l < L; ++l) {
            const std::span<const double> phi =
                table.col(leaves[l].node->leaf.basis_id - 1, leaves[l].node->leaf.dim - 1);
            for (std::size_t r = 0; r < n; ++r) {
                const PathConstants pc =
                    path_constants(m, leaves[l].path, d.row(static_cast<int>(r)));
                y_minus_b[l * n + r] = d.y[r] - pc.b;
                kvec[l * n + r] = pc.k;
                cvec[l * n + r] = leaves[l].node->leaf.weight * phi[r];
            }
        }

        // Candidate rank encodes the tie-break order: '+' before '*', then
        // leaf pre-order index, then basis id, then dim.
        const std::int64_t total = static_cast<std::int64_t>(2) * L * q * p;
        const auto score_range = [&](std::int64_t lo, std::int64_t hi, std::vector<double>& t,
                                     std::vector<double>& a) {
            detail::Scored best;
            t.resize(n);
            a.resize(n);
            for (std::int64_t ord = lo; ord < hi; ++ord) {
                const int j = static_cast<int>(ord % p);
                const int i = static_cast<int>((ord / p) % q);
                const int l = static_cast<int>((ord / (static_cast<std::int64_t>(p) * q)) % L);
                const OpKind op =
                    ord < static_cast<std::int64_t>(L) * q * p ? OpKind::Plus : OpKind::Times;
                const double* yb = y_minus_b.data() + static_cast<std::size_t>(l) * n;
                const double* kk = kvec.data() + static_cast<std::size_t>(l) * n;
                const double* cc = cvec.data() + static_cast<std::size_t>(l) * n;
                const std::span<const double> phi = table.col(i, j);
                if (op == OpKind::Plus) {
                    for (std::size_t r = 0; r < n; ++r) {
                        t[r] = yb[r] - kk[r] * cc[r];
                        a[r] = kk[r] * phi[r];
                    }
                } else {
                    for (std::size_t r = 0; r < n; ++r) {
                        t[r] = yb[r];
                        a[r] = kk[r] * cc[r] * phi[r];
                    }
                }
                const InsertionSolution s = detail::fit_affine_clipped(t, a);
                const detail::Scored cand{s.rss, ord, s.w0, s.w, s.degenerate};
                if (cand.better_than(best)) best = cand;
            }
            return best;
        };

        detail::Scored best;
        const int workers = std::min<std::int64_t>(detail::worker_count(cfg), total);
        if (workers <= 1 || total < 4096) {
            best = score_range(0, total, t_buf, a_buf);
        } else {
            std::vector<detail::Scored> partial(static_cast<std::size_t>(workers));
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(workers));
            for (int w = 0; w < workers; ++w) {
                const std::int64_t lo = total * w / workers;
                const std::int64_t hi = total * (w + 1) / workers;
                pool.emplace_back([&, lo, hi, w] {
                    std::vector<double> t, a;
                    partial[static_cast<std::size_t>(w)] = score_range(lo, hi, t, a);
                });
            }
            for (std::thread& th : pool) th.join();
            for (const detail::Scored& s : partial)
                if (s.better_than(best)) best = s;
        }

        if (cfg.early_stop && best.rss >= cur_rss - 1e-12) break;

        // Commit: the chosen leaf becomes the left child of the new op node,
        // the new weighted leaf the right child.
        const int j = static_cast<int>(best.ord % p);
        const int i = static_cast<int>((best.ord / p) % q);
        const int l = static_cast<int>((best.ord / (static_cast<std::int64_t>(p) * q)) % L);
        const OpKind op =
            best.ord < static_cast<std::int64_t>(L) * q * p ? OpKind::Plus : OpKind::Times;
        TreeNode* target = leaves[static_cast<std::size_t>(l)].node;
        auto old_leaf = TreeNode::make_leaf(target->leaf);
        auto new_leaf = TreeNode::make_leaf({i + 1, j + 1, best.w});
        target->op = op;
        target->left = std::move(old_leaf);
        target->right = std::move(new_leaf);
        m.intercept = best.w0;

        cur_rss = detail::coordinate_descent_inplace(m, d, cfg, table);
        res.trace.push_back({it, detail::path_string(leaves[static_cast<std::size_t>(l)].path),
                             op == OpKind::Plus ? "+" : "*", i + 1, j + 1, best.w, cur_rss});
    }

    res.rss = cur_rss;
    return res;
}

}  // namespace comptree
