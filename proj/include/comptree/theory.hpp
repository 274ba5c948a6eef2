#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "comptree/errors.hpp"
#include "comptree/tree.hpp"

namespace comptree {

struct BoundInputs {
    std::int64_t n = 1;
    std::int64_t k = 1;
    std::int64_t p = 1;
    std::int64_t q = 1;
    double delta = 0.05;
    double epsilon = 0.1;
    double sigma_eps = 1.0;
};

namespace detail {

inline double log_factorial(std::int64_t k) { return std::lgamma(static_cast<double>(k) + 1.0); }

inline void check_counts(const BoundInputs& b) {
    if (b.n < 1 || b.k < 1 || b.p < 1 || b.q < 1)
        throw std::invalid_argument("bound inputs n, k, p, q must be >= 1");
}

// log of the binomial coefficient C(p, m) for p >= m >= 0.
inline double log_binomial(std::int64_t p, std::int64_t m) {
    return log_factorial(p) - log_factorial(m) - log_factorial(p - m);
}

}  // namespace detail

// High-probability bound on E_D[h] - E_S[h] over all trees with <= 2k+1
// nodes and l1-bounded weights:
//   2 sqrt((k+1)/n) + sqrt(((k+1) ln(pq) + ln(8k k!) + ln(1/delta)) / (2n)).
// Logs are natural; ln k! goes through lgamma so k up to 1e6 is safe.
inline double generalization_gap(const BoundInputs& b) {
    detail::check_counts(b);
    if (b.delta <= 0.0 || b.delta > 1.0)
        throw std::invalid_argument("delta must be in (0,1]");
    const double k1 = static_cast<double>(b.k) + 1.0;
    const double n = static_cast<double>(b.n);
    const double complexity = k1 * std::log(static_cast<double>(b.p) * static_cast<double>(b.q)) +
                              std::log(8.0 * static_cast<double>(b.k)) +
                              detail::log_factorial(b.k) + std::log(1.0 / b.delta);
    return 2.0 * std::sqrt(k1 / n) + std::sqrt(complexity / (2.0 * n));
}

// The pre-ceiling sample count that makes the excess risk at most epsilon:
//   (3(k+1)(ln(pq) + 8) + 3 ln(8k k!) + 6 ln(2/delta)) / (2 eps^2).
inline double sufficient_n_real(const BoundInputs& b) {
    detail::check_counts(b);
    if (b.delta <= 0.0 || b.delta >= 1.0 || b.epsilon <= 0.0 || b.epsilon >= 1.0)
        throw std::invalid_argument("delta and epsilon must be in (0,1)");
    const double k1 = static_cast<double>(b.k) + 1.0;
    const double num = 3.0 * k1 * (std::log(static_cast<double>(b.p) * static_cast<double>(b.q)) + 8.0) +
                       3.0 * (std::log(8.0 * static_cast<double>(b.k)) + detail::log_factorial(b.k)) +
                       6.0 * std::log(2.0 / b.delta);
    return num / (2.0 * b.epsilon * b.epsilon);
}

inline std::int64_t sufficient_n(const BoundInputs& b) {
    return static_cast<std::int64_t>(std::ceil(sufficient_n_real(b)));
}

// Sample-count threshold below which no estimator can identify the planted
// ensemble member with probability > 1/2:
//   ((k+1) ln q + ln C(p, k+1) - 2 ln 2) * sigma_eps^2 / 2.
// May be negative (vacuous) for tiny q and p.
inline double necessary_n(const BoundInputs& b) {
    detail::check_counts(b);
    if (b.p < b.k + 1) throw std::invalid_argument("necessary_n requires p >= k+1");
    const double k1 = static_cast<double>(b.k) + 1.0;
    const double logc = k1 * std::log(static_cast<double>(b.q)) +
                        detail::log_binomial(b.p, b.k + 1) - 2.0 * std::log(2.0);
    return logc * b.sigma_eps * b.sigma_eps / 2.0;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of labeled binary trees.
//
// A tree here has '+'/'*' internal nodes and (basis, dim) leaves. Mirrored
// trees count as distinct, while nodes whose two child subtrees are identical
// are excluded; that convention reproduces the exact small counts pq and
// 2(pq)^2 - 2pq and the recurrence over exact node counts.
// ---------------------------------------------------------------------------

// Size estimate used as the feasibility guard: pq for k = 0, else the bound
// 4k k! (pq)^(k+1).
inline double tree_count_bound(int k, int p, int q) {
    const double pq = static_cast<double>(p) * static_cast<double>(q);
    if (k == 0) return pq;
    return 4.0 * k * std::exp(detail::log_factorial(k) + (k + 1) * std::log(pq));
}

inline constexpr double kEnumerationGuard = 1e7;

namespace detail {

inline void check_enumeration_guard(int k, int p, int q) {
    if (k < 0 || p < 1 || q < 1)
        throw std::invalid_argument("enumeration needs k >= 0, p >= 1, q >= 1");
    const double est = tree_count_bound(k, p, q);
    if (est > kEnumerationGuard)
        throw GuardError(est, "enumeration refused: size estimate " + std::to_string(est) +
                                  " exceeds guard " + std::to_string(kEnumerationGuard));
}

}  // namespace detail

// Counts of trees with exactly 2K+1 nodes for K = 0..k, by the recurrence
//   C[0] = pq
//   C[K] = 2 * (sum_{kl+kr=K-1} C[kl]*C[kr]  -  C[(K-1)/2] if K odd)
// where the subtraction removes the identical left/right pairs.
inline std::vector<std::uint64_t> exact_tree_counts(int k, int p, int q) {
    detail::check_enumeration_guard(k, p, q);
    std::vector<std::uint64_t> c(static_cast<std::size_t>(k) + 1);
    c[0] = static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(q);
    for (int K = 1; K <= k; ++K) {
        std::uint64_t s = 0;
        for (int kl = 0; kl < K; ++kl) s += c[static_cast<std::size_t>(kl)] * c[static_cast<std::size_t>(K - 1 - kl)];
        if ((K - 1) % 2 == 0) s -= c[static_cast<std::size_t>((K - 1) / 2)];
        c[static_cast<std::size_t>(K)] = 2 * s;
    }
    return c;
}

inline std::uint64_t count_trees(int k, int p, int q, bool exact) {
    const std::vector<std::uint64_t> c = exact_tree_counts(k, p, q);
    if (exact) return c[static_cast<std::size_t>(k)];
    std::uint64_t total = 0;
    for (const std::uint64_t v : c) total += v;
    return total;
}

// Immutable enumerated tree; subtrees are shared between trees, so the full
// listing fits in memory at guard scale.
struct EnumTree {
    bool leaf = true;
    OpKind op = OpKind::Plus;
    std::shared_ptr<const EnumTree> left, right;
    int basis_id = 0;
    int dim = 0;
};
using EnumTreePtr = std::shared_ptr<const EnumTree>;

inline int enum_node_count(const EnumTree& t) {
    return t.leaf ? 1 : 1 + enum_node_count(*t.left) + enum_node_count(*t.right);
}

namespace detail {

// levels[K] = all trees with exactly 2K+1 nodes, in deterministic order.
inline std::vector<std::vector<EnumTreePtr>> enumerate_levels(int k, int p, int q) {
    std::vector<std::vector<EnumTreePtr>> levels(static_cast<std::size_t>(k) + 1);
    for (int i = 1; i <= q; ++i)
        for (int j = 1; j <= p; ++j) {
            auto t = std::make_shared<EnumTree>();
            t->basis_id = i;
            t->dim = j;
            levels[0].push_back(std::move(t));
        }
    for (int K = 1; K <= k; ++K) {
        auto& out = levels[static_cast<std::size_t>(K)];
        for (int kl = 0; kl < K; ++kl) {
            const auto& ls = levels[static_cast<std::size_t>(kl)];
            const auto& rs = levels[static_cast<std::size_t>(K - 1 - kl)];
            const bool same_level = (kl == K - 1 - kl);
            for (const OpKind op : {OpKind::Plus, OpKind::Times})
                for (std::size_t a = 0; a < ls.size(); ++a)
                    for (std::size_t b = 0; b < rs.size(); ++b) {
                        if (same_level && a == b) continue;  // identical subtrees
                        auto t = std::make_shared<EnumTree>();
                        t->leaf = false;
                        t->op = op;
                        t->left = ls[a];
                        t->right = rs[b];
                        out.push_back(std::move(t));
                    }
        }
    }
    return levels;
}

}  // namespace detail

// All distinct labeled trees with exactly 2k+1 nodes.
inline std::vector<EnumTreePtr> enumerate_trees_exact(int k, int p, int q) {
    detail::check_enumeration_guard(k, p, q);
    return detail::enumerate_levels(k, p, q).back();
}

// All distinct labeled trees with at most 2*k_max+1 nodes, smallest first.
inline std::vector<EnumTreePtr> enumerate_trees(int k_max, int p, int q) {
    detail::check_enumeration_guard(k_max, p, q);
    auto levels = detail::enumerate_levels(k_max, p, q);
    std::vector<EnumTreePtr> all;
    for (auto& lvl : levels)
        all.insert(all.end(), std::make_move_iterator(lvl.begin()),
                   std::make_move_iterator(lvl.end()));
    return all;
}

// All op-labeled tree shapes with exactly 2k+1 nodes (leaf labels fixed,
// identical siblings allowed); used to brute-force the M_f recurrence.
inline std::vector<EnumTreePtr> enumerate_shapes(int k) {
    std::vector<std::vector<EnumTreePtr>> levels(static_cast<std::size_t>(k) + 1);
    auto lf = std::make_shared<EnumTree>();
    lf->basis_id = 1;
    lf->dim = 1;
    levels[0].push_back(std::move(lf));
    for (int K = 1; K <= k; ++K)
        for (int kl = 0; kl < K; ++kl)
            for (const OpKind op : {OpKind::Plus, OpKind::Times})
                for (const auto& a : levels[static_cast<std::size_t>(kl)])
                    for (const auto& b : levels[static_cast<std::size_t>(K - 1 - kl)]) {
                        auto t = std::make_shared<EnumTree>();
                        t->leaf = false;
                        t->op = op;
                        t->left = a;
                        t->right = b;
                        levels[static_cast<std::size_t>(K)].push_back(std::move(t));
                    }
    return levels.back();
}

// Deep-copies an enumerated tree into a solver tree with uniform weights.
inline std::unique_ptr<TreeNode> to_tree(const EnumTree& t, double weight = 1.0) {
    if (t.leaf) return TreeNode::make_leaf({t.basis_id, t.dim, weight});
    return TreeNode::make_op(t.op, to_tree(*t.left, weight), to_tree(*t.right, weight));
}

// Largest flat-decomposition length over all shapes with <= 2k+1 nodes, via
//   M[0] = 1,  M[K] = max over kl+kr=K-1 of max(M[kl]*M[kr], M[kl]+M[kr]).
inline std::uint64_t max_mf(int k) {
    if (k < 0) throw std::invalid_argument("max_mf: k must be >= 0");
    if (k > 100) throw std::invalid_argument("max_mf: k > 100 would overflow");
    std::vector<std::uint64_t> m(static_cast<std::size_t>(k) + 1, 1);
    for (int K = 1; K <= k; ++K) {
        std::uint64_t best = 0;
        for (int kl = 0; kl < K; ++kl) {
            const std::uint64_t a = m[static_cast<std::size_t>(kl)];
            const std::uint64_t b = m[static_cast<std::size_t>(K - 1 - kl)];
            best = std::max({best, a * b, a + b});
        }
        m[static_cast<std::size_t>(K)] = best;
    }
    return m[static_cast<std::size_t>(k)];  // nondecreasing in K
}

// ---------------------------------------------------------------------------
// Restricted ensemble: multiplication-only, unit-weight trees over the
// sqrt(2) cosine basis, with every covariate used at most once.
// ---------------------------------------------------------------------------

struct EnsembleMember {
    std::vector<Factor> factors;  // (basis i, dim j), strictly increasing dims

    friend bool operator==(const EnsembleMember&, const EnsembleMember&) = default;
};

// |G_{2k+1}| = sum_{i=1..k} q^(i+1) C(p, i+1).
inline double ensemble_count(int k, int p, int q) {
    if (p < 2) throw std::invalid_argument("ensemble needs p >= 2");
    if (k < 1 || q < 1) throw std::invalid_argument("ensemble needs k >= 1, q >= 1");
    double total = 0.0;
    for (int i = 1; i <= k; ++i) {
        const int s = i + 1;
        if (s > p) break;
        total += std::exp(static_cast<double>(s) * std::log(static_cast<double>(q)) +
                          detail::log_binomial(p, s));
    }
    return total;
}

// Members ordered by size, then dim combination, then basis assignment.
inline std::vector<EnsembleMember> ensemble_enumerate(int k, int p, int q) {
    const double est = ensemble_count(k, p, q);
    if (est > kEnumerationGuard)
        throw GuardError(est, "ensemble enumeration refused: size estimate " +
                                  std::to_string(est) + " exceeds guard");
    std::vector<EnsembleMember> out;
    std::vector<int> dims, bases;
    for (int s = 2; s <= k + 1 && s <= p; ++s) {
        dims.resize(static_cast<std::size_t>(s));
        for (int i = 0; i < s; ++i) dims[static_cast<std::size_t>(i)] = i + 1;
        while (true) {
            bases.assign(static_cast<std::size_t>(s), 1);
            while (true) {
                EnsembleMember g;
                g.factors.reserve(static_cast<std::size_t>(s));
                for (int i = 0; i < s; ++i)
                    g.factors.push_back({bases[static_cast<std::size_t>(i)],
                                         dims[static_cast<std::size_t>(i)]});
                out.push_back(std::move(g));
                int pos = s - 1;  // odometer over basis assignments
                while (pos >= 0 && bases[static_cast<std::size_t>(pos)] == q) {
                    bases[static_cast<std::size_t>(pos)] = 1;
                    --pos;
                }
                if (pos < 0) break;
                ++bases[static_cast<std::size_t>(pos)];
            }
            int pos = s - 1;  // next dim combination, lexicographic
            while (pos >= 0 && dims[static_cast<std::size_t>(pos)] == p - (s - 1 - pos)) --pos;
            if (pos < 0) break;
            ++dims[static_cast<std::size_t>(pos)];
            for (int i = pos + 1; i < s; ++i)
                dims[static_cast<std::size_t>(i)] = dims[static_cast<std::size_t>(i - 1)] + 1;
        }
    }
    return out;
}

// g_A(x) = prod over (i,j) in A of sqrt(2) cos(i pi x_j), x in [-1,1]^p.
inline double ensemble_eval(const EnsembleMember& g, std::span<const double> x) {
    double r = 1.0;
    for (const Factor& f : g.factors) {
        const double z = x[static_cast<std::size_t>(f.dim - 1)];
        if (z < -1.0 || z > 1.0) throw std::domain_error("ensemble_eval: x outside [-1,1]");
        r *= std::numbers::sqrt2 * std::cos(f.basis_id * std::numbers::pi * z);
    }
    return r;
}

}  // namespace comptree
