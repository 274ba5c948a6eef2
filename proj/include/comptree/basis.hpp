#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "comptree/errors.hpp"

namespace comptree {

// Closed interval the covariates live in: [0,1] for fitting, [-1,1] for the
// lower-bound ensemble.
struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double x) const { return x >= lo && x <= hi; }
    double length() const { return hi - lo; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

enum class BasisFamily {
    FourierSin,     // sin(i*pi*x), param = i
    FourierCos,     // cos(i*pi*x), param = i
    TruncPoly,      // x^e, param = e in {1,2,3}
    TruncPolyKnot,  // (x - t)_+^3, param = t
    BSpline1,       // degree-1 hat, param = center, param2 = half width
};

// One bounded univariate basis function; value(x) = norm * raw(x). The norm
// constant scales the sup over the domain to <= 1 (except for the ensemble
// cosines, which carry norm sqrt(2) on purpose).
struct BasisFunction {
    int id = 0;  // 1-based position within its BasisSet
    BasisFamily family = BasisFamily::FourierSin;
    double param = 0.0;
    double param2 = 0.0;
    double norm = 1.0;
    Interval domain;

    double raw(double x) const {
        switch (family) {
            case BasisFamily::FourierSin:
                return std::sin(param * std::numbers::pi * x);
            case BasisFamily::FourierCos:
                return std::cos(param * std::numbers::pi * x);
            case BasisFamily::TruncPoly: {
                double r = x;
                for (int e = 1; e < static_cast<int>(param); ++e) r *= x;
                return r;
            }
            case BasisFamily::TruncPolyKnot: {
                const double t = std::max(0.0, x - param);
                return t * t * t;
            }
            case BasisFamily::BSpline1:
                return std::max(0.0, 1.0 - std::abs(x - param) / param2);
        }
        return 0.0;
    }

    friend bool operator==(const BasisFunction&, const BasisFunction&) = default;
};

inline double evaluate(const BasisFunction& b, double x) {
    if (!b.domain.contains(x))
        throw std::domain_error("basis evaluate: x=" + std::to_string(x) +
                                " outside [" + std::to_string(b.domain.lo) + "," +
                                std::to_string(b.domain.hi) + "]");
    return b.norm * b.raw(x);
}

// An ordered catalog of basis functions over a common domain. Immutable after
// construction; safe to share across threads.
struct BasisSet {
    std::vector<BasisFunction> functions;
    Interval domain;
    bool ensemble_only = false;  // sup may exceed 1 (the sqrt(2) cosines)
    std::string spec;            // string from which the set can be rebuilt

    int q() const { return static_cast<int>(functions.size()); }

    const BasisFunction& at(int id) const {
        if (id < 1 || id > q())
            throw std::invalid_argument("basis id " + std::to_string(id) +
                                        " out of range 1.." + std::to_string(q()));
        return functions[static_cast<std::size_t>(id - 1)];
    }
};

namespace detail {

// Block sizes of one full cycle of the standard catalog; catalogs larger than
// the cycle continue with higher-frequency Fourier pairs.
inline constexpr int kFourierBlock = 8;
inline constexpr int kPolyBlock = 3;
inline constexpr int kKnotBlock = 9;
inline constexpr int kSplineBlock = 10;

inline void append_fourier(std::vector<BasisFunction>& out, int count, int start_freq,
                           Interval dom) {
    for (int idx = 0; idx < count; ++idx) {
        BasisFunction f;
        f.family = (idx % 2 == 0) ? BasisFamily::FourierSin : BasisFamily::FourierCos;
        f.param = static_cast<double>(start_freq + idx / 2);
        f.norm = 1.0;  // |sin|,|cos| <= 1 everywhere
        f.domain = dom;
        out.push_back(f);
    }
}

inline void append_poly(std::vector<BasisFunction>& out, int count, Interval dom) {
    if (count > kPolyBlock)
        throw std::invalid_argument("poly block supports at most 3 exponents (x, x^2, x^3)");
    const double m = std::max(std::abs(dom.lo), std::abs(dom.hi));
    for (int e = 1; e <= count; ++e) {
        BasisFunction f;
        f.family = BasisFamily::TruncPoly;
        f.param = static_cast<double>(e);
        f.norm = 1.0 / std::pow(m, e);
        f.domain = dom;
        out.push_back(f);
    }
}

inline void append_knots(std::vector<BasisFunction>& out, int count, Interval dom) {
    for (int r = 1; r <= count; ++r) {
        const double t = dom.lo + dom.length() * r / (count + 1);
        BasisFunction f;
        f.family = BasisFamily::TruncPolyKnot;
        f.param = t;
        const double sup = std::pow(dom.hi - t, 3);
        f.norm = 1.0 / sup;
        f.domain = dom;
        out.push_back(f);
    }
}

inline void append_bsplines(std::vector<BasisFunction>& out, int count, Interval dom) {
    if (count == 0) return;
    if (count < 2)
        throw std::invalid_argument("bspline block needs at least 2 knots");
    const double h = dom.length() / (count - 1);
    for (int r = 0; r < count; ++r) {
        BasisFunction f;
        f.family = BasisFamily::BSpline1;
        f.param = dom.lo + h * r;
        f.param2 = h;
        f.norm = 1.0;  // hats peak at 1
        f.domain = dom;
        out.push_back(f);
    }
}

inline void assign_ids(BasisSet& set) {
    for (std::size_t i = 0; i < set.functions.size(); ++i)
        set.functions[i].id = static_cast<int>(i) + 1;
}

}  // namespace detail

// Deterministic default catalog: interleaved Fourier pairs sin/cos for
// frequencies 1..4, then x, x^2, x^3, then knotted cubics on the interior
// grid {0.1,...,0.9}, then 10 degree-1 B-spline hats; catalogs larger than
// this 30-function cycle continue with Fourier pairs from frequency 5 up.
// Every function is scaled so sup |phi| <= 1 on the domain.
inline BasisSet standard_catalog(int q, Interval domain = {0.0, 1.0}) {
    if (q < 1) throw std::invalid_argument("standard_catalog: q must be >= 1");
    BasisSet set;
    set.domain = domain;
    set.spec = "standard";
    auto& fns = set.functions;
    detail::append_fourier(fns, detail::kFourierBlock, 1, domain);
    detail::append_poly(fns, detail::kPolyBlock, domain);
    detail::append_knots(fns, detail::kKnotBlock, domain);
    detail::append_bsplines(fns, detail::kSplineBlock, domain);
    const int cycle = static_cast<int>(fns.size());
    if (q > cycle)
        detail::append_fourier(fns, q - cycle, detail::kFourierBlock / 2 + 1, domain);
    fns.resize(static_cast<std::size_t>(q));
    detail::assign_ids(set);
    return set;
}

// The restricted-ensemble basis phi_i(z) = sqrt(2) cos(i pi z) on [-1,1].
// These exceed sup 1 and are only valid for the lower-bound construction.
inline BasisSet ensemble_basis(int q) {
    if (q < 1) throw std::invalid_argument("ensemble_basis: q must be >= 1");
    BasisSet set;
    set.domain = {-1.0, 1.0};
    set.ensemble_only = true;
    set.spec = "ensemble";
    for (int i = 1; i <= q; ++i) {
        BasisFunction f;
        f.family = BasisFamily::FourierCos;
        f.param = static_cast<double>(i);
        f.norm = std::numbers::sqrt2;
        f.domain = set.domain;
        set.functions.push_back(f);
    }
    detail::assign_ids(set);
    return set;
}

// Builds a catalog from a CLI spec string: either "standard", "ensemble", or
// a comma list such as "fourier:8,poly:3,knots:9,bspline:10". Blocks are
// emitted in catalog order regardless of their order in the string, then the
// result is truncated to q when q > 0.
inline BasisSet parse_basis_spec(const std::string& spec, int q, Interval domain = {0.0, 1.0}) {
    if (spec == "standard") return standard_catalog(q > 0 ? q : 30, domain);
    if (spec == "ensemble") return ensemble_basis(q > 0 ? q : 8);

    int fourier = 0, poly = 0, knots = 0, bspline = 0;
    std::size_t pos = 0;
    while (pos < spec.size()) {
        const std::size_t comma = spec.find(',', pos);
        const std::string item = spec.substr(pos, comma == std::string::npos ? std::string::npos
                                                                             : comma - pos);
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("basis spec item '" + item + "' is not family:count");
        const std::string family = item.substr(0, colon);
        int count = 0;
        try {
            count = std::stoi(item.substr(colon + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("basis spec item '" + item + "' has a bad count");
        }
        if (count < 0) throw std::invalid_argument("basis spec counts must be >= 0");
        if (family == "fourier")
            fourier = count;
        else if (family == "poly")
            poly = count;
        else if (family == "knots")
            knots = count;
        else if (family == "bspline")
            bspline = count;
        else
            throw std::invalid_argument("unknown basis family '" + family + "'");
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }

    BasisSet set;
    set.domain = domain;
    detail::append_fourier(set.functions, fourier, 1, domain);
    detail::append_poly(set.functions, poly, domain);
    detail::append_knots(set.functions, knots, domain);
    detail::append_bsplines(set.functions, bspline, domain);
    if (set.functions.empty()) throw std::invalid_argument("basis spec expands to 0 functions");
    if (q > 0) {
        if (q > set.q())
            throw std::invalid_argument("basis spec expands to " + std::to_string(set.q()) +
                                        " functions, fewer than --q " + std::to_string(q));
        set.functions.resize(static_cast<std::size_t>(q));
    }
    detail::assign_ids(set);
    set.spec = "fourier:" + std::to_string(fourier) + ",poly:" + std::to_string(poly) +
               ",knots:" + std::to_string(knots) + ",bspline:" + std::to_string(bspline);
    return set;
}

}  // namespace comptree
