#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "comptree/solver.hpp"
#include "support/oracles.hpp"
#include "support/random_trees.hpp"

using namespace comptree;

namespace {

std::shared_ptr<const BasisSet> cat(int q) {
    return std::make_shared<const BasisSet>(standard_catalog(q));
}

Dataset uniform_X(Rng& rng, int n, int p) {
    Dataset d;
    d.n = n;
    d.p = p;
    d.X.resize(static_cast<std::size_t>(n) * p);
    for (double& v : d.X) v = rng.uniform01();
    d.y.assign(static_cast<std::size_t>(n), 0.0);
    return d;
}

void label_with(Dataset& d, const Model& m) {
    for (int r = 0; r < d.n; ++r) d.y[static_cast<std::size_t>(r)] = evaluate(m, d.row(r));
}

// The worked path-constants model (same tree as in test_tree).
Model worked_example_tree() {
    Model m;
    m.p = 3;
    m.basis = cat(10);
    m.root = TreeNode::make_op(
        OpKind::Times,
        TreeNode::make_op(OpKind::Plus, TreeNode::make_leaf({10, 2, 0.1}),
                          TreeNode::make_leaf({9, 1, -0.05})),
        TreeNode::make_op(OpKind::Plus, TreeNode::make_leaf({1, 2, 0.3}),
                          TreeNode::make_leaf({9, 3, 0.02})));
    return m;
}

}  // namespace

TEST_CASE("path_constants: worked example and base cases") {
    const Model m = worked_example_tree();
    const double x[3] = {1.0, 1.0, 1.0};

    const Dir to_E[] = {Dir::Left, Dir::Right};
    const PathConstants pc = path_constants(m, to_E, x);
    CHECK(std::abs(pc.b - 0.002) <= 1e-15);
    CHECK(std::abs(pc.k - 0.02) <= 1e-15);

    const PathConstants root = path_constants(m, std::span<const Dir>{}, x);
    CHECK(root.b == 0.0);
    CHECK(root.k == 1.0);

    // single '+' root whose right leaf evaluates to 0.3
    Model plus;
    plus.p = 1;
    plus.basis = cat(10);
    plus.root = TreeNode::make_op(OpKind::Plus, TreeNode::make_leaf({1, 1, 0.9}),
                                  TreeNode::make_leaf({10, 1, 0.3}));
    const double x1[1] = {1.0};
    const Dir left[] = {Dir::Left};
    const PathConstants pl = path_constants(plus, left, x1);
    CHECK(pl.b == Catch::Approx(0.3).margin(1e-15));
    CHECK(pl.k == 1.0);

    const Dir too_deep[] = {Dir::Left, Dir::Left, Dir::Left};
    CHECK_THROWS_AS(path_constants(m, too_deep, x), std::invalid_argument);
}

TEST_CASE("path_constants: defining identity on random trees") {
    auto basis = cat(8);
    Rng rng(404);
    for (int rep = 0; rep < 50; ++rep) {
        const int k = static_cast<int>(rng.below(6));
        Model m = testing::random_model(rng, k, basis, 3);
        std::vector<detail::LeafRef> leaves = detail::leaves_of(m);
        for (int pt = 0; pt < 20; ++pt) {
            const std::vector<double> x = testing::random_point(rng, 3, basis->domain);
            const double direct = evaluate(m, x);
            for (const auto& lf : leaves) {
                const PathConstants pc = path_constants(m, lf.path, x);
                const double leaf_val =
                    lf.node->leaf.weight *
                    evaluate(basis->at(lf.node->leaf.basis_id), x[lf.node->leaf.dim - 1]);
                const double recon = m.intercept + pc.b + pc.k * leaf_val;
                CHECK(std::abs(recon - direct) <=
                      1e-10 * std::max({1.0, std::abs(direct), std::abs(recon)}));
            }
        }
    }
}

TEST_CASE("solve_insertion: closed form, clipping and degeneracy") {
    Rng rng(11);
    const int n = 64;
    std::vector<double> ones(n, 1.0), zeros(n, 0.0);

    // t = 2a exactly with mean-zero a: unconstrained 2 clips to 1
    std::vector<double> a(n), t(n);
    double abar = 0.0;
    for (int i = 0; i < n; ++i) {
        a[static_cast<std::size_t>(i)] = rng.uniform(-1.0, 1.0);
        abar += a[static_cast<std::size_t>(i)];
    }
    abar /= n;
    for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] -= abar;
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = 2.0 * a[static_cast<std::size_t>(i)];
    InsertionSolution s = solve_insertion(t, ones, zeros, a, OpKind::Plus);
    CHECK(s.w == 1.0);
    CHECK(s.w0 == Catch::Approx(0.0).margin(1e-12));
    CHECK_FALSE(s.degenerate);

    // constant target: w = 0, w0 = the constant, rss = 0
    std::vector<double> tc(n, 0.7);
    s = solve_insertion(tc, ones, zeros, a, OpKind::Plus);
    CHECK(s.w == 0.0);
    CHECK(s.w0 == Catch::Approx(0.7).margin(1e-15));
    CHECK(s.rss == Catch::Approx(0.0).margin(1e-20));

    // zero-variance regressor under Times (c == 0)
    std::vector<double> phi(n);
    for (double& v : phi) v = rng.uniform(-1.0, 1.0);
    s = solve_insertion(tc, ones, zeros, phi, OpKind::Times);
    CHECK(s.degenerate);
    CHECK(s.w == 0.0);
}

TEST_CASE("solve_insertion beats a fine grid scan") {
    Rng rng(2718);
    const int n = 80;
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> y(n), k(n), c(n), phi(n);
        for (int i = 0; i < n; ++i) {
            y[static_cast<std::size_t>(i)] = rng.uniform(-2.0, 2.0);
            k[static_cast<std::size_t>(i)] = rng.uniform(-1.5, 1.5);
            c[static_cast<std::size_t>(i)] = rng.uniform(-1.0, 1.0);
            phi[static_cast<std::size_t>(i)] = rng.uniform(-1.0, 1.0);
        }
        const OpKind op = rep % 2 == 0 ? OpKind::Plus : OpKind::Times;
        const InsertionSolution s = solve_insertion(y, k, c, phi, op);

        double grid_best = std::numeric_limits<double>::infinity();
        for (int g = -10000; g <= 10000; ++g) {
            const double w = g * 1e-4;
            double sum = 0.0, sumsq = 0.0;
            for (int i = 0; i < n; ++i) {
                const double pred =
                    op == OpKind::Plus
                        ? k[static_cast<std::size_t>(i)] * (c[static_cast<std::size_t>(i)] +
                                                            w * phi[static_cast<std::size_t>(i)])
                        : k[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(i)] * w *
                              phi[static_cast<std::size_t>(i)];
                const double r = y[static_cast<std::size_t>(i)] - pred;
                sum += r;
                sumsq += r * r;
            }
            // optimal intercept for this w folds in as the mean residual
            grid_best = std::min(grid_best, sumsq - sum * sum / n);
        }
        CHECK(s.rss <= grid_best + 1e-8);
    }
}

TEST_CASE("fit: planted single leaf is recovered at iters=0") {
    auto basis = cat(6);
    Rng rng(55);
    Dataset d = uniform_X(rng, 120, 3);
    Model truth;
    truth.p = 3;
    truth.basis = basis;
    truth.intercept = 0.1;
    truth.root = TreeNode::make_leaf({4, 2, 0.7});
    label_with(d, truth);

    FitConfig cfg;
    cfg.iters = 0;
    const FitResult res = fit(d, basis, cfg);
    REQUIRE(res.model.root);
    CHECK(res.model.root->is_leaf());
    CHECK(res.model.root->leaf.basis_id == 4);
    CHECK(res.model.root->leaf.dim == 2);
    CHECK(res.rss <= 1e-18);
    CHECK(res.model.root->leaf.weight == Catch::Approx(0.7).margin(1e-9));
    CHECK(res.model.intercept == Catch::Approx(0.1).margin(1e-9));
}

TEST_CASE("fit: zero target gives the zero model") {
    auto basis = cat(4);
    Rng rng(56);
    Dataset d = uniform_X(rng, 50, 2);
    FitConfig cfg;
    cfg.iters = 3;
    const FitResult res = fit(d, basis, cfg);
    CHECK(res.model.intercept == 0.0);
    CHECK(res.rss == 0.0);
    REQUIRE(res.model.root);
    CHECK(res.model.root->is_leaf());
    CHECK(res.model.root->leaf.weight == 0.0);
}

TEST_CASE("fit: input validation") {
    auto basis = cat(4);
    Dataset empty;
    empty.p = 2;
    FitConfig cfg;
    CHECK_THROWS_AS(fit(empty, basis, cfg), std::invalid_argument);

    Dataset bad;
    bad.n = 1;
    bad.p = 1;
    bad.X = {1.5};  // outside [0,1]
    bad.y = {0.0};
    CHECK_THROWS_AS(fit(bad, basis, cfg), std::invalid_argument);
}

TEST_CASE("fit: greedy close to exhaustive on planted additive trees") {
    auto basis = cat(2);
    FitConfig cfg;
    cfg.iters = 2;
    for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Rng rng(seed);
        Dataset d = uniform_X(rng, 200, 2);
        Model truth;
        truth.p = 2;
        truth.basis = basis;
        truth.intercept = rng.uniform(-0.3, 0.3);
        const int i1 = 1 + static_cast<int>(rng.below(2)), j1 = 1 + static_cast<int>(rng.below(2));
        int i2 = 1 + static_cast<int>(rng.below(2)), j2 = 1 + static_cast<int>(rng.below(2));
        if (i1 == i2 && j1 == j2) i2 = 3 - i2;
        const double sign1 = rng.below(2) == 0 ? 1.0 : -1.0;
        const double sign2 = rng.below(2) == 0 ? 1.0 : -1.0;
        truth.root = TreeNode::make_op(
            OpKind::Plus, TreeNode::make_leaf({i1, j1, sign1 * rng.uniform(0.35, 0.85)}),
            TreeNode::make_leaf({i2, j2, sign2 * rng.uniform(0.35, 0.85)}));
        label_with(d, truth);

        const FitResult greedy = fit(d, basis, cfg);
        const double oracle = testing::exhaustive_best_rss(d, basis, 2, cfg);
        CHECK(greedy.rss <= 1.05 * oracle + 1e-12);
    }
}

TEST_CASE("fit: clipped product insertion is rescued by coordinate descent") {
    // A pure product ground truth whose coefficient exceeds what the frozen
    // scoring context can reach within |w| <= 1; once the product insertion
    // wins, coordinate descent rescales both factors to an exact fit.
    auto basis = cat(2);
    Rng rng(1);
    Dataset d = uniform_X(rng, 200, 2);
    Model truth;
    truth.p = 2;
    truth.basis = basis;
    truth.intercept = 0.21;
    truth.root = TreeNode::make_op(OpKind::Times, TreeNode::make_leaf({1, 1, 0.79}),
                                   TreeNode::make_leaf({1, 2, 0.73}));
    label_with(d, truth);

    FitConfig cfg;
    cfg.iters = 2;
    const FitResult greedy = fit(d, basis, cfg);
    CHECK(greedy.rss <= 1e-10);
}

TEST_CASE("fit: tiny datasets and single covariates") {
    auto basis = cat(3);
    FitConfig cfg;
    cfg.iters = 2;

    Dataset one;
    one.n = 1;
    one.p = 1;
    one.X = {0.5};
    one.y = {0.8};
    const FitResult r1 = fit(one, basis, cfg);  // every regressor degenerate at n=1
    CHECK(r1.model.intercept == Catch::Approx(0.8).margin(1e-15));
    CHECK(r1.rss <= 1e-20);

    Rng rng(12);
    Dataset d = uniform_X(rng, 40, 1);
    Model truth;
    truth.p = 1;
    truth.basis = basis;
    truth.intercept = -0.2;
    truth.root = TreeNode::make_leaf({2, 1, 0.4});
    label_with(d, truth);
    const FitResult r2 = fit(d, basis, cfg);
    CHECK(r2.rss <= 1e-16);
}

TEST_CASE("fit: early_stop off runs all requested iterations") {
    auto basis = cat(4);
    Rng rng(616);
    Dataset d = uniform_X(rng, 60, 2);
    Model truth;
    truth.p = 2;
    truth.basis = basis;
    truth.root = TreeNode::make_leaf({1, 1, 0.5});
    label_with(d, truth);  // exactly representable; further insertions are idle

    FitConfig cfg;
    cfg.iters = 3;
    cfg.early_stop = false;
    const FitResult res = fit(d, basis, cfg);
    CHECK(res.trace.size() == 4);  // init + 3 committed insertions
    CHECK(res.model.root != nullptr);
    CHECK(leaf_count(*res.model.root) == 4);
    CHECK(res.rss <= 1e-16);  // idle insertions never regress

    cfg.early_stop = true;
    const FitResult stopped = fit(d, basis, cfg);
    CHECK(stopped.trace.size() <= 2);
}

TEST_CASE("fit: greedy RSS never increases across insertions") {
    auto basis = cat(5);
    Rng rng(808);
    for (int rep = 0; rep < 10; ++rep) {
        Dataset d = uniform_X(rng, 80, 3);
        for (double& v : d.y) v = rng.uniform(-1.0, 1.0);
        FitConfig cfg;
        cfg.iters = 4;
        cfg.early_stop = rep % 2 == 0;
        const FitResult res = fit(d, basis, cfg);
        double prev = std::numeric_limits<double>::infinity();
        for (const TraceRow& row : res.trace) {
            CHECK(row.rss <= prev + 1e-12);
            prev = row.rss;
        }
    }
}

TEST_CASE("coordinate_descent: fixed point and one-pass optimality") {
    auto basis = cat(6);
    Rng rng(77);
    Dataset d = uniform_X(rng, 500, 2);
    Model truth;
    truth.p = 2;
    truth.basis = basis;
    truth.intercept = 0.2;
    truth.root = TreeNode::make_leaf({3, 1, 0.6});  // sin(2 pi x), near-zero mean
    label_with(d, truth);

    // already optimal: one pass leaves it unchanged
    FitConfig cfg;
    Model same = coordinate_descent(truth, d, cfg);
    CHECK(same.intercept == Catch::Approx(0.2).margin(1e-12));
    CHECK(same.root->leaf.weight == Catch::Approx(0.6).margin(1e-12));

    // a small perturbation of the optimum returns to the closed-form fit in
    // one pass (one Gauss-Seidel sweep leaves a second-order residual)
    Model pert = truth;
    pert.intercept += 8e-7;
    pert.root->leaf.weight -= 1.3e-6;
    FitConfig one;
    one.cd_passes_max = 1;
    Model polished = coordinate_descent(pert, d, one);

    std::vector<double> ones(static_cast<std::size_t>(d.n), 1.0),
        zeros(static_cast<std::size_t>(d.n), 0.0), phi(static_cast<std::size_t>(d.n));
    for (int r = 0; r < d.n; ++r)
        phi[static_cast<std::size_t>(r)] = evaluate(basis->at(3), d.x(r, 0));
    const InsertionSolution direct = solve_insertion(d.y, ones, zeros, phi, OpKind::Plus);
    CHECK(rss(polished, d) == Catch::Approx(direct.rss).margin(1e-10));
}

TEST_CASE("coordinate_descent: RSS non-increasing in the pass count") {
    auto basis = cat(5);
    Rng rng(321);
    for (int rep = 0; rep < 100; ++rep) {
        const int k = 1 + static_cast<int>(rng.below(3));
        Dataset d = uniform_X(rng, 60, 3);
        Model m = testing::random_model(rng, k, basis, 3);
        for (int r = 0; r < d.n; ++r)
            d.y[static_cast<std::size_t>(r)] =
                evaluate(m, d.row(r)) + 0.1 * rng.normal();
        Model start = testing::random_model(rng, k, basis, 3);

        double prev = std::numeric_limits<double>::infinity();
        for (int passes = 1; passes <= 4; ++passes) {
            FitConfig cfg;
            cfg.cd_passes_max = passes;
            cfg.cd_rel_tol = 0.0;
            const double r = rss(coordinate_descent(start, d, cfg), d);
            CHECK(r <= prev + 1e-12);
            prev = r;
        }
    }
}

TEST_CASE("predict and risk") {
    auto basis = cat(3);
    Model m;
    m.p = 1;
    m.basis = basis;
    m.intercept = 0.0;
    m.root = TreeNode::make_leaf({1, 1, 0.5});

    Dataset d;
    d.n = 1;
    d.p = 1;
    d.X = {0.5};
    d.y = {evaluate(m, d.row(0))};
    CHECK(risk(m, d, RiskKind::Squared) == 0.0);
    CHECK(risk(m, d, RiskKind::Clipped) == 0.0);

    d.y = {evaluate(m, d.row(0)) + 2.0};  // one sample, residual 2
    CHECK(risk(m, d, RiskKind::Squared) == Catch::Approx(2.0).margin(1e-15));
    CHECK(risk(m, d, RiskKind::Clipped) == Catch::Approx(1.0).margin(1e-15));

    Rng rng(9);
    Dataset wide = uniform_X(rng, 40, 1);
    for (double& v : wide.y) v = rng.uniform(-3.0, 3.0);
    const double sq = risk(m, wide, RiskKind::Squared);
    const double cl = risk(m, wide, RiskKind::Clipped);
    CHECK(cl <= sq + 1e-15);
    CHECK(cl <= 1.0 + 1e-15);

    Dataset mismatch = uniform_X(rng, 5, 2);
    CHECK_THROWS_AS(predict(m, mismatch), std::invalid_argument);
}

TEST_CASE("hinge_loss_clipped: bounded classification metric") {
    CHECK(hinge_loss_clipped(1.0, 1.0) == 0.0);
    CHECK(hinge_loss_clipped(1.0, 0.5) == 0.5);
    CHECK(hinge_loss_clipped(1.0, 0.0) == 1.0);
    CHECK(hinge_loss_clipped(1.0, -3.0) == 1.0);   // clipped at 1
    CHECK(hinge_loss_clipped(-1.0, -2.0) == 0.0);  // margin beyond 1
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const double l = hinge_loss_clipped(rng.below(2) ? 1.0 : -1.0, rng.uniform(-3.0, 3.0));
        CHECK(l >= 0.0);
        CHECK(l <= 1.0);
    }
}

TEST_CASE("fit determinism, including across worker counts") {
    auto basis = cat(8);
    Rng rng(13579);
    Dataset d = uniform_X(rng, 150, 4);
    Model gen = testing::random_model(rng, 3, basis, 4);
    for (int r = 0; r < d.n; ++r)
        d.y[static_cast<std::size_t>(r)] = evaluate(gen, d.row(r)) + 0.05 * rng.normal();

    FitConfig cfg;
    cfg.iters = 4;
    cfg.jobs = 1;
    const FitResult a = fit(d, basis, cfg);
    const FitResult b = fit(d, basis, cfg);
    CHECK(serialize(a.model) == serialize(b.model));

    cfg.jobs = 4;
    const FitResult c = fit(d, basis, cfg);
    CHECK(serialize(a.model) == serialize(c.model));
    CHECK(a.rss == c.rss);
}
