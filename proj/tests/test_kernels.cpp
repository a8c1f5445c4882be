#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "memwave/kernels.hpp"
#include "memwave/rng.hpp"

using namespace memwave;

namespace {

// test-only adaptive Simpson oracle, independent of the closed forms under test
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int depth = 0) {
    double c = 0.5 * (a + b);
    double fa = f(a), fb = f(b), fc = f(c);
    double s = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    double lc = 0.5 * (a + c), rc = 0.5 * (c + b);
    double sl = (c - a) / 6.0 * (fa + 4.0 * f(lc) + fc);
    double sr = (b - c) / 6.0 * (fc + 4.0 * f(rc) + fb);
    if (depth > 40 || std::abs(sl + sr - s) < 15.0 * tol) return sl + sr + (sl + sr - s) / 15.0;
    return adaptive_simpson(f, a, c, 0.5 * tol, depth + 1) +
           adaptive_simpson(f, c, b, 0.5 * tol, depth + 1);
}

double oracle_tail_mass(const std::function<double(double)>& mu, double S, double cutoff) {
    return adaptive_simpson(mu, S, cutoff, 1e-14);
}

MemoryKernel sampled_kernel(const std::function<double(double)>& mu,
                            const std::function<double(double)>& dmu, double s_end, int n) {
    std::vector<double> s(n), m(n), dm(n);
    for (int i = 0; i < n; ++i) {
        s[i] = s_end * i / (n - 1.0);
        m[i] = mu(s[i]);
        dm[i] = dmu(s[i]);
    }
    return MemoryKernel::tabulated(s, m, dm);
}

} // namespace

TEST_CASE("exponential kernel 0.5 e^{-s} passes all hypotheses with exact constants") {
    auto k = MemoryKernel::exponential(0.5, 1.0);
    auto rep = validate_kernel(k);
    CHECK(rep.mu0 == 0.5);
    CHECK(rep.mu_tilde == 0.5);
    CHECK(rep.delta == 1.0);
    CHECK(rep.usable());
    CHECK(k.validated_usable());
}

TEST_CASE("kernel with mass >= 1 fails hypothesis (iii)") {
    auto k = MemoryKernel::exponential(2.0, 1.0);
    auto rep = validate_kernel(k);
    CHECK(rep.mu_tilde == 2.0);
    CHECK_FALSE(rep.mass_below_one);
    CHECK(rep.smooth_integrable);
    CHECK(rep.exponential_decay);
    CHECK_FALSE(rep.usable());
    CHECK(rep.failure_reason() == "(iii)");
}

TEST_CASE("(1+s)e^{-s} has mu'(0) = 0 and fails hypothesis (iv)") {
    auto mu = [](double s) { return (1.0 + s) * std::exp(-s); };
    auto dmu = [](double s) { return -s * std::exp(-s); };
    auto k = sampled_kernel(mu, dmu, 40.0, 4001);
    auto rep = validate_kernel(k);
    CHECK(rep.delta == 0.0);
    CHECK_FALSE(rep.exponential_decay);
    CHECK_FALSE(rep.usable());

    // scaled variant with mass < 1 isolates the (iv) failure
    auto k2 = sampled_kernel([&](double s) { return 0.25 * mu(s); },
                             [&](double s) { return 0.25 * dmu(s); }, 40.0, 4001);
    auto rep2 = validate_kernel(k2);
    CHECK(rep2.mass_below_one);
    CHECK_FALSE(rep2.exponential_decay);
    CHECK(rep2.failure_reason() == "(iv)");
}

TEST_CASE("tail mass closed forms") {
    auto k = MemoryKernel::exponential(0.5, 1.0);
    validate_kernel(k);
    CHECK(kernel_tail_mass(k, 0.0) == Catch::Approx(0.5).epsilon(1e-13));
    CHECK(kernel_tail_mass(k, std::log(2.0)) == Catch::Approx(0.25).epsilon(1e-13));

    auto p = MemoryKernel::prony({{1.0, 1.0}, {1.0, 2.0}});
    double expected = std::exp(-1.0) + 0.5 * std::exp(-2.0);
    CHECK(kernel_tail_mass(p, 1.0) == Catch::Approx(expected).epsilon(1e-13));
    double oracle = oracle_tail_mass(
        [&](double s) { return std::exp(-s) + std::exp(-2.0 * s); }, 1.0, 60.0);
    CHECK(kernel_tail_mass(p, 1.0) == Catch::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("tail mass at zero equals mu_tilde and decays monotonically") {
    Rng rng(0xC0FFEE);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<PronyTerm> terms;
        int nt = 1 + static_cast<int>(rng.uniform(0.0, 3.0));
        for (int j = 0; j < nt; ++j) terms.push_back({rng.uniform(0.05, 1.0), rng.uniform(0.2, 4.0)});
        auto k = MemoryKernel::prony(terms);
        auto rep = validate_kernel(k);
        double mt = 0.0, dmin = 1e300;
        for (auto& t : terms) {
            mt += t.a / t.d;
            dmin = std::min(dmin, t.d);
        }
        CHECK(rep.mu_tilde == Catch::Approx(mt).epsilon(1e-14));
        CHECK(rep.delta == Catch::Approx(dmin).epsilon(1e-14));
        CHECK(rep.mass_below_one == (mt < 1.0));

        CHECK(kernel_tail_mass(k, 0.0) == Catch::Approx(rep.mu_tilde).epsilon(1e-12));
        double prev = kernel_tail_mass(k, 0.0);
        for (double S = 0.25; S < 300.0; S *= 2.0) {
            double cur = kernel_tail_mass(k, S);
            CHECK(cur <= prev + 1e-15);
            prev = cur;
        }
        CHECK(prev < 1e-12 * rep.mu_tilde);
    }
}

TEST_CASE("validated kernels satisfy mu' + delta mu <= tol on the hypothesis grid") {
    std::vector<MemoryKernel> kernels;
    kernels.push_back(MemoryKernel::exponential(0.5, 1.0));
    kernels.push_back(MemoryKernel::prony({{0.2, 0.5}, {0.1, 3.0}}));
    kernels.push_back(sampled_kernel([](double s) { return 0.5 * std::exp(-s); },
                                     [](double s) { return -0.5 * std::exp(-s); }, 40.0, 2001));
    for (auto& k : kernels) {
        auto rep = validate_kernel(k);
        REQUIRE(rep.usable());
        for (double s : hypothesis_grid(k))
            CHECK(k.deriv(s) + rep.delta * k.eval(s) <= 1e-12 * rep.mu0);
    }
}

TEST_CASE("malformed tabulated input is rejected") {
    CHECK_THROWS_AS(MemoryKernel::tabulated({0.0, 1.0, 0.5}, {1.0, 0.5, 0.7}, {-1.0, -0.5, -0.7}),
                    MalformedInput);
    CHECK_THROWS_AS(MemoryKernel::tabulated({0.1, 1.0}, {1.0, 0.5}, {-1.0, -0.5}),
                    MalformedInput);
    CHECK_THROWS_AS(MemoryKernel::exponential(-1.0, 1.0), MalformedInput);
    CHECK_THROWS_AS(MemoryKernel::prony({}), MalformedInput);
}

TEST_CASE("tabulated tail mass beyond the sample range throws") {
    auto k = sampled_kernel([](double s) { return 0.5 * std::exp(-s); },
                            [](double s) { return -0.5 * std::exp(-s); }, 10.0, 101);
    validate_kernel(k);
    CHECK_THROWS_AS(kernel_tail_mass(k, 11.0), ExtrapolationError);
    CHECK_NOTHROW(kernel_tail_mass(k, 9.5));
}

TEST_CASE("non-integrable tabulated tail fails (iii) without throwing") {
    // growing samples: the fitted tail rate is nonpositive, mass diverges
    auto k = sampled_kernel([](double s) { return 0.1 + 0.01 * s; }, [](double) { return 0.01; },
                            10.0, 51);
    auto rep = validate_kernel(k);
    CHECK_FALSE(rep.mass_below_one);
    CHECK_FALSE(rep.usable());
}

TEST_CASE("history span honors the tail-mass criterion") {
    auto k = MemoryKernel::prony({{0.3, 0.7}, {0.2, 2.0}});
    validate_kernel(k);
    double span = choose_history_span(k);
    CHECK(kernel_tail_mass(k, span) <= 1.0000001e-10 * k.mu_tilde());
    // not absurdly conservative either
    CHECK(kernel_tail_mass(k, 0.5 * span) > 1e-12 * k.mu_tilde());
}
