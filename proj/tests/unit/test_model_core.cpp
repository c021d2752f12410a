#include <catch_amalgamated.hpp>

#include <random>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/roots.hpp>

#include "backaction/backaction.hpp"

using namespace backaction;
using Catch::Approx;

namespace {

// Independent oracle: numerical eigenvalues of the drift matrix on (a*, b).
std::pair<cdouble, cdouble> eigen_oracle(const SystemParams& p, double delta) {
    Eigen::Matrix2cd m;
    m << cdouble(-0.5 * p.kappa(), delta), cdouble(0.0, p.g), cdouble(0.0, -p.g), cdouble(-0.5 * p.gamma_m, 0.0);
    Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(m);
    cdouble l1 = es.eigenvalues()[0];
    cdouble l2 = es.eigenvalues()[1];
    if (l2.real() > l1.real()) std::swap(l1, l2);
    return {l1, l2};
}

SystemParams simple(double kappa, double gamma, double g) {
    SystemParams p = default_device();
    p.kappa_0 = 0.5 * kappa;
    p.kappa_ex = 0.5 * kappa;
    p.gamma_m = gamma;
    p.g = g;
    return p;
}

}  // namespace

TEST_CASE("default device parameters") {
    const SystemParams p = default_device();
    CHECK(rad_to_hz(p.omega_c) == Approx(4.08e9));
    CHECK(rad_to_hz(p.omega_m) == Approx(6.5e6));
    CHECK(rad_to_hz(p.g0) == Approx(60.0));
    CHECK(rad_to_hz(p.gamma_m) == Approx(440e3));
    CHECK(rad_to_hz(p.kappa()) == Approx(176e3));
    CHECK(p.gamma_m / p.kappa() == Approx(2.5));
    CHECK(p.violations().empty());
}

TEST_CASE("parameter invariants") {
    SystemParams p = default_device();
    p.kappa_0 = -1.0;
    REQUIRE_THROWS_AS(p.validated(), ParameterError);
    try {
        p.validated();
    } catch (const ParameterError& e) {
        REQUIRE(e.violations().size() == 1);
        CHECK(e.violations()[0].find("kappa_0") != std::string::npos);
    }

    SystemParams q = default_device();
    q.omega_m = 5.0 * q.kappa();
    q.gamma_m = 0.5 * q.omega_m;
    CHECK_THROWS_AS(q.validated(), ParameterError);
    q.allow_unresolved_sidebands = true;
    CHECK_NOTHROW(q.validated());

    SystemParams r = default_device();
    r.gamma_m = r.omega_m;  // quality factor 1
    CHECK_THROWS_AS(r.validated(), ParameterError);

    SystemParams s = default_device();
    s.g0 = 0.0;
    s.gamma_m = -1.0;
    CHECK(s.violations().size() >= 2);
}

TEST_CASE("cooperativity") {
    SystemParams p = default_device();
    p.g = 0.0;
    CHECK(cooperativity(p) == 0.0);
    p.g = 0.5 * std::sqrt(p.kappa() * p.gamma_m);
    CHECK(cooperativity(p) == Approx(1.0).epsilon(1e-14));
    CHECK(rad_to_hz(p.g) == Approx(139.1e3).epsilon(1e-3));
    const double c1 = cooperativity(p);
    p.g *= 2.0;
    CHECK(cooperativity(p) == Approx(4.0 * c1));
}

TEST_CASE("linear eigenvalues: closed forms") {
    // kappa = 1, gamma = 10, g = 1: -11/4 +- sqrt(81/16 + 1)
    const SystemParams p = simple(1.0, 10.0, 1.0);
    const auto [l1, l2] = linear_eigenvalues(p, 0.0);
    const double root = std::sqrt(81.0 / 16.0 + 1.0);
    CHECK(l1.real() == Approx(-11.0 / 4.0 + root).epsilon(1e-14));
    CHECK(l2.real() == Approx(-11.0 / 4.0 - root).epsilon(1e-14));
    CHECK(l1.real() == Approx(-0.2878).epsilon(1e-4));
    CHECK(l2.real() == Approx(-5.2122).epsilon(1e-4));
    CHECK(std::abs(l1.imag()) < 1e-15);

    const auto [d1, d2] = linear_eigenvalues(simple(3.0, 7.0, 0.0), 0.0);
    CHECK(d1 == cdouble(-1.5, 0.0));
    CHECK(d2 == cdouble(-3.5, 0.0));
}

TEST_CASE("linear eigenvalues agree with a numerical eigensolver") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double kappa = std::pow(10.0, 6.0 * u(rng));
        const double gamma = kappa * std::pow(10.0, -3.0 + 6.0 * u(rng));
        const double g = std::sqrt(kappa * gamma) * 2.0 * u(rng);
        const double delta = (u(rng) - 0.5) * 4.0 * std::max(kappa, gamma);
        const SystemParams p = simple(kappa, gamma, g);
        const auto [a1, a2] = linear_eigenvalues(p, delta);
        const auto [e1, e2] = eigen_oracle(p, delta);
        const double scale = kappa + gamma + g + std::abs(delta);
        CHECK(std::abs(a1 - e1) < 1e-12 * scale);
        CHECK(std::abs(a2 - e2) < 1e-12 * scale);
        // Characteristic polynomial residual
        const cdouble m11(-0.5 * kappa, delta);
        const cdouble m22(-0.5 * gamma, 0.0);
        for (cdouble l : {a1, a2}) CHECK(std::abs((l - m11) * (l - m22) - g * g) < 1e-12 * scale * scale);
    }
}

TEST_CASE("threshold identity: sign of max Re lambda follows C - 1") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double kappa = std::pow(10.0, 3.0 + 4.0 * u(rng));
        const double gamma = kappa * std::pow(10.0, -2.0 + 4.0 * u(rng));
        SystemParams p = simple(kappa, gamma, 0.0);
        const double c = 2.0 * u(rng);
        p.g = coupling_for_cooperativity(p, c);
        const double re = linear_eigenvalues(p, 0.0).first.real();
        if (c < 0.999) CHECK(re < 0.0);
        if (c > 1.001) CHECK(re > 0.0);
        p.g = masing_threshold_g(p);
        CHECK(std::abs(linear_eigenvalues(p, 0.0).first.real()) < 1e-9 * kappa);
    }
}

TEST_CASE("masing threshold matches eigenvalue root finding") {
    SystemParams p = default_device();
    auto f = [&](double g) {
        SystemParams q = p;
        q.g = g;
        return linear_eigenvalues(q, 0.0).first.real();
    };
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t iters = 200;
    const auto [lo, hi] = boost::math::tools::toms748_solve(f, 0.0, p.gamma_m, tol, iters);
    const double root = 0.5 * (lo + hi);
    CHECK(masing_threshold_g(p) == Approx(root).epsilon(1e-12));
    CHECK(rad_to_hz(masing_threshold_g(p)) == Approx(139.1e3).epsilon(1e-3));
    const double gth = masing_threshold_g(p);
    CHECK(gth * gth * 4.0 / (p.kappa() * p.gamma_m) == Approx(1.0).epsilon(1e-15));
    SystemParams tiny = simple(1e-12, 1.0, 0.0);
    CHECK(masing_threshold_g(tiny) < 1e-6);
}

TEST_CASE("cavity self-energy closed forms") {
    SystemParams p = simple(1.0, 100.0, 3.0);
    const auto s0 = cavity_self_energy(p, 0.0);
    CHECK(s0.damping_shift == Approx(-4.0 * 9.0 / 100.0));
    CHECK(s0.damping_shift == Approx(-p.kappa() * cooperativity(p)));
    CHECK(s0.frequency_shift == 0.0);
    const auto sh = cavity_self_energy(p, 50.0);
    CHECK(sh.damping_shift == Approx(-2.0 * 9.0 / 100.0));
    CHECK(std::abs(sh.frequency_shift) == Approx(9.0 * 50.0 / (2500.0 + 2500.0)));
    p.g = 0.0;
    CHECK(cavity_self_energy(p, 10.0).damping_shift == 0.0);
    CHECK(cavity_self_energy(p, 10.0).frequency_shift == 0.0);
}

TEST_CASE("cavity self-energy signs pinned against the eigenvalue oracle") {
    // gamma/kappa = 100, C = 0.5, delta = gamma/2: damping shift within 2 %.
    SystemParams p = simple(1.0, 100.0, 0.0);
    p.g = coupling_for_cooperativity(p, 0.5);
    for (double delta : {-50.0, -10.0, 10.0, 50.0}) {
        const auto s = cavity_self_energy(p, delta);
        const cdouble slow = eigen_oracle(p, delta).first;
        const double eigen_damping_shift = -2.0 * slow.real() - p.kappa();
        const double eigen_frequency_shift = slow.imag() - delta;
        CHECK(s.damping_shift == Approx(eigen_damping_shift).epsilon(0.02));
        CHECK(s.frequency_shift == Approx(eigen_frequency_shift).epsilon(0.02));
    }
}

TEST_CASE("mechanical self-energy") {
    SystemParams p = simple(100.0, 1.0, 0.0);
    p.g = std::sqrt(p.kappa() * p.gamma_m / 4.0);
    CHECK(mechanical_self_energy(p, 0.0).damping_shift == Approx(-p.gamma_m));
    CHECK(mechanical_self_energy(p, 0.0).frequency_shift == 0.0);

    p.g = coupling_for_cooperativity(p, 0.5);
    for (double delta : {0.0, -30.0, 30.0}) {
        const auto s = mechanical_self_energy(p, delta);
        // With the cavity fast, the slow eigenvalue is mechanical.
        const cdouble slow = eigen_oracle(p, delta).first;
        CHECK(-2.0 * slow.real() == Approx(p.gamma_m + s.damping_shift).epsilon(0.02));
        if (delta != 0.0) CHECK(slow.imag() == Approx(s.frequency_shift).epsilon(0.02));
    }
    p.g = 0.0;
    CHECK(mechanical_self_energy(p, 5.0).damping_shift == 0.0);
    CHECK(mechanical_self_energy(p, 5.0).frequency_shift == 0.0);
}

TEST_CASE("self-energy parity and kappa-gamma swap symmetry") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    for (int i = 0; i < 200; ++i) {
        SystemParams p = simple(u(rng), u(rng), u(rng));
        const double d = u(rng) - 5.0;
        const auto c_plus = cavity_self_energy(p, d);
        const auto c_minus = cavity_self_energy(p, -d);
        CHECK(c_plus.damping_shift == Approx(c_minus.damping_shift));
        CHECK(c_plus.frequency_shift == Approx(-c_minus.frequency_shift));
        const auto m_plus = mechanical_self_energy(p, d);
        const auto m_minus = mechanical_self_energy(p, -d);
        CHECK(m_plus.damping_shift == Approx(m_minus.damping_shift));
        CHECK(m_plus.frequency_shift == Approx(-m_minus.frequency_shift));

        SystemParams swapped = simple(p.gamma_m, p.kappa(), p.g);
        const auto ms = mechanical_self_energy(swapped, d);
        CHECK(ms.damping_shift == Approx(c_plus.damping_shift));
        CHECK(ms.frequency_shift == Approx(c_minus.frequency_shift));
    }
}

TEST_CASE("adiabatic agreement of cavity self-energy with the slow eigenvalue") {
    for (double ratio : {10.0, 30.0, 100.0, 300.0}) {
        for (double c : {0.1, 0.5, 0.9}) {
            SystemParams p = simple(1.0, ratio, 0.0);
            p.g = coupling_for_cooperativity(p, c);
            const double exact = -2.0 * linear_eigenvalues(p, 0.0).first.real();
            const double approx = p.kappa() + cavity_self_energy(p, 0.0).damping_shift;
            CHECK(std::abs(exact - approx) / exact <= 3.0 / ratio);
        }
    }
}

TEST_CASE("effective mechanical damping") {
    CHECK(effective_mechanical_damping(5.0, 0.0) == 5.0);
    CHECK(rad_to_hz(effective_mechanical_damping(hz_to_rad(100.0), 4399.0)) == Approx(440e3));
    CHECK(effective_mechanical_damping(hz_to_rad(100.0), 4399.0) / default_device().kappa() == Approx(2.5));
    CHECK_THROWS(effective_mechanical_damping(1.0, -0.1));
}

TEST_CASE("pump power to multiphoton coupling") {
    const SystemParams p = default_device();
    CHECK(pump_to_multiphoton_g(0.0, p) == 0.0);
    CHECK_THROWS(pump_to_multiphoton_g(-1e-9, p));
    const double g1 = pump_to_multiphoton_g(1e-6, p);
    const double g2 = pump_to_multiphoton_g(2e-6, p);
    CHECK(g2 == Approx(std::sqrt(2.0) * g1));
    SystemParams a = with_coupling(p, g1);
    SystemParams b = with_coupling(p, g2);
    CHECK(cavity_self_energy(b, 0.0).damping_shift == Approx(2.0 * cavity_self_energy(a, 0.0).damping_shift));

    // Independent evaluation of the input-output relation
    const double kappa = p.kappa();
    const double delta = p.omega_m + p.pump_detuning;
    const double n = p.kappa_ex / (0.25 * kappa * kappa + delta * delta) * 1e-6 / (kHbar * p.pump_frequency());
    CHECK(g1 == Approx(p.g0 * std::sqrt(n)));

    const double p_th = pump_power_for_g(masing_threshold_g(p), p);
    CHECK(cooperativity(with_coupling(p, pump_to_multiphoton_g(p_th, p))) == Approx(1.0).epsilon(1e-12));

    // kappa_DBA linear in pump power over a sweep
    const double slope = cavity_self_energy(with_coupling(p, pump_to_multiphoton_g(1e-6, p)), 0.0).damping_shift / 1e-6;
    for (double w : {1e-9, 1e-7, 1e-5, 1e-3}) {
        CHECK(cavity_self_energy(with_coupling(p, pump_to_multiphoton_g(w, p)), 0.0).damping_shift ==
              Approx(slope * w).epsilon(1e-12));
    }
    CHECK(pump_amplitude_for_g(g1, p) * pump_amplitude_for_g(g1, p) == Approx(watts_to_photon_flux(1e-6, p.pump_frequency())));
}
