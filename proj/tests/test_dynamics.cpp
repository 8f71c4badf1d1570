#include <doctest.h>

#include <cmath>
#include <complex>

#include "bellsim/dynamics.hpp"

using namespace bellsim;

namespace {

LatticeParams lattice(int sites, int quanta, double mass = 0.0, double delta = 1.0) {
    LatticeParams p;
    p.sites = sites;
    p.delta = delta;
    p.mass = mass;
    p.quanta = quanta;
    return p;
}

Orbital packet(double center, double width, double momentum) {
    Orbital o;
    o.center = center;
    o.width = width;
    o.momentum = momentum;
    return o;
}

StateVector packet_state(const LatticeParams& p, const std::vector<Orbital>& orbitals) {
    PacketSpec spec;
    spec.orbitals = orbitals;
    return build_initial_packet(SectorBasis::enumerate(p), spec);
}

StateVector concentrated(std::uint64_t dim, std::uint64_t rank) {
    StateVector s;
    s.amps = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(dim));
    s.amps[static_cast<Eigen::Index>(rank)] = 1.0;
    return s;
}

} // namespace

TEST_CASE("currents vanish out of a concentrated state") {
    const SectorHamiltonian h = SectorHamiltonian::assemble(lattice(8, 1, 0.5));
    const TransitionCurrents tc = transition_currents(concentrated(8, 3), Configuration{3}, h);
    REQUIRE(tc.entries.size() == 2);
    for (const auto& e : tc.entries) CHECK(e.current == 0.0);
}

TEST_CASE("one-quantum currents match the nearest-neighbor rule") {
    const LatticeParams p = lattice(16, 1, 0.0, 0.5);
    const SectorHamiltonian h = SectorHamiltonian::assemble(p);
    const StateVector psi = packet_state(p, {packet(4.0, 1.5, 0.8)});

    for (int k = 3; k <= 13; ++k) {
        const TransitionCurrents tc = transition_currents(psi, Configuration{k}, h);
        REQUIRE(tc.entries.size() == 2);
        const double expected_right =
            (std::conj(psi.amps[k + 1]) * psi.amps[k]).real() / p.delta;
        const double expected_left =
            -(std::conj(psi.amps[k - 1]) * psi.amps[k]).real() / p.delta;
        for (const auto& e : tc.entries) {
            if (e.target == static_cast<std::uint64_t>(k + 1))
                CHECK(e.current == doctest::Approx(expected_right).epsilon(1e-12));
            else if (e.target == static_cast<std::uint64_t>(k - 1))
                CHECK(e.current == doctest::Approx(expected_left).epsilon(1e-12));
            else
                FAIL("unexpected transition target");
        }
    }
}

TEST_CASE("summed currents equal the probability derivative (finite differences)") {
    // two-quanta sector against an independent dP/dt oracle
    const LatticeParams p = lattice(8, 2, 0.5);
    const SectorHamiltonian h = SectorHamiltonian::assemble(p);
    const Propagator prop(h, EvolutionConfig::automatic(h.dimension()));
    const StateVector psi0 = packet_state(p, {packet(2.0, 2.0, 0.9), packet(6.0, 2.0, -0.5)});

    const double step = 1e-5;
    const StateVector bwd = prop.evolve(psi0, 0.37 - step);  // generic time
    const StateVector psi = prop.evolve(bwd, step);
    const StateVector fwd = prop.evolve(psi, step);

    for (std::uint64_t m = 0; m < h.dimension(); ++m) {
        double influx = 0.0;
        for (const auto& e : h.row(m)) {
            // J_mn over sources n adjacent to m
            const TransitionCurrents tc = transition_currents(psi, e.col, h);
            for (const auto& t : tc.entries)
                if (t.target == m) influx += t.current;
        }
        const double fd = (std::norm(fwd.amps[static_cast<Eigen::Index>(m)]) -
                           std::norm(bwd.amps[static_cast<Eigen::Index>(m)])) /
                          (2.0 * step);
        CHECK(influx == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("jump rates") {
    const LatticeParams p = lattice(16, 1, 0.0, 0.5);
    const SectorHamiltonian h = SectorHamiltonian::assemble(p);
    const StateVector psi = packet_state(p, {packet(4.0, 1.5, 0.4)});

    SUBCASE("positive currents only; leading-order pair keeps one direction") {
        const TransitionCurrents tc = transition_currents(psi, Configuration{8}, h);
        const JumpRateTable rates = jump_rates(tc, psi);
        int nonzero = 0;
        for (const auto& e : rates.entries) {
            CHECK(e.rate >= 0.0);
            if (e.rate > 0.0) {
                ++nonzero;
                CHECK(e.rate == doctest::Approx(e.current / rates.source_probability));
            }
        }
        CHECK(nonzero == 1);
        CHECK(rates.total_rate > 0.0);
    }

    SUBCASE("concentrated pilot state carries zero total rate") {
        const StateVector point = concentrated(16, 5);
        const JumpRateTable rates =
            jump_rates(transition_currents(point, Configuration{5}, h), point);
        CHECK(rates.total_rate == 0.0);
    }

    SUBCASE("a global phase changes nothing") {
        StateVector rotated = psi;
        rotated.amps *= std::exp(cplx(0.0, 1.234));
        const JumpRateTable a = jump_rates(transition_currents(psi, Configuration{8}, h), psi);
        const JumpRateTable b =
            jump_rates(transition_currents(rotated, Configuration{8}, h), rotated);
        REQUIRE(a.entries.size() == b.entries.size());
        for (std::size_t i = 0; i < a.entries.size(); ++i)
            CHECK(a.entries[i].rate == doctest::Approx(b.entries[i].rate).epsilon(1e-12));
    }

    SUBCASE("vanishing source probability is a diagnostic error") {
        const StateVector point = concentrated(16, 5);
        CHECK_THROWS_AS(jump_rates(transition_currents(point, Configuration{9}, h), point),
                        SourceProbabilityUnderflow);
    }
}

TEST_CASE("trajectories: determinism, locality, and early concentration") {
    const LatticeParams p = lattice(16, 1, 0.0, 0.5);
    const SectorHamiltonian h = SectorHamiltonian::assemble(p);
    const Propagator prop(h, EvolutionConfig::automatic(h.dimension()));

    SUBCASE("a concentrated state does not move before support spreads") {
        const StateVector point = concentrated(16, 6);
        const Trajectory traj =
            simulate_trajectory(Configuration{6}, prop, point, 0.05, 1e-3, 42);
        CHECK(traj.jumps.empty());
        CHECK(traj.configs.back() == 6);
    }

    SUBCASE("fixed seed reproduces the jump log bit for bit") {
        const StateVector psi = packet_state(p, {packet(4.0, 1.5, 0.9)});
        const Trajectory a = simulate_trajectory(Configuration{8}, prop, psi, 2.0, 1e-3, 7);
        const Trajectory b = simulate_trajectory(Configuration{8}, prop, psi, 2.0, 1e-3, 7);
        REQUIRE(a.jumps.size() == b.jumps.size());
        for (std::size_t i = 0; i < a.jumps.size(); ++i) {
            CHECK(a.jumps[i].time == b.jumps[i].time);
            CHECK(a.jumps[i].from == b.jumps[i].from);
            CHECK(a.jumps[i].to == b.jumps[i].to);
        }
    }

    SUBCASE("every jump moves one quantum by one periodic site") {
        const LatticeParams p2 = lattice(8, 2, 0.5);
        const SectorHamiltonian h2 = SectorHamiltonian::assemble(p2);
        const Propagator prop2(h2, EvolutionConfig::automatic(h2.dimension()));
        const StateVector psi =
            packet_state(p2, {packet(2.0, 2.0, 0.9), packet(6.0, 2.0, -0.5)});
        const Trajectory traj =
            simulate_trajectory(SectorBasis::enumerate(p2).unrank(5), prop2, psi, 3.0, 1e-3, 3);
        const SectorBasis basis = SectorBasis::enumerate(p2);
        for (const JumpEvent& j : traj.jumps) {
            Configuration a = basis.unrank(j.from);
            Configuration b = basis.unrank(j.to);
            std::vector<int> gone, born;
            std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                                std::back_inserter(gone));
            std::set_difference(b.begin(), b.end(), a.begin(), a.end(),
                                std::back_inserter(born));
            REQUIRE(gone.size() == 1);
            REQUIRE(born.size() == 1);
            const int hop = std::abs(gone[0] - born[0]);
            CHECK((hop == 1 || hop == p2.sites - 1));
        }
    }

    SUBCASE("rightward packet drifts right") {
        const StateVector psi = packet_state(p, {packet(2.0, 1.5, 0.9)});
        const PilotTimeline timeline(prop, psi, 3.0, 1e-3);
        double mean = 0.0;
        for (int k = 0; k < 40; ++k) {
            TrajectoryOptions opts;
            opts.seed = splitmix64(1000 + k);
            opts.sample_stride = 0;
            const Trajectory t = run_trajectory(timeline, 4, opts);
            mean += static_cast<double>(t.net_displacement);
        }
        mean /= 40.0;
        CHECK(mean > 0.5);
    }

    SUBCASE("oversized substeps overflow the rate cap") {
        const StateVector psi = packet_state(p, {packet(4.0, 1.5, 0.9)});
        CHECK_THROWS_AS(simulate_trajectory(Configuration{8}, prop, psi, 1.0, 0.2, 1),
                        RateStepOverflow);
    }
}

TEST_CASE("master equation keeps |psi|^2 equivariant") {
    for (int quanta : {1, 2}) {
        const LatticeParams p = lattice(8, quanta, 0.5);
        const SectorHamiltonian h = SectorHamiltonian::assemble(p);
        const Propagator prop(h, EvolutionConfig::automatic(h.dimension()));
        StateVector psi;
        if (quanta == 1) psi = packet_state(p, {packet(4.0, 2.0, 0.7)});
        else psi = packet_state(p, {packet(2.0, 2.0, 0.7), packet(6.0, 2.0, -0.4)});

        Eigen::VectorXd p0(psi.amps.size());
        for (Eigen::Index i = 0; i < p0.size(); ++i) p0[i] = std::norm(psi.amps[i]);

        const MasterEquationResult res = master_equation_evolve(p0, prop, psi, 1.0, 1e-3);
        CHECK(res.max_equivariance_residual <= 1e-6);
        CHECK(res.normalization_defect <= 1e-9);
    }
}

TEST_CASE("master equation from a concentrated distribution starts flat") {
    const LatticeParams p = lattice(8, 1, 0.5);
    const SectorHamiltonian h = SectorHamiltonian::assemble(p);
    const Propagator prop(h, EvolutionConfig::automatic(h.dimension()));
    const StateVector point = concentrated(8, 4);
    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(8);
    p0[4] = 1.0;
    const MasterEquationResult res = master_equation_evolve(p0, prop, point, 0.01, 1e-4, 10);
    // rates are zero at t=0 and grow linearly, so P moves at most O(t^2)
    CHECK((res.probabilities.back() - p0).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("master equation tracks a quenched mismatch without losing normalization") {
    const LatticeParams p = lattice(8, 1, 0.5);
    const SectorHamiltonian h = SectorHamiltonian::assemble(p);
    const Propagator prop(h, EvolutionConfig::automatic(h.dimension()));
    const StateVector psi = packet_state(p, {packet(4.0, 2.0, 0.7)});

    const Eigen::VectorXd p0 = Eigen::VectorXd::Constant(8, 1.0 / 8.0);
    const MasterEquationResult res = master_equation_evolve(p0, prop, psi, 1.0, 1e-3);
    CHECK(res.normalization_defect <= 1e-9);
    // no convergence claim; the residual is only recorded
    CHECK(res.max_equivariance_residual > 0.0);
}

TEST_CASE("ensemble statistics stay inside the multinomial noise bound") {
    const LatticeParams p = lattice(8, 1, 0.5);
    const SectorHamiltonian h = SectorHamiltonian::assemble(p);
    const Propagator prop(h, EvolutionConfig::automatic(h.dimension()));
    const StateVector psi = packet_state(p, {packet(4.0, 2.0, 0.7)});
    const PilotTimeline timeline(prop, psi, 0.5, 1e-3);

    const EnsembleResult ens = run_ensemble(timeline, 4000, 99, {0.0, 0.5}, 2);
    const EquivarianceReport rep = equivariance_statistics(ens, timeline);
    REQUIRE(rep.checkpoints.size() == 2);
    for (const auto& cp : rep.checkpoints) {
        CHECK(cp.tv_distance <= cp.noise_bound);
        CHECK(cp.z_fraction_above <= 0.01);
    }
}

TEST_CASE("ensemble reduction does not depend on the thread count") {
    const LatticeParams p = lattice(8, 1, 0.5);
    const SectorHamiltonian h = SectorHamiltonian::assemble(p);
    const Propagator prop(h, EvolutionConfig::automatic(h.dimension()));
    const StateVector psi = packet_state(p, {packet(4.0, 2.0, 0.7)});
    const PilotTimeline timeline(prop, psi, 0.3, 1e-3);

    const EnsembleResult a = run_ensemble(timeline, 500, 7, {0.3}, 1);
    const EnsembleResult b = run_ensemble(timeline, 500, 7, {0.3}, 2);
    CHECK(a.checkpoint_counts == b.checkpoint_counts);
    CHECK(a.net_displacement == b.net_displacement);
}
