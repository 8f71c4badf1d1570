#ifndef BELLSIM_EVOLUTION_HPP
#define BELLSIM_EVOLUTION_HPP

#include <complex>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bellsim/lattice.hpp"

namespace bellsim {

/// Pilot state over a sector basis. Kept normalized; the propagators check.
struct StateVector {
    Eigen::VectorXcd amps;
    double t = 0.0;

    double norm() const { return amps.norm(); }
    double probability(std::uint64_t rank) const { return std::norm(amps[rank]); }
};

enum class Integrator { eigendecomposition, rk4 };

struct EvolutionConfig {
    Integrator method = Integrator::eigendecomposition;
    double dt = 1e-3;                       // rk4 substep
    std::uint64_t eigen_threshold = 4096;   // densify + diagonalize up to here
    double norm_drift_tol = 1e-8;           // allowed drift per unit time (rk4)

    static EvolutionConfig automatic(std::uint64_t dimension) {
        EvolutionConfig cfg;
        cfg.method = dimension <= cfg.eigen_threshold ? Integrator::eigendecomposition
                                                      : Integrator::rk4;
        return cfg;
    }
};

/// Shareable propagator: the eigensystem (or the sparse H for rk4) is built
/// once, after which evolve() is a pure transition.
class Propagator {
public:
    Propagator(const SectorHamiltonian& h, EvolutionConfig cfg);

    StateVector evolve(const StateVector& state, double dt) const;

    /// Norm drift of the last rk4 evolve call, per unit time (0 for exact path).
    double last_norm_drift() const { return last_drift_; }

    const SectorHamiltonian& hamiltonian() const { return *h_; }
    const EvolutionConfig& config() const { return cfg_; }
    double energy(const StateVector& state) const;

private:
    const SectorHamiltonian* h_;
    EvolutionConfig cfg_;
    std::optional<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>> eigen_;
    mutable double last_drift_ = 0.0;

    StateVector evolve_spectral(const StateVector& state, double dt) const;
    StateVector evolve_rk4(const StateVector& state, double dt) const;
};

enum class EnergySign { positive, negative };

struct Orbital {
    double center = 0.0;     // x0
    double width = 1.0;      // sigma, >= 2 delta
    double momentum = 0.0;   // p0
    EnergySign energy = EnergySign::positive;
    double weight = 1.0;     // relative amplitude when superposed
};

struct PacketSpec {
    std::vector<Orbital> orbitals;  // one per quantum
    // optional richer form: several Gaussian components per quantum; when
    // non-empty this takes precedence over `orbitals`
    std::vector<std::vector<Orbital>> components;

    std::vector<std::vector<Orbital>> quanta() const;
    void validate(const LatticeParams& params) const;
};

/// Gaussian envelope times the staggered spinor weights: even sites carry the
/// upper component, odd sites the lower one.
Eigen::VectorXcd orbital_on_sites(const Orbital& orb, const LatticeParams& params);

/// Slater-determinant amplitudes of the per-quantum orbitals over the sector
/// basis, normalized. Throws DegenerateOrbitals when the orbital Gram matrix
/// is singular (the antisymmetrizer annihilates the product).
StateVector build_initial_packet(const SectorBasis& basis, const PacketSpec& spec);

} // namespace bellsim

#endif
