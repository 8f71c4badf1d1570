#ifndef BELLSIM_FOCK_HPP
#define BELLSIM_FOCK_HPP

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bellsim/lattice.hpp"

namespace bellsim {

/// Dense operator on a 2^M-dimensional occupation-number space. Deliberately
/// brute force: this is the cross-check side of every lattice identity.
struct OperatorMatrix {
    Eigen::MatrixXcd mat;
    std::string label;
};

enum class Species { electron, positron };

struct Mode {
    double momentum = 0.0;
    Species species = Species::electron;
};

/// Momentum modes entering a finite-mode field expansion. Dimension of the
/// resulting space is 2^M, so M is capped (default 8). Modes are kept in
/// (species, momentum) order; that order fixes every string sign.
struct ModeSet {
    std::vector<Mode> modes;
    double mass = 1.0;
    double momentum_spacing = 0.0;  // dp of the discrete momentum grid
    int cap = 8;

    static ModeSet make(std::vector<double> electron_momenta,
                        std::vector<double> positron_momenta,
                        double mass, double momentum_spacing, int cap = 8);

    int size() const { return static_cast<int>(modes.size()); }
    double box_length() const { return 2.0 * M_PI / momentum_spacing; }
    int index_of(Species s, double momentum) const;  // -1 when absent
    void validate() const;
};

struct SpinorBasis {
    Eigen::Vector2cd u;
    Eigen::Vector2cd v;
    double energy = 0.0;
};

/// u(p) ~ (1, p/(m+E)), v(p) ~ (p/(m+E), 1), both scaled to u^+u = v^+v = E/m.
SpinorBasis dirac_spinors(double p, double m);

/// Ladder operators for `count` two-level modes with the string-sign
/// convention: a_i flips bit i and picks up (-1)^(occupied modes below i).
/// Entries are exactly 0 or +-1.
struct ModeOperators {
    std::vector<OperatorMatrix> annihilate;
    std::vector<OperatorMatrix> create;
    int mode_count = 0;

    Eigen::Index dim() const { return Eigen::Index(1) << mode_count; }
};

ModeOperators build_mode_operators(int count, int cap = 8);
ModeOperators build_mode_operators(const ModeSet& modes);

/// Index of the Fock basis vector with the given modes occupied.
Eigen::Index fock_index(const std::vector<int>& occupied_modes, int mode_count);

struct SmearedCommutatorResult {
    OperatorMatrix commutator;           // [ integral f psi^+ psi, N ]
    cplx pair_element;                   // <0| C d^+(p0) c^+(p0) |0>
    cplx pair_element_closed_form;       // same element from the mode algebra
    double grid_spacing = 0.0;
};

/// Commutator of the f-smeared density with the particle number, on the
/// finite mode set. The x-grid must tile the periodic box of the momentum
/// grid: dx * dp * points = 2 pi.
SmearedCommutatorResult smeared_density_commutator(const std::vector<double>& f_samples,
                                                   double dx,
                                                   const ModeSet& modes,
                                                   double pair_momentum);

/// Full-space staggered Hamiltonian built from site-mode ladder matrices;
/// cross-check target for SectorHamiltonian::assemble.
struct FockOracle {
    OperatorMatrix hamiltonian;
    OperatorMatrix fermion_number;
    ModeOperators site_ops;
};

FockOracle oracle_sector_hamiltonian(const LatticeParams& params, int cap = 8);

/// Restriction of a full-space operator to the fermion-number-omega block,
/// rows/columns ordered to match SectorBasis ranks.
Eigen::MatrixXcd sector_block(const OperatorMatrix& op, const LatticeParams& params);

} // namespace bellsim

#endif
