#include "bellsim/fock.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace bellsim {

namespace {

const cplx kI(0.0, 1.0);

} // namespace

ModeSet ModeSet::make(std::vector<double> electron_momenta, std::vector<double> positron_momenta,
                      double mass, double momentum_spacing, int cap) {
    std::sort(electron_momenta.begin(), electron_momenta.end());
    std::sort(positron_momenta.begin(), positron_momenta.end());
    ModeSet set;
    set.mass = mass;
    set.momentum_spacing = momentum_spacing;
    set.cap = cap;
    for (double p : electron_momenta) set.modes.push_back({p, Species::electron});
    for (double p : positron_momenta) set.modes.push_back({p, Species::positron});
    set.validate();
    return set;
}

void ModeSet::validate() const {
    if (size() > cap)
        throw ModeCapExceeded("mode count " + std::to_string(size()) + " exceeds cap " +
                              std::to_string(cap));
    if (!(mass > 0.0)) throw ConfigError("mode set mass must be positive");
    if (!(momentum_spacing > 0.0)) throw ConfigError("momentum spacing must be positive");
    for (int i = 1; i < size(); ++i) {
        const auto& a = modes[i - 1];
        const auto& b = modes[i];
        const bool ordered = a.species < b.species ||
                             (a.species == b.species && a.momentum < b.momentum);
        if (!ordered)
            throw ConfigError("modes must be strictly ordered by (species, momentum)");
    }
}

int ModeSet::index_of(Species s, double momentum) const {
    for (int i = 0; i < size(); ++i)
        if (modes[i].species == s && modes[i].momentum == momentum) return i;
    return -1;
}

SpinorBasis dirac_spinors(double p, double m) {
    if (!(m > 0.0)) throw ConfigError("dirac_spinors requires m > 0");
    SpinorBasis s;
    s.energy = std::hypot(p, m);
    const double a = p / (m + s.energy);
    // (1, a) and (a, 1) rescaled so u^+u = v^+v = E/m
    const double scale = std::sqrt((m + s.energy) / (2.0 * m));
    s.u << scale, scale * a;
    s.v << scale * a, scale;
    return s;
}

ModeOperators build_mode_operators(int count, int cap) {
    if (count < 0) throw ConfigError("mode count must be nonnegative");
    if (count > cap)
        throw ModeCapExceeded("mode count " + std::to_string(count) + " exceeds cap " +
                              std::to_string(cap));
    ModeOperators ops;
    ops.mode_count = count;
    const Eigen::Index dim = ops.dim();
    for (int i = 0; i < count; ++i) {
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim, dim);
        Eigen::MatrixXcd ad = Eigen::MatrixXcd::Zero(dim, dim);
        const unsigned bit = 1u << i;
        const unsigned below = bit - 1u;
        for (unsigned b = 0; b < static_cast<unsigned>(dim); ++b) {
            const double sign = (std::popcount(b & below) % 2 == 0) ? 1.0 : -1.0;
            if (b & bit) a(b ^ bit, b) = sign;   // occupied -> empty
            else ad(b | bit, b) = sign;          // empty -> occupied
        }
        ops.annihilate.push_back({std::move(a), "a[" + std::to_string(i) + "]"});
        ops.create.push_back({std::move(ad), "a^+[" + std::to_string(i) + "]"});
    }
    return ops;
}

ModeOperators build_mode_operators(const ModeSet& modes) {
    modes.validate();
    return build_mode_operators(modes.size(), modes.cap);
}

Eigen::Index fock_index(const std::vector<int>& occupied_modes, int mode_count) {
    Eigen::Index idx = 0;
    for (int m : occupied_modes) {
        if (m < 0 || m >= mode_count) throw ConfigError("mode index out of range");
        idx |= Eigen::Index(1) << m;
    }
    return idx;
}

SmearedCommutatorResult smeared_density_commutator(const std::vector<double>& f_samples,
                                                   double dx, const ModeSet& modes,
                                                   double pair_momentum) {
    modes.validate();
    const int points = static_cast<int>(f_samples.size());
    if (points <= 0) throw ConfigError("empty smearing function");
    const double closure = dx * modes.momentum_spacing * points;
    if (std::abs(closure - 2.0 * M_PI) > 1e-9) {
        std::ostringstream msg;
        msg << "x-grid does not tile the momentum box: dx*dp*points = " << closure;
        throw GridMismatch(msg.str());
    }

    const ModeOperators ops = build_mode_operators(modes);
    const Eigen::Index dim = ops.dim();
    const double box = modes.box_length();

    // psi_a(x) = sum_e w u_a e^{ipx} c + sum_p w v_a e^{-ipx} d^+,  w = sqrt(m/(L E))
    std::vector<SpinorBasis> spinors;
    std::vector<double> weight;
    for (const Mode& m : modes.modes) {
        spinors.push_back(dirac_spinors(m.momentum, modes.mass));
        weight.push_back(std::sqrt(modes.mass / (box * spinors.back().energy)));
    }

    Eigen::MatrixXcd density_f = Eigen::MatrixXcd::Zero(dim, dim);
    for (int ix = 0; ix < points; ++ix) {
        const double x = ix * dx;
        for (int a = 0; a < 2; ++a) {
            Eigen::MatrixXcd psi_a = Eigen::MatrixXcd::Zero(dim, dim);
            for (int i = 0; i < modes.size(); ++i) {
                const Mode& m = modes.modes[i];
                if (m.species == Species::electron) {
                    psi_a += weight[i] * spinors[i].u(a) * std::exp(kI * m.momentum * x) *
                             ops.annihilate[i].mat;
                } else {
                    psi_a += weight[i] * spinors[i].v(a) * std::exp(-kI * m.momentum * x) *
                             ops.create[i].mat;
                }
            }
            density_f += (dx * f_samples[ix]) * (psi_a.adjoint() * psi_a);
        }
    }

    Eigen::MatrixXcd number = Eigen::MatrixXcd::Zero(dim, dim);
    for (int i = 0; i < modes.size(); ++i)
        number += ops.create[i].mat * ops.annihilate[i].mat;

    SmearedCommutatorResult result;
    result.grid_spacing = dx;
    result.commutator = {density_f * number - number * density_f, "[smeared density, N]"};

    const int ie = modes.index_of(Species::electron, pair_momentum);
    const int ip = modes.index_of(Species::positron, pair_momentum);
    if (ie < 0 || ip < 0)
        throw ConfigError("pair momentum must appear in both species of the mode set");

    Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(dim);
    vac(0) = 1.0;
    const Eigen::VectorXcd pair = ops.create[ip].mat * (ops.create[ie].mat * vac);
    result.pair_element = vac.dot(result.commutator.mat * pair);

    // same element from the mode algebra: only the d c block of the commutator
    // connects a pair state back to the vacuum
    cplx fourier(0.0, 0.0);
    for (int ix = 0; ix < points; ++ix)
        fourier += dx * f_samples[ix] * std::exp(kI * (2.0 * pair_momentum) * (ix * dx));
    const double vu = spinors[ip].v.dot(spinors[ie].u).real();  // v^+(p0) u(p0), real
    result.pair_element_closed_form = -2.0 * weight[ie] * weight[ip] * vu * fourier;
    return result;
}

FockOracle oracle_sector_hamiltonian(const LatticeParams& params, int cap) {
    params.validate();
    if (params.sites > cap)
        throw ModeCapExceeded("oracle needs " + std::to_string(params.sites) +
                              " site modes, cap is " + std::to_string(cap));

    FockOracle oracle;
    oracle.site_ops = build_mode_operators(params.sites, cap);
    const ModeOperators& ops = oracle.site_ops;
    const Eigen::Index dim = ops.dim();
    const int n = params.sites;
    const double hop = 1.0 / (2.0 * params.delta);

    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
    for (int s = 0; s < n; ++s) {
        const int t = (s + 1) % n;
        h += -kI * hop *
             (ops.create[s].mat * ops.annihilate[t].mat - ops.create[t].mat * ops.annihilate[s].mat);
        h += params.mass * ((s % 2 == 0) ? 1.0 : -1.0) * (ops.create[s].mat * ops.annihilate[s].mat);
    }
    if (params.coupling != 0.0) {
        for (int j = 0; j < params.half(); ++j) {
            const Eigen::MatrixXcd ne = ops.create[2 * j].mat * ops.annihilate[2 * j].mat;
            const Eigen::MatrixXcd no = ops.create[2 * j + 1].mat * ops.annihilate[2 * j + 1].mat;
            h += (params.coupling / params.delta) * (ne + no - 2.0 * ne * no);
        }
    }
    oracle.hamiltonian = {std::move(h), "staggered H (full space)"};

    Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(dim, dim);
    for (int s = 0; s < n; ++s) f += ops.create[s].mat * ops.annihilate[s].mat;
    oracle.fermion_number = {std::move(f), "fermion number F"};
    return oracle;
}

Eigen::MatrixXcd sector_block(const OperatorMatrix& op, const LatticeParams& params) {
    const SectorBasis basis = SectorBasis::enumerate(params);
    const auto dim = static_cast<Eigen::Index>(basis.dimension());
    Eigen::VectorXi fock(dim);
    for (Eigen::Index r = 0; r < dim; ++r)
        fock(r) = static_cast<int>(fock_index(basis.unrank(r), params.sites));
    Eigen::MatrixXcd block(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r)
        for (Eigen::Index c = 0; c < dim; ++c) block(r, c) = op.mat(fock(r), fock(c));
    return block;
}

} // namespace bellsim
