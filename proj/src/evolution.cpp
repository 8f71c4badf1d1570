#include "bellsim/evolution.hpp"

#include <cmath>

namespace bellsim {

namespace {

const cplx kI(0.0, 1.0);

}  // namespace

Propagator::Propagator(const SectorHamiltonian& h, EvolutionConfig cfg) : h_(&h), cfg_(cfg) {
    if (cfg_.method == Integrator::eigendecomposition) {
        if (h.dimension() > cfg_.eigen_threshold)
            throw StepTooLarge("dimension " + std::to_string(h.dimension()) +
                               " above eigendecomposition threshold; use rk4");
        eigen_.emplace(h.dense());
    }
}

StateVector Propagator::evolve(const StateVector& state, double dt) const {
    if (dt < 0.0) throw ConfigError("evolve expects dt >= 0");
    if (dt == 0.0) return state;
    return cfg_.method == Integrator::eigendecomposition ? evolve_spectral(state, dt)
                                                         : evolve_rk4(state, dt);
}

StateVector Propagator::evolve_spectral(const StateVector& state, double dt) const {
    const auto& vecs = eigen_->eigenvectors();
    const auto& vals = eigen_->eigenvalues();
    Eigen::VectorXcd modal = vecs.adjoint() * state.amps;
    for (Eigen::Index i = 0; i < modal.size(); ++i)
        modal[i] *= std::exp(-kI * vals[i] * dt);
    last_drift_ = 0.0;
    return {vecs * modal, state.t + dt};
}

StateVector Propagator::evolve_rk4(const StateVector& state, double dt) const {
    const double radius = h_->spectral_radius_bound();
    if (cfg_.dt * radius > 0.1)
        throw StepTooLarge("rk4 substep too large: dt * spectral radius = " +
                           std::to_string(cfg_.dt * radius));

    const double norm0 = state.amps.norm();
    Eigen::VectorXcd psi = state.amps;
    Eigen::VectorXcd k1(psi.size()), k2(psi.size()), k3(psi.size()), k4(psi.size());

    double remaining = dt;
    while (remaining > 0.0) {
        const double h = std::min(cfg_.dt, remaining);
        h_->apply(psi.data(), k1.data());
        Eigen::VectorXcd stage = psi - kI * (0.5 * h) * k1;
        h_->apply(stage.data(), k2.data());
        stage = psi - kI * (0.5 * h) * k2;
        h_->apply(stage.data(), k3.data());
        stage = psi - kI * h * k3;
        h_->apply(stage.data(), k4.data());
        psi -= kI * (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        remaining -= h;
    }

    const double drift = std::abs(psi.norm() - norm0);
    last_drift_ = drift / std::max(dt, 1e-300);
    if (last_drift_ > cfg_.norm_drift_tol)
        throw NormDrift("rk4 norm drift " + std::to_string(last_drift_) +
                        " per unit time exceeds tolerance");
    return {std::move(psi), state.t + dt};
}

double Propagator::energy(const StateVector& state) const {
    return state.amps.dot(h_->apply(state.amps)).real();
}

std::vector<std::vector<Orbital>> PacketSpec::quanta() const {
    if (!components.empty()) return components;
    std::vector<std::vector<Orbital>> out;
    out.reserve(orbitals.size());
    for (const Orbital& o : orbitals) out.push_back({o});
    return out;
}

void PacketSpec::validate(const LatticeParams& params) const {
    const auto per_quantum = quanta();
    if (static_cast<int>(per_quantum.size()) != params.quanta)
        throw ConfigError("packet needs one orbital per quantum (" +
                          std::to_string(params.quanta) + ")");
    for (const auto& parts : per_quantum) {
        if (parts.empty()) throw ConfigError("empty orbital component list");
        for (const Orbital& o : parts)
            if (!(o.width >= 2.0 * params.delta))
                throw ConfigError("orbital width must be >= 2 delta to be resolvable");
    }
}

Eigen::VectorXcd orbital_on_sites(const Orbital& orb, const LatticeParams& params) {
    // spinor direction (1, p/(m+E)) resp. (-p/(m+E), 1); only the ratio matters
    // here, so m = 0 is admissible
    const double e = std::hypot(orb.momentum, params.mass);
    const double a = (e + params.mass) > 0.0 ? orb.momentum / (params.mass + e) : 0.0;
    double upper = 1.0, lower = a;
    if (orb.energy == EnergySign::negative) {
        upper = -a;
        lower = 1.0;
    }

    const double box = params.box_length();
    Eigen::VectorXcd values(params.sites);
    for (int s = 0; s < params.sites; ++s) {
        const double x = s * params.delta;
        // nearest periodic image of the center
        double dxc = x - orb.center;
        dxc -= box * std::round(dxc / box);
        const double envelope = std::exp(-dxc * dxc / (4.0 * orb.width * orb.width));
        const cplx phase = std::exp(kI * orb.momentum * x);
        values[s] = envelope * phase * (s % 2 == 0 ? upper : lower);
    }
    return values;
}

StateVector build_initial_packet(const SectorBasis& basis, const PacketSpec& spec) {
    const LatticeParams& params = basis.params();
    spec.validate(params);
    const int w = params.quanta;
    const auto per_quantum = spec.quanta();

    Eigen::MatrixXcd orbitals = Eigen::MatrixXcd::Zero(params.sites, w);
    for (int q = 0; q < w; ++q)
        for (const Orbital& part : per_quantum[q])
            orbitals.col(q) += part.weight * orbital_on_sites(part, params);

    // Cauchy-Binet: sum over configurations of |det|^2 equals det of the Gram
    // matrix, so a singular Gram means the antisymmetrized state vanishes
    const Eigen::MatrixXcd gram = orbitals.adjoint() * orbitals;
    double gram_scale = 1.0;
    for (int q = 0; q < w; ++q) gram_scale *= gram(q, q).real();
    const double gram_det = gram.determinant().real();
    if (!(gram_det > 1e-12 * std::max(gram_scale, 1e-300)))
        throw DegenerateOrbitals("orbital Gram matrix is singular; the Slater state vanishes");

    const std::uint64_t dim = basis.dimension();
    StateVector state;
    state.amps.resize(static_cast<Eigen::Index>(dim));
    Eigen::MatrixXcd minor(w, w);
    for (std::uint64_t r = 0; r < dim; ++r) {
        const Configuration c = basis.unrank(r);
        for (int i = 0; i < w; ++i)
            for (int q = 0; q < w; ++q) minor(i, q) = orbitals(c[i], q);
        state.amps[static_cast<Eigen::Index>(r)] = (w == 0) ? cplx(1.0, 0.0) : minor.determinant();
    }
    state.amps /= state.amps.norm();
    state.t = 0.0;
    return state;
}

} // namespace bellsim
