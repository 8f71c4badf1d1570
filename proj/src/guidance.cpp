#include "bellsim/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/SVD>

namespace bellsim {

namespace {

double wrap(double x, double box) {
    double y = std::fmod(x, box);
    if (y < 0.0) y += box;
    return y;
}

} // namespace

double SpinorField::l2_norm_sq() const {
    return spacing * (upper.squaredNorm() + lower.squaredNorm());
}

SpinorField staggered_to_spinor(const Eigen::VectorXcd& site_amps, const LatticeParams& params,
                                double t) {
    if (site_amps.size() % 2 != 0)
        throw OddSiteCount("cannot pair an odd number of site amplitudes");
    if (site_amps.size() != params.sites)
        throw ConfigError("amplitude count does not match the lattice");
    const int n = static_cast<int>(site_amps.size()) / 2;
    SpinorField field;
    field.spacing = 2.0 * params.delta;
    field.t = t;
    field.upper.resize(n);
    field.lower.resize(n);
    const double renorm = 1.0 / std::sqrt(2.0 * params.delta);
    for (int j = 0; j < n; ++j) {
        field.upper[j] = site_amps[2 * j] * renorm;
        field.lower[j] = site_amps[2 * j + 1] * renorm;
    }
    return field;
}

double lattice_velocity(const StateVector& state, int site, const LatticeParams& params,
                        double probability_floor) {
    const int n = params.sites;
    const int k = ((site % n) + n) % n;
    const double p = std::norm(state.amps[k]);
    if (p <= probability_floor)
        throw SourceProbabilityUnderflow("velocity undefined where |psi|^2 = " +
                                         std::to_string(p));
    return (std::conj(state.amps[(k + 1) % n]) * state.amps[k]).real() / p;
}

double current_cancellation_check(const StateVector& state, int site,
                                  const LatticeParams& params, double probability_floor) {
    const int n = params.sites;
    const int k = ((site % n) + n) % n;
    if (std::norm(state.amps[k]) <= probability_floor)
        throw SourceProbabilityUnderflow("cancellation check undefined at a node");
    const double j_plus =
        (std::conj(state.amps[(k + 1) % n]) * state.amps[k]).real() / params.delta;
    const double j_minus =
        -(std::conj(state.amps[(k - 1 + n) % n]) * state.amps[k]).real() / params.delta;
    const double denom = std::abs(j_plus) + std::abs(j_minus);
    if (denom == 0.0) return 0.0;
    return std::abs(j_plus + j_minus) / denom;
}

GuidancePoint current_density(const std::vector<SpinorField>& orbitals,
                              const std::vector<double>& positions) {
    const int w = static_cast<int>(orbitals.size());
    if (w == 0 || w > 20) throw ConfigError("current_density needs 1..20 orbitals");
    if (static_cast<int>(positions.size()) != w)
        throw ConfigError("one position per quantum expected");
    const SpinorField& ref = orbitals.front();
    for (const SpinorField& orb : orbitals)
        if (orb.points() != ref.points() || orb.spacing != ref.spacing)
            throw ConfigError("orbital fields must share one grid");

    const double box = ref.box();
    const int n = ref.points();

    // orbital values at each coordinate, linearly interpolated on the periodic grid
    Eigen::MatrixXcd upper(w, w), lower(w, w);  // (coordinate j, orbital q)
    for (int j = 0; j < w; ++j) {
        if (!std::isfinite(positions[j])) throw OutOfGrid("position is not finite");
        const double x = wrap(positions[j], box);
        const double s = x / ref.spacing;
        const int i0 = static_cast<int>(std::floor(s)) % n;
        const int i1 = (i0 + 1) % n;
        const double f = s - std::floor(s);
        for (int q = 0; q < w; ++q) {
            upper(j, q) = (1.0 - f) * orbitals[q].upper[i0] + f * orbitals[q].upper[i1];
            lower(j, q) = (1.0 - f) * orbitals[q].lower[i0] + f * orbitals[q].lower[i1];
        }
    }

    // Slater amplitude per component assignment (bit j set: lower component at x_j)
    const unsigned assignments = 1u << w;
    std::vector<cplx> amp(assignments);
    Eigen::MatrixXcd m(w, w);
    for (unsigned s = 0; s < assignments; ++s) {
        for (int j = 0; j < w; ++j)
            for (int q = 0; q < w; ++q) m(j, q) = (s >> j) & 1u ? lower(j, q) : upper(j, q);
        amp[s] = m.determinant();
    }

    GuidancePoint point;
    point.current.assign(w, 0.0);
    for (unsigned s = 0; s < assignments; ++s) {
        point.rho += std::norm(amp[s]);
        for (int j = 0; j < w; ++j)
            if (!((s >> j) & 1u))
                point.current[j] += 2.0 * (std::conj(amp[s]) * amp[s | (1u << j)]).real();
    }
    return point;
}

GuidanceTimeline spinor_timeline(const PilotTimeline& timeline, const LatticeParams& params,
                                 int stride) {
    if (params.quanta != 1)
        throw ConfigError("spinor_timeline covers the one-quantum sector");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    GuidanceTimeline out;
    out.t0 = timeline.time(0);
    out.frame_dt = stride * timeline.dt();
    for (int f = 0; f * stride <= timeline.steps(); ++f)
        out.frames.push_back({staggered_to_spinor(timeline.frame(f * stride), params,
                                                  timeline.time(f * stride))});
    return out;
}

namespace {

struct VelocityProbe {
    std::vector<double> velocity;
    double rho = 0.0;
};

// multilinear in space on the 2^w corner set, linear in time between frames;
// J and rho are interpolated and the ratio taken once
VelocityProbe probe_velocity(const GuidanceTimeline& timeline, const std::vector<double>& x,
                             double t) {
    const int w = static_cast<int>(x.size());
    const int last = timeline.frame_count() - 1;
    double s = (t - timeline.t0) / timeline.frame_dt;
    s = std::clamp(s, 0.0, static_cast<double>(last));
    int f0 = std::min(static_cast<int>(std::floor(s)), last - 1);
    if (last == 0) f0 = 0;
    const int f1 = std::min(f0 + 1, last);
    const double tau = std::clamp(s - f0, 0.0, 1.0);

    VelocityProbe probe;
    probe.velocity.assign(w, 0.0);
    double rho_acc = 0.0;
    std::vector<double> j_acc(w, 0.0);
    for (int which = 0; which < 2; ++which) {
        const double weight = which == 0 ? 1.0 - tau : tau;
        if (weight == 0.0) continue;
        const GuidancePoint gp = current_density(timeline.frames[which == 0 ? f0 : f1], x);
        rho_acc += weight * gp.rho;
        for (int j = 0; j < w; ++j) j_acc[j] += weight * gp.current[j];
    }
    probe.rho = rho_acc;
    if (rho_acc > 0.0)
        for (int j = 0; j < w; ++j) probe.velocity[j] = j_acc[j] / rho_acc;
    return probe;
}

} // namespace

GuidanceTrajectory integrate_guidance(const std::vector<double>& x0,
                                      const GuidanceTimeline& timeline, double t_final,
                                      double dt, double rho_floor, int sample_stride) {
    if (timeline.frame_count() < 1) throw ConfigError("empty guidance timeline");
    if (!(dt > 0.0)) throw ConfigError("guidance dt must be positive");
    const int w = static_cast<int>(x0.size());
    const double box = timeline.frames.front().front().box();

    GuidanceTrajectory traj;
    traj.min_rho_seen = std::numeric_limits<double>::infinity();
    std::vector<double> x = x0;  // unwrapped

    auto wrapped = [&](const std::vector<double>& u) {
        std::vector<double> v(w);
        for (int j = 0; j < w; ++j) v[j] = wrap(u[j], box);
        return v;
    };
    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.positions.push_back(wrapped(x));
    };

    double t = timeline.t0;
    record(t);
    const int steps = static_cast<int>(std::ceil((t_final - t) / dt - 1e-12));

    std::vector<double> k1(w), k2(w), k3(w), k4(w), stage(w);
    for (int step = 0; step < steps; ++step) {
        const double h = std::min(dt, t_final - t);

        bool node = false;
        auto eval = [&](const std::vector<double>& pos, double at, std::vector<double>& out) {
            const VelocityProbe probe = probe_velocity(timeline, wrapped(pos), at);
            traj.min_rho_seen = std::min(traj.min_rho_seen, probe.rho);
            if (probe.rho < rho_floor) node = true;
            out = probe.velocity;
        };

        eval(x, t, k1);
        for (int j = 0; j < w; ++j) stage[j] = x[j] + 0.5 * h * k1[j];
        eval(stage, t + 0.5 * h, k2);
        for (int j = 0; j < w; ++j) stage[j] = x[j] + 0.5 * h * k2[j];
        eval(stage, t + 0.5 * h, k3);
        for (int j = 0; j < w; ++j) stage[j] = x[j] + h * k3[j];
        eval(stage, t + h, k4);

        if (node) {
            traj.node_terminated = true;
            traj.termination_time = t;
            break;
        }
        for (int j = 0; j < w; ++j) x[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        t += h;
        if (sample_stride > 0 && (step + 1) % sample_stride == 0 && step + 1 != steps) record(t);
    }
    if (!traj.node_terminated) {
        traj.termination_time = t;
        if (traj.times.empty() || traj.times.back() != t) record(t);
    }
    traj.unwrapped = x;
    return traj;
}

ConvergenceReport convergence_study(const ConvergenceSpec& spec) {
    ConvergenceReport report;
    if (spec.resolutions.empty()) throw ConfigError("at least one resolution required");
    if (!std::is_sorted(spec.resolutions.begin(), spec.resolutions.end()))
        throw ConfigError("resolutions must increase (delta must decrease)");

    for (std::size_t r = 0; r < spec.resolutions.size(); ++r) {
        LatticeParams params;
        params.sites = spec.resolutions[r];
        params.delta = spec.box_length / spec.resolutions[r];
        params.mass = spec.mass;
        params.quanta = 1;

        const SectorHamiltonian h = SectorHamiltonian::assemble(params);
        const Propagator prop(h, EvolutionConfig::automatic(h.dimension()));

        PacketSpec packet;
        packet.components = {spec.packet};
        const StateVector psi0 = build_initial_packet(h.basis(), packet);

        const double dt = spec.dt_factor * params.delta;
        const PilotTimeline timeline(prop, psi0, spec.t_final, dt);
        const GuidanceTimeline fields = spinor_timeline(timeline, params);

        const std::uint64_t seed = splitmix64(spec.seed ^ (r + 1));
        const EnsembleResult ensemble =
            run_ensemble(timeline, spec.trials, seed, {}, spec.threads, true);

        // one guidance reference per distinct starting site
        std::map<std::uint64_t, double> guided_final;
        for (std::uint64_t rank : ensemble.initial_rank) {
            if (guided_final.count(rank)) continue;
            const double x_start = static_cast<double>(rank) * params.delta;
            const GuidanceTrajectory g =
                integrate_guidance({x_start}, fields, spec.t_final, dt, kNodeFloor, 0);
            if (g.node_terminated)
                throw NodeReached("guidance reference hit a node at t = " +
                                  std::to_string(g.termination_time));
            guided_final[rank] = g.unwrapped.front();
        }

        ConvergenceRow row;
        row.two_n = spec.resolutions[r];
        row.delta = params.delta;
        row.seed = seed;
        row.trials = spec.trials;
        double error_sum = 0.0;
        std::uint64_t jumps = 0, backward = 0, hit = 0;
        for (std::uint64_t i = 0; i < spec.trials; ++i) {
            const double x_start = static_cast<double>(ensemble.initial_rank[i]) * params.delta;
            const double x_jump = x_start + params.delta * ensemble.net_displacement[i];
            error_sum += std::abs(x_jump - guided_final[ensemble.initial_rank[i]]);
            jumps += ensemble.jump_count[i];
            backward += ensemble.backward_count[i];
            if (ensemble.backward_count[i] > 0) ++hit;
        }
        row.mean_error = error_sum / static_cast<double>(spec.trials);
        row.backward_jumps = backward;
        row.backward_fraction = static_cast<double>(hit) / static_cast<double>(spec.trials);
        row.backward_jump_share =
            jumps > 0 ? static_cast<double>(backward) / static_cast<double>(jumps) : 0.0;
        row.mean_jumps = static_cast<double>(jumps) / static_cast<double>(spec.trials);
        report.rows.push_back(row);
    }

    if (report.rows.size() < 2) {
        report.pass_defined = false;
        report.note = "single resolution: monotonicity undefined";
        return report;
    }
    report.pass_defined = true;
    report.pass = true;
    std::ostringstream note;
    for (std::size_t r = 1; r < report.rows.size(); ++r) {
        const bool err_ok = report.rows[r].mean_error < report.rows[r - 1].mean_error;
        const bool back_ok =
            report.rows[r].backward_fraction < report.rows[r - 1].backward_fraction;
        if (!err_ok || !back_ok) report.pass = false;
        const double ratio = report.rows[r - 1].backward_fraction > 0.0
                                 ? report.rows[r].backward_fraction /
                                       report.rows[r - 1].backward_fraction
                                 : 0.0;
        note << "backward ratio " << report.rows[r - 1].two_n << "->" << report.rows[r].two_n
             << ": " << ratio << "; ";
    }
    report.note = note.str();
    return report;
}

double two_quanta_current_closed_form(const SpinorField& chi, const SpinorField& phi, int i1,
                                      int i2) {
    const cplx c1 = chi.upper[i1], c2 = chi.lower[i1];
    const cplx f1 = phi.upper[i1], f2 = phi.lower[i1];
    const cplx C1 = chi.upper[i2], C2 = chi.lower[i2];
    const cplx F1 = phi.upper[i2], F2 = phi.lower[i2];

    const double term1 = 2.0 * (std::conj(c1) * c2).real() * (std::norm(F1) + std::norm(F2));
    const double term2 = 2.0 * (std::conj(f1) * f2).real() * (std::norm(C1) + std::norm(C2));
    const cplx cross_a = (std::conj(c1) * f2 + std::conj(c2) * f1) *
                         (std::conj(F1) * C1 + std::conj(F2) * C2);
    const cplx cross_b = (std::conj(f1) * c2 + std::conj(f2) * c1) *
                         (std::conj(C1) * F1 + std::conj(C2) * F2);
    return term1 + term2 - (cross_a + cross_b).real();
}

NonlocalityReport nonlocality_analysis(const SpinorField& chi, const SpinorField& phi,
                                       double rho_floor, double support_threshold) {
    if (chi.points() != phi.points() || chi.spacing != phi.spacing)
        throw ConfigError("orbitals must share one grid");
    const int n = chi.points();
    const double h = chi.spacing;

    const double nc = chi.l2_norm_sq();
    const double np = phi.l2_norm_sq();
    cplx overlap(0.0, 0.0);
    for (int i = 0; i < n; ++i)
        overlap += h * (std::conj(chi.upper[i]) * phi.upper[i] +
                        std::conj(chi.lower[i]) * phi.lower[i]);
    if (!(nc > 0.0) || !(np > 0.0) || std::norm(overlap) >= (1.0 - 1e-12) * nc * np)
        throw DegenerateOrbitals("chi and phi are parallel; the antisymmetrized state vanishes");

    NonlocalityReport report;
    report.grid.resize(n);
    for (int i = 0; i < n; ++i) report.grid[i] = chi.x(i);

    report.j1.resize(n, n);
    report.rho.resize(n, n);
    for (int i1 = 0; i1 < n; ++i1) {
        for (int i2 = 0; i2 < n; ++i2) {
            const cplx psi11 = chi.upper[i1] * phi.upper[i2] - phi.upper[i1] * chi.upper[i2];
            const cplx psi12 = chi.upper[i1] * phi.lower[i2] - phi.upper[i1] * chi.lower[i2];
            const cplx psi21 = chi.lower[i1] * phi.upper[i2] - phi.lower[i1] * chi.upper[i2];
            const cplx psi22 = chi.lower[i1] * phi.lower[i2] - phi.lower[i1] * chi.lower[i2];
            report.rho(i1, i2) =
                std::norm(psi11) + std::norm(psi12) + std::norm(psi21) + std::norm(psi22);
            report.j1(i1, i2) = two_quanta_current_closed_form(chi, phi, i1, i2);
        }
    }
    const double z = report.rho.sum() * h * h;
    report.rho /= z;
    report.j1 /= z;

    // support product region: particle 1 where chi lives, particle 2 where phi lives
    std::vector<int> rows, cols;
    double max_chi = 0.0, max_phi = 0.0;
    for (int i = 0; i < n; ++i) {
        max_chi = std::max(max_chi, std::norm(chi.upper[i]) + std::norm(chi.lower[i]));
        max_phi = std::max(max_phi, std::norm(phi.upper[i]) + std::norm(phi.lower[i]));
    }
    for (int i = 0; i < n; ++i) {
        if (std::norm(chi.upper[i]) + std::norm(chi.lower[i]) > support_threshold * max_chi)
            rows.push_back(i);
        if (std::norm(phi.upper[i]) + std::norm(phi.lower[i]) > support_threshold * max_phi)
            cols.push_back(i);
    }
    report.support_rows = static_cast<int>(rows.size());
    report.support_cols = static_cast<int>(cols.size());

    Eigen::MatrixXd sub(rows.size(), cols.size());
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) sub(a, b) = report.j1(rows[a], cols[b]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub);
    const auto& sv = svd.singularValues();
    report.sigma_ratio = (sv.size() >= 2 && sv[0] > 0.0) ? sv[1] / sv[0] : 0.0;

    // conditional velocity of particle 1 at the density-marginal peak
    Eigen::VectorXd marginal = report.rho.rowwise().sum() * h;
    int i_star = 0;
    marginal.maxCoeff(&i_star);
    report.x1_star = report.grid[i_star];
    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -std::numeric_limits<double>::infinity();
    for (int i2 = 0; i2 < n; ++i2) {
        if (report.rho(i_star, i2) < rho_floor) continue;
        const double v = report.j1(i_star, i2) / report.rho(i_star, i2);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    report.velocity_spread = vmax > vmin ? vmax - vmin : 0.0;
    return report;
}

} // namespace bellsim
