#include "bellsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

namespace bellsim {

namespace {

const cplx kI(0.0, 1.0);

double uniform_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Pair (even, odd) holding the jumped quantum; used for the backward-jump
// classification against the merged cell velocity.
struct CellAmplitudes {
    cplx even;
    cplx odd;
    bool valid = false;
};

CellAmplitudes cell_amplitudes(const Eigen::VectorXcd& psi, const SectorBasis& basis,
                               const Configuration& config, std::size_t quantum) {
    CellAmplitudes cell;
    const int site = config[quantum];
    const int even_site = site - site % 2;
    const int odd_site = even_site + 1;

    Configuration at_even(config), at_odd(config);
    at_even[quantum] = even_site;
    at_odd[quantum] = odd_site;
    std::sort(at_even.begin(), at_even.end());
    std::sort(at_odd.begin(), at_odd.end());
    // companion site occupied by another quantum: no single-coordinate cell view
    if (std::adjacent_find(at_even.begin(), at_even.end()) != at_even.end()) return cell;
    if (std::adjacent_find(at_odd.begin(), at_odd.end()) != at_odd.end()) return cell;

    cell.even = psi[static_cast<Eigen::Index>(basis.rank(at_even))];
    cell.odd = psi[static_cast<Eigen::Index>(basis.rank(at_odd))];
    cell.valid = true;
    return cell;
}

} // namespace

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

TransitionCurrents transition_currents(const StateVector& state, const Configuration& source,
                                       const SectorHamiltonian& h) {
    return transition_currents(state, h.basis().rank(source), h);
}

TransitionCurrents transition_currents(const StateVector& state, std::uint64_t source_rank,
                                       const SectorHamiltonian& h) {
    TransitionCurrents out;
    out.source = source_rank;
    const cplx psi_n = state.amps[static_cast<Eigen::Index>(source_rank)];
    for (const auto& e : h.row(source_rank)) {
        // H_mn = conj(H_nm); targets inherit the deterministic row order
        const cplx h_mn = std::conj(e.amp);
        const cplx psi_m = state.amps[static_cast<Eigen::Index>(e.col)];
        const double j = 2.0 * (std::conj(psi_m) * (-kI) * h_mn * psi_n).real();
        out.entries.push_back({e.col, j});
    }
    return out;
}

JumpRateTable jump_rates(const TransitionCurrents& currents, const StateVector& state,
                         double probability_floor) {
    JumpRateTable table;
    table.source = currents.source;
    table.source_probability = state.probability(currents.source);
    if (table.source_probability <= probability_floor)
        throw SourceProbabilityUnderflow(
            "pilot state vanishes on the occupied configuration (P = " +
            std::to_string(table.source_probability) + ")");
    for (const auto& e : currents.entries) {
        const double rate = e.current > 0.0 ? e.current / table.source_probability : 0.0;
        table.entries.push_back({e.target, e.current, rate});
        table.total_rate += rate;
    }
    return table;
}

PilotTimeline::PilotTimeline(const Propagator& prop, const StateVector& initial, double t_final,
                             double dt)
    : h_(&prop.hamiltonian()), t0_(initial.t), dt_(dt) {
    if (!(dt > 0.0)) throw ConfigError("timeline dt must be positive");
    const int steps = static_cast<int>(std::ceil((t_final - initial.t) / dt - 1e-12));
    frames_.reserve(steps + 1);
    frames_.push_back(initial.amps);
    StateVector cursor = initial;
    for (int i = 0; i < steps; ++i) {
        cursor = prop.evolve(cursor, dt);
        frames_.push_back(cursor.amps);
    }
}

int PilotTimeline::frame_at(double t) const {
    const int i = static_cast<int>(std::floor((t - t0_) / dt_ + 1e-9));
    return std::clamp(i, 0, steps());
}

Trajectory run_trajectory(const PilotTimeline& timeline, std::uint64_t initial_rank,
                          const TrajectoryOptions& opts) {
    const SectorHamiltonian& h = timeline.hamiltonian();
    const SectorBasis& basis = h.basis();
    const int n_sites = basis.params().sites;
    std::mt19937_64 rng(opts.seed);

    Trajectory traj;
    traj.seed = opts.seed;
    std::uint64_t rank = initial_rank;
    Configuration config = basis.unrank(rank);

    std::size_t next_explicit = 0;
    auto record = [&](int step) {
        if (opts.record_steps) {
            while (next_explicit < opts.record_steps->size() &&
                   (*opts.record_steps)[next_explicit] == step) {
                traj.times.push_back(timeline.time(step));
                traj.configs.push_back(rank);
                ++next_explicit;
            }
            return;
        }
        const bool endpoint = step == 0 || step == timeline.steps();
        if (endpoint || (opts.sample_stride > 0 && step % opts.sample_stride == 0)) {
            traj.times.push_back(timeline.time(step));
            traj.configs.push_back(rank);
        }
    };
    record(0);

    for (int step = 0; step < timeline.steps(); ++step) {
        const StateVector state{timeline.frame(step), timeline.time(step)};
        const TransitionCurrents currents = transition_currents(state, rank, h);
        const JumpRateTable rates = jump_rates(currents, state, opts.probability_floor);

        if (rates.total_rate * timeline.dt() > kRateStepCap)
            throw RateStepOverflow("R*dt = " +
                                   std::to_string(rates.total_rate * timeline.dt()) +
                                   " exceeds cap; shrink dt");

        const double u = uniform_double(rng);
        double cumulative = 0.0;
        std::int64_t chosen = -1;
        for (std::size_t i = 0; i < rates.entries.size(); ++i) {
            cumulative += rates.entries[i].rate * timeline.dt();
            if (u < cumulative) {
                chosen = static_cast<std::int64_t>(i);
                break;
            }
        }

        if (chosen >= 0) {
            const std::uint64_t target = rates.entries[chosen].target;
            const Configuration next = basis.unrank(target);

            // the moved quantum: the one site that changed
            int from_site = -1, to_site = -1;
            std::size_t moved = 0;
            {
                std::vector<char> in_old(n_sites, 0), in_new(n_sites, 0);
                for (int s : config) in_old[s] = 1;
                for (int s : next) in_new[s] = 1;
                for (int s = 0; s < n_sites; ++s) {
                    if (in_old[s] && !in_new[s]) from_site = s;
                    if (!in_old[s] && in_new[s]) to_site = s;
                }
                for (std::size_t q = 0; q < config.size(); ++q)
                    if (config[q] == from_site) moved = q;
            }
            // +1 right, -1 left, seam-aware
            int dir = to_site - from_site;
            if (dir > 1) dir = -1;
            if (dir < -1) dir = +1;
            traj.net_displacement += dir;

            if (opts.classify_backward) {
                const CellAmplitudes cell = cell_amplitudes(state.amps, basis, config, moved);
                if (!cell.valid) {
                    ++traj.unclassified_jumps;
                } else {
                    const double merged = (std::conj(cell.even) * cell.odd).real();
                    if (dir * merged < 0.0) ++traj.backward_jumps;
                }
            }

            traj.jumps.push_back({timeline.time(step), rank, target});
            rank = target;
            config = next;
        }
        record(step + 1);
    }
    return traj;
}

Trajectory simulate_trajectory(const Configuration& initial, const Propagator& prop,
                               const StateVector& psi0, double t_final, double dt,
                               std::uint64_t seed, const TrajectoryOptions& opts) {
    PilotTimeline timeline(prop, psi0, t_final, dt);
    TrajectoryOptions o = opts;
    o.seed = seed;
    return run_trajectory(timeline, prop.hamiltonian().basis().rank(initial), o);
}

namespace {

// dP_m/dt in flux form: every kept or dropped flux enters source and target
// with opposite signs, so sum_m P_m is conserved identically.
void master_derivative(const Eigen::VectorXd& p, const Eigen::VectorXcd& psi,
                       const SectorHamiltonian& h, double floor, Eigen::VectorXd& dp) {
    dp.setZero();
    const std::uint64_t dim = h.dimension();
    for (std::uint64_t n = 0; n < dim; ++n) {
        const double pn = std::norm(psi[static_cast<Eigen::Index>(n)]);
        if (pn <= floor) continue;
        const double ratio = p[static_cast<Eigen::Index>(n)] / pn;
        const cplx psi_n = psi[static_cast<Eigen::Index>(n)];
        for (const auto& e : h.row(n)) {
            const cplx h_mn = std::conj(e.amp);
            const cplx psi_m = psi[static_cast<Eigen::Index>(e.col)];
            const double j_mn = 2.0 * (std::conj(psi_m) * (-kI) * h_mn * psi_n).real();
            if (j_mn <= 0.0) continue;
            const double flux = j_mn * ratio;  // T_mn * P_n
            dp[static_cast<Eigen::Index>(e.col)] += flux;
            dp[static_cast<Eigen::Index>(n)] -= flux;
        }
    }
}

} // namespace

MasterEquationResult master_equation_evolve(const Eigen::VectorXd& p0, const Propagator& prop,
                                            const StateVector& psi0, double t_final, double dt,
                                            int report_stride, double probability_floor) {
    const SectorHamiltonian& h = prop.hamiltonian();
    if (p0.size() != static_cast<Eigen::Index>(h.dimension()))
        throw ConfigError("probability vector dimension mismatch");
    if (std::abs(p0.sum() - 1.0) > 1e-9)
        throw ConfigError("initial probabilities must sum to 1");
    if (!(dt > 0.0)) throw ConfigError("master equation dt must be positive");
    if (dt * h.spectral_radius_bound() > 2.0)
        throw StepTooLarge("master equation dt too large for the Hamiltonian scale");

    const int steps = static_cast<int>(std::ceil((t_final - psi0.t) / dt - 1e-12));

    MasterEquationResult result;
    Eigen::VectorXd p = p0;
    StateVector psi = psi0;
    Eigen::VectorXd k1(p.size()), k2(p.size()), k3(p.size()), k4(p.size());

    auto report = [&](const StateVector& at) {
        result.times.push_back(at.t);
        result.probabilities.push_back(p);
        double residual = 0.0;
        for (Eigen::Index m = 0; m < p.size(); ++m)
            residual = std::max(residual, std::abs(p[m] - std::norm(at.amps[m])));
        result.max_equivariance_residual = std::max(result.max_equivariance_residual, residual);
        result.normalization_defect =
            std::max(result.normalization_defect, std::abs(p.sum() - 1.0));
    };
    report(psi);

    for (int step = 0; step < steps; ++step) {
        const StateVector psi_half = prop.evolve(psi, 0.5 * dt);
        const StateVector psi_full = prop.evolve(psi_half, 0.5 * dt);

        master_derivative(p, psi.amps, h, probability_floor, k1);
        Eigen::VectorXd stage = p + (0.5 * dt) * k1;
        master_derivative(stage, psi_half.amps, h, probability_floor, k2);
        stage = p + (0.5 * dt) * k2;
        master_derivative(stage, psi_half.amps, h, probability_floor, k3);
        stage = p + dt * k3;
        master_derivative(stage, psi_full.amps, h, probability_floor, k4);
        p += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        psi = psi_full;
        if ((step + 1) % report_stride == 0 || step + 1 == steps) report(psi);
    }

    if (result.normalization_defect > 1e-9)
        throw NormDrift("master equation normalization defect " +
                        std::to_string(result.normalization_defect));
    return result;
}

std::uint64_t sample_configuration(const Eigen::VectorXcd& amps, double uniform) {
    double cumulative = 0.0;
    const Eigen::Index dim = amps.size();
    for (Eigen::Index i = 0; i < dim; ++i) {
        cumulative += std::norm(amps[i]);
        if (uniform < cumulative) return static_cast<std::uint64_t>(i);
    }
    return static_cast<std::uint64_t>(dim - 1);
}

EnsembleResult run_ensemble(const PilotTimeline& timeline, std::uint64_t n_trajectories,
                            std::uint64_t master_seed, const std::vector<double>& checkpoints,
                            int threads, bool classify_backward, double probability_floor) {
    if (!std::is_sorted(checkpoints.begin(), checkpoints.end()))
        throw ConfigError("checkpoint times must be increasing");
    const std::uint64_t dim = timeline.hamiltonian().dimension();

    EnsembleResult result;
    result.checkpoint_times = checkpoints;
    result.trajectories = n_trajectories;
    result.checkpoint_counts.assign(checkpoints.size(), std::vector<std::uint64_t>(dim, 0));
    result.initial_rank.resize(n_trajectories);
    result.net_displacement.resize(n_trajectories);
    result.jump_count.resize(n_trajectories);
    result.backward_count.resize(n_trajectories);
    result.unclassified_count.resize(n_trajectories);

    std::vector<int> record_steps;
    for (double t : checkpoints) record_steps.push_back(timeline.frame_at(t));

    const int workers = std::max(1, threads);
    std::vector<std::vector<std::vector<std::uint64_t>>> local_counts(
        workers, std::vector<std::vector<std::uint64_t>>(checkpoints.size(),
                                                         std::vector<std::uint64_t>(dim, 0)));
    std::vector<std::exception_ptr> failures(workers);

    auto work = [&](int worker) {
        try {
            for (std::uint64_t i = worker; i < n_trajectories; i += workers) {
                const std::uint64_t seed = splitmix64(master_seed + i);
                std::mt19937_64 init_rng(splitmix64(seed ^ 0x5851F42D4C957F2DULL));
                const std::uint64_t start =
                    sample_configuration(timeline.frame(0), uniform_double(init_rng));

                TrajectoryOptions opts;
                opts.seed = seed;
                opts.record_steps = &record_steps;
                opts.probability_floor = probability_floor;
                opts.classify_backward = classify_backward;

                const Trajectory traj = run_trajectory(timeline, start, opts);
                for (std::size_t cp = 0; cp < traj.configs.size(); ++cp)
                    ++local_counts[worker][cp][traj.configs[cp]];

                result.initial_rank[i] = start;
                result.net_displacement[i] = traj.net_displacement;
                result.jump_count[i] = static_cast<std::uint32_t>(traj.jumps.size());
                result.backward_count[i] = static_cast<std::uint32_t>(traj.backward_jumps);
                result.unclassified_count[i] = static_cast<std::uint32_t>(traj.unclassified_jumps);
            }
        } catch (...) {
            failures[worker] = std::current_exception();
        }
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);

    for (int w = 0; w < workers; ++w)
        for (std::size_t cp = 0; cp < checkpoints.size(); ++cp)
            for (std::uint64_t r = 0; r < dim; ++r)
                result.checkpoint_counts[cp][r] += local_counts[w][cp][r];
    return result;
}

EquivarianceReport equivariance_statistics(const EnsembleResult& ensemble,
                                           const PilotTimeline& timeline, double z_threshold) {
    EquivarianceReport report;
    report.trajectories = ensemble.trajectories;
    const double n = static_cast<double>(ensemble.trajectories);
    const std::uint64_t dim = timeline.hamiltonian().dimension();

    for (std::size_t cp = 0; cp < ensemble.checkpoint_times.size(); ++cp) {
        const int step = timeline.frame_at(ensemble.checkpoint_times[cp]);
        const Eigen::VectorXcd& psi = timeline.frame(step);

        EquivarianceCheckpoint out;
        out.t = timeline.time(step);
        out.noise_bound = 3.0 * std::sqrt(static_cast<double>(dim) / (2.0 * n));

        double tv = 0.0;
        int z_bins = 0, z_above = 0;
        out.z_scores.assign(dim, 0.0);
        out.z_valid.assign(dim, 0);
        for (std::uint64_t r = 0; r < dim; ++r) {
            const double pi = std::norm(psi[static_cast<Eigen::Index>(r)]);
            const double hat = ensemble.checkpoint_counts[cp][r] / n;
            tv += std::abs(hat - pi);
            const double var = n * pi * (1.0 - pi);
            if (var >= 4.0) {  // normal approximation regime
                ++z_bins;
                const double z = (ensemble.checkpoint_counts[cp][r] - n * pi) / std::sqrt(var);
                out.z_scores[r] = z;
                out.z_valid[r] = 1;
                if (std::abs(z) > z_threshold) ++z_above;
            }
        }
        out.tv_distance = 0.5 * tv;
        out.z_bins = z_bins;
        out.z_fraction_above = z_bins > 0 ? static_cast<double>(z_above) / z_bins : 0.0;
        report.checkpoints.push_back(out);
    }
    return report;
}

} // namespace bellsim
