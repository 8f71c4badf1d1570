#ifndef BELLSIM_DYNAMICS_HPP
#define BELLSIM_DYNAMICS_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bellsim/evolution.hpp"
#include "bellsim/lattice.hpp"

namespace bellsim {

constexpr double kProbabilityFloor = 1e-12;  // epsilon_P under |psi_source|^2
constexpr double kRateStepCap = 0.1;         // max allowed R * dt per substep

/// Antisymmetric transition currents J_mn = 2 Re[psi_m^* (-iH)_mn psi_n] out
/// of one source configuration. Targets appear in increasing rank order.
struct TransitionCurrents {
    std::uint64_t source = 0;
    struct Entry {
        std::uint64_t target;
        double current;
    };
    std::vector<Entry> entries;
};

TransitionCurrents transition_currents(const StateVector& state, const Configuration& source,
                                       const SectorHamiltonian& h);
TransitionCurrents transition_currents(const StateVector& state, std::uint64_t source_rank,
                                       const SectorHamiltonian& h);

/// Bell's choice: T = max(J, 0) / P_source, zero for outgoing currents.
struct JumpRateTable {
    std::uint64_t source = 0;
    double source_probability = 0.0;
    struct Entry {
        std::uint64_t target;
        double current;
        double rate;
    };
    std::vector<Entry> entries;
    double total_rate = 0.0;
};

JumpRateTable jump_rates(const TransitionCurrents& currents, const StateVector& state,
                         double probability_floor = kProbabilityFloor);

/// Pilot states on a fixed substep grid, shared read-only by every trajectory.
class PilotTimeline {
public:
    PilotTimeline(const Propagator& prop, const StateVector& initial, double t_final, double dt);

    const SectorHamiltonian& hamiltonian() const { return *h_; }
    const Eigen::VectorXcd& frame(int i) const { return frames_[i]; }
    double time(int i) const { return t0_ + i * dt_; }
    int steps() const { return static_cast<int>(frames_.size()) - 1; }
    double dt() const { return dt_; }
    double t0() const { return t0_; }

    /// Last frame index whose time is <= t (clamped).
    int frame_at(double t) const;

private:
    const SectorHamiltonian* h_;
    std::vector<Eigen::VectorXcd> frames_;
    double t0_ = 0.0;
    double dt_ = 0.0;
};

struct JumpEvent {
    double time;
    std::uint64_t from;
    std::uint64_t to;
};

struct Trajectory {
    std::vector<double> times;           // sampled substep times
    std::vector<std::uint64_t> configs;  // rank at each sampled time
    std::vector<JumpEvent> jumps;
    std::uint64_t seed = 0;
    long net_displacement = 0;           // signed site hops, unwrapped
    int backward_jumps = 0;
    int unclassified_jumps = 0;
};

struct TrajectoryOptions {
    std::uint64_t seed = 0;
    int sample_stride = 1;  // 0: record endpoints only
    // when set, record exactly these (sorted, repeatable) substep indices instead
    const std::vector<int>* record_steps = nullptr;
    double probability_floor = kProbabilityFloor;
    bool classify_backward = false;
};

/// Bernoulli thinning with one uniform draw per substep against the cumulative
/// rate vector; at most one jump per substep.
Trajectory run_trajectory(const PilotTimeline& timeline, std::uint64_t initial_rank,
                          const TrajectoryOptions& opts);

/// Convenience wrapper that builds its own timeline.
Trajectory simulate_trajectory(const Configuration& initial, const Propagator& prop,
                               const StateVector& psi0, double t_final, double dt,
                               std::uint64_t seed, const TrajectoryOptions& opts = {});

struct MasterEquationResult {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> probabilities;
    double max_equivariance_residual = 0.0;  // max_m |P_m - |psi_m|^2| over reports
    double normalization_defect = 0.0;       // worst |sum P - 1| over reports
};

/// RK4 on dP_m/dt = sum_n (T_mn P_n - T_nm P_m) with rates recomputed from the
/// concurrently evolved pilot state at every stage.
MasterEquationResult master_equation_evolve(const Eigen::VectorXd& p0, const Propagator& prop,
                                            const StateVector& psi0, double t_final, double dt,
                                            int report_stride = 100,
                                            double probability_floor = kProbabilityFloor);

struct EnsembleResult {
    std::vector<double> checkpoint_times;
    std::vector<std::vector<std::uint64_t>> checkpoint_counts;  // [checkpoint][rank]
    std::vector<std::uint64_t> initial_rank;
    std::vector<long> net_displacement;
    std::vector<std::uint32_t> jump_count;
    std::vector<std::uint32_t> backward_count;
    std::vector<std::uint32_t> unclassified_count;
    std::uint64_t trajectories = 0;
};

/// Independent trajectories with per-index seeds split off the master seed;
/// thread assignment cannot change any result.
EnsembleResult run_ensemble(const PilotTimeline& timeline, std::uint64_t n_trajectories,
                            std::uint64_t master_seed, const std::vector<double>& checkpoints,
                            int threads = 1, bool classify_backward = false,
                            double probability_floor = kProbabilityFloor);

struct EquivarianceCheckpoint {
    double t = 0.0;
    double tv_distance = 0.0;
    double noise_bound = 0.0;   // 3 sqrt(dim / (2 n))
    double z_fraction_above = 0.0;
    int z_bins = 0;
    std::vector<double> z_scores;  // per configuration; meaningful where z_valid
    std::vector<char> z_valid;     // normal approximation regime reached
};

struct EquivarianceReport {
    std::vector<EquivarianceCheckpoint> checkpoints;
    std::uint64_t trajectories = 0;
};

EquivarianceReport equivariance_statistics(const EnsembleResult& ensemble,
                                           const PilotTimeline& timeline,
                                           double z_threshold = 3.5);

/// Draw a configuration rank from |psi|^2 (CDF walk in rank order).
std::uint64_t sample_configuration(const Eigen::VectorXcd& amps, double uniform);

std::uint64_t splitmix64(std::uint64_t x);

} // namespace bellsim

#endif
