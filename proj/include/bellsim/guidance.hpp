#ifndef BELLSIM_GUIDANCE_HPP
#define BELLSIM_GUIDANCE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bellsim/dynamics.hpp"
#include "bellsim/evolution.hpp"
#include "bellsim/lattice.hpp"

namespace bellsim {

constexpr double kNodeFloor = 1e-10;  // epsilon_rho below which the law is singular

/// Two-component field on the paired grid: point j collects sites (2j, 2j+1),
/// amplitudes divided by sqrt(2 delta).
struct SpinorField {
    Eigen::VectorXcd upper;
    Eigen::VectorXcd lower;
    double spacing = 0.0;  // 2 delta
    double t = 0.0;

    int points() const { return static_cast<int>(upper.size()); }
    double box() const { return points() * spacing; }
    double x(int j) const { return j * spacing; }
    double l2_norm_sq() const;  // trapezoid = spacing * sum on the periodic grid
};

SpinorField staggered_to_spinor(const Eigen::VectorXcd& site_amps, const LatticeParams& params,
                                double t = 0.0);

/// v = Re[psi^*(k+1) psi(k)] / |psi(k)|^2 on a one-quantum state.
double lattice_velocity(const StateVector& state, int site, const LatticeParams& params,
                        double probability_floor = kProbabilityFloor);

/// |J+ + J-| / (|J+| + |J-|) for the two one-quantum currents out of `site`;
/// O(delta) on smooth states because the leading parts cancel.
double current_cancellation_check(const StateVector& state, int site,
                                  const LatticeParams& params,
                                  double probability_floor = kProbabilityFloor);

struct GuidancePoint {
    double rho = 0.0;
    std::vector<double> current;  // one component per quantum
};

/// Density and per-coordinate currents of the Slater state built from the
/// given orbital fields, evaluated at one configuration-space point. The
/// spinor contraction runs over all 2^omega component assignments.
GuidancePoint current_density(const std::vector<SpinorField>& orbitals,
                              const std::vector<double>& positions);

/// Orbital-field frames at fixed spacing; frame f lives at t0 + f * frame_dt.
struct GuidanceTimeline {
    std::vector<std::vector<SpinorField>> frames;
    double t0 = 0.0;
    double frame_dt = 0.0;

    int frame_count() const { return static_cast<int>(frames.size()); }
};

/// One-quantum timeline view of a pilot timeline (stride >= 1 frames).
GuidanceTimeline spinor_timeline(const PilotTimeline& timeline, const LatticeParams& params,
                                 int stride = 1);

struct GuidanceTrajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> positions;  // wrapped into [0, box)
    std::vector<double> unwrapped;               // final unwrapped coordinates
    bool node_terminated = false;
    double termination_time = 0.0;
    double min_rho_seen = 0.0;
};

/// RK4 on dX/dt = J/rho with the velocity multilinear in space and linear in
/// time between frames. Terminates with NodeReached diagnostics when rho
/// drops below the floor.
GuidanceTrajectory integrate_guidance(const std::vector<double>& x0,
                                      const GuidanceTimeline& timeline, double t_final,
                                      double dt, double rho_floor = kNodeFloor,
                                      int sample_stride = 1);

struct ConvergenceSpec {
    std::vector<int> resolutions;   // 2N per resolution, increasing
    double box_length = 32.0;       // fixed physical box; delta = box / 2N
    double mass = 0.0;
    std::vector<Orbital> packet;    // physical components of the one quantum
    double t_final = 8.0;
    double dt_factor = 0.002;       // substep dt = dt_factor * delta
    std::uint64_t trials = 200;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct ConvergenceRow {
    int two_n = 0;
    double delta = 0.0;
    double mean_error = 0.0;         // mean |X_jump(T) - X_guidance(T)|, unwrapped
    double backward_fraction = 0.0;  // share of trajectories with a backward jump
    double backward_jump_share = 0.0;  // backward jumps / all jumps
    std::uint64_t backward_jumps = 0;
    std::uint64_t trials = 0;
    std::uint64_t seed = 0;
    double mean_jumps = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    bool pass = false;
    bool pass_defined = false;  // needs at least two resolutions
    std::string note;
};

/// The continuum-limit experiment: the same physical packet at several lattice
/// resolutions, jump trajectories against the deterministic guidance flow.
ConvergenceReport convergence_study(const ConvergenceSpec& spec);

struct NonlocalityReport {
    std::vector<double> grid;  // x values shared by rows and columns
    Eigen::MatrixXd j1;        // J_1(x1, x2), normalized along with rho
    Eigen::MatrixXd rho;       // rho(x1, x2), integrates to 1 on the grid
    double sigma_ratio = 0.0;  // sigma_2 / sigma_1 on the support product region
    double velocity_spread = 0.0;
    double x1_star = 0.0;
    int support_rows = 0;
    int support_cols = 0;
};

/// Factorization defect and conditional-velocity spread of the antisymmetrized
/// two-orbital state chi(x1)phi(x2) - phi(x1)chi(x2).
NonlocalityReport nonlocality_analysis(const SpinorField& chi, const SpinorField& phi,
                                       double rho_floor = kNodeFloor,
                                       double support_threshold = 1e-8);

/// The four-term expansion of J_1 for the antisymmetrized two-orbital state;
/// used as the second route against current_density.
double two_quanta_current_closed_form(const SpinorField& chi, const SpinorField& phi, int i1,
                                      int i2);

} // namespace bellsim

#endif
