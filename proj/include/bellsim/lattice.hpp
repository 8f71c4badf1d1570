#ifndef BELLSIM_LATTICE_HPP
#define BELLSIM_LATTICE_HPP

#include <complex>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "bellsim/errors.hpp"

namespace bellsim {

using cplx = std::complex<double>;

/// Staggered chain with periodic closure: sites 0..2N-1, even sites carry the
/// upper spinor component, odd sites the lower one.
struct LatticeParams {
    int sites = 0;          // 2N, must be even and positive
    double delta = 1.0;     // lattice spacing, > 0
    double mass = 0.0;      // >= 0
    int quanta = 0;         // fermion number omega, in [0, sites]
    double coupling = 0.0;  // contact coupling g (0 disables the term)

    void validate() const;
    int half() const { return sites / 2; }
    double box_length() const { return sites * delta; }
};

/// One beable: the strictly increasing list of occupied sites.
using Configuration = std::vector<int>;

/// Rank/unrank bijection between configurations of `quanta` occupied sites and
/// [0, C(sites, quanta)), in lexicographic order.
class SectorBasis {
public:
    static constexpr std::uint64_t kDefaultDimensionCap = 2'000'000;

    SectorBasis() = default;
    static SectorBasis enumerate(const LatticeParams& params,
                                 std::uint64_t dimension_cap = kDefaultDimensionCap);

    const LatticeParams& params() const { return params_; }
    std::uint64_t dimension() const { return dimension_; }

    std::uint64_t rank(const Configuration& c) const;
    Configuration unrank(std::uint64_t index) const;

private:
    LatticeParams params_;
    std::uint64_t dimension_ = 0;
    // choose_[n][k] = C(n, k), saturated at uint64 max
    std::vector<std::vector<std::uint64_t>> choose_;

    std::uint64_t choose(int n, int k) const;
};

/// Sparse Hermitian sector Hamiltonian. Rows hold the off-diagonal hop
/// amplitudes in increasing column order; the diagonal is stored separately.
class SectorHamiltonian {
public:
    struct Entry {
        std::uint64_t col;
        cplx amp;
    };

    static SectorHamiltonian assemble(const LatticeParams& params,
                                      std::uint64_t dimension_cap = SectorBasis::kDefaultDimensionCap);

    const SectorBasis& basis() const { return basis_; }
    const LatticeParams& params() const { return basis_.params(); }
    std::uint64_t dimension() const { return basis_.dimension(); }

    double diagonal(std::uint64_t row) const { return diag_[row]; }
    const std::vector<Entry>& row(std::uint64_t r) const { return rows_[r]; }

    /// <row| H |col>, zero when the configurations are not connected.
    cplx element(std::uint64_t row, std::uint64_t col) const;

    void apply(const cplx* x, cplx* y) const;          // y = H x
    Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const;
    Eigen::MatrixXcd dense() const;

    /// Gershgorin bound on the spectral radius.
    double spectral_radius_bound() const;

private:
    SectorBasis basis_;
    std::vector<double> diag_;
    std::vector<std::vector<Entry>> rows_;
};

/// Contact-term diagonal shift of one configuration:
/// (g/delta) * sum_cells [n_even + n_odd - 2 n_even n_odd].
double contact_interaction_term(const LatticeParams& params, const Configuration& c);

struct DispersionPoint {
    double p = 0.0;
    double p_lat = 0.0;  // sin(p delta)/delta
    double e_lat = 0.0;  // sqrt(p_lat^2 + m^2)
};

DispersionPoint dispersion(double p, const LatticeParams& params);

/// Single-particle momenta of the periodic chain: p_j = 2 pi j / (sites * delta).
std::vector<double> momentum_grid(const LatticeParams& params);

/// Staggered one-quantum spectrum versus the naive-discretization degeneracies.
struct DoublingReport {
    std::vector<double> staggered_levels;   // ascending, sites of them
    int positive_levels = 0;
    int negative_levels = 0;
    int zero_levels = 0;                    // |E| <= tol; nonzero only at m = 0
    bool massless_degenerate = false;
    // naive 2-component discretization: energy -> multiplicity (keys rounded)
    std::map<double, int> naive_degeneracy;
    // reduced-set predictions +-E_lat(p_j), j = 0..N-1, ascending
    std::vector<double> predicted_levels;
    double max_level_error = 0.0;           // |staggered - predicted| (sorted)
};

DoublingReport doubling_report(const LatticeParams& params);

} // namespace bellsim

#endif
