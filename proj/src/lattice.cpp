#include "bellsim/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bellsim {

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
    return (a > kSaturated - b) ? kSaturated : a + b;
}

} // namespace

void LatticeParams::validate() const {
    if (sites <= 0 || sites % 2 != 0)
        throw ConfigError("sites must be a positive even integer, got " + std::to_string(sites));
    if (!(delta > 0.0))
        throw ConfigError("delta must be positive");
    if (mass < 0.0)
        throw ConfigError("mass must be nonnegative");
    if (quanta < 0 || quanta > sites)
        throw ConfigError("quanta must lie in [0, sites]");
    if (!std::isfinite(coupling))
        throw ConfigError("coupling must be finite");
}

SectorBasis SectorBasis::enumerate(const LatticeParams& params, std::uint64_t dimension_cap) {
    params.validate();
    SectorBasis basis;
    basis.params_ = params;

    const int n = params.sites;
    basis.choose_.assign(n + 1, std::vector<std::uint64_t>(n + 1, 0));
    for (int i = 0; i <= n; ++i) {
        basis.choose_[i][0] = 1;
        for (int k = 1; k <= i; ++k)
            basis.choose_[i][k] = sat_add(basis.choose_[i - 1][k - 1],
                                          (k <= i - 1) ? basis.choose_[i - 1][k] : 0);
    }

    basis.dimension_ = basis.choose(n, params.quanta);
    if (basis.dimension_ > dimension_cap) {
        std::ostringstream msg;
        msg << "sector dimension C(" << n << ", " << params.quanta << ") exceeds cap "
            << dimension_cap;
        throw SectorTooLarge(msg.str());
    }
    return basis;
}

std::uint64_t SectorBasis::choose(int n, int k) const {
    if (k < 0 || k > n) return 0;
    return choose_[n][k];
}

std::uint64_t SectorBasis::rank(const Configuration& c) const {
    const int n = params_.sites;
    const int w = params_.quanta;
    if (static_cast<int>(c.size()) != w)
        throw ConfigError("configuration size does not match sector quanta");
    // lexicographic rank: count configurations strictly below c
    std::uint64_t r = 0;
    int prev = -1;
    for (int i = 0; i < w; ++i) {
        if (c[i] <= prev || c[i] >= n)
            throw ConfigError("configuration must be strictly increasing within [0, sites)");
        for (int v = prev + 1; v < c[i]; ++v)
            r += choose(n - 1 - v, w - 1 - i);
        prev = c[i];
    }
    return r;
}

Configuration SectorBasis::unrank(std::uint64_t index) const {
    const int n = params_.sites;
    const int w = params_.quanta;
    if (index >= dimension_)
        throw ConfigError("rank out of range");
    Configuration c(w);
    int v = 0;
    for (int i = 0; i < w; ++i) {
        while (true) {
            const std::uint64_t block = choose(n - 1 - v, w - 1 - i);
            if (index < block) break;
            index -= block;
            ++v;
        }
        c[i] = v++;
    }
    return c;
}

double contact_interaction_term(const LatticeParams& params, const Configuration& c) {
    if (params.coupling == 0.0) return 0.0;
    std::vector<char> occ(params.sites, 0);
    for (int s : c) occ[s] = 1;
    double total = 0.0;
    for (int j = 0; j < params.half(); ++j) {
        const int ne = occ[2 * j];
        const int no = occ[2 * j + 1];
        total += static_cast<double>(ne + no - 2 * ne * no);
    }
    return (params.coupling / params.delta) * total;
}

SectorHamiltonian SectorHamiltonian::assemble(const LatticeParams& params,
                                              std::uint64_t dimension_cap) {
    SectorHamiltonian h;
    h.basis_ = SectorBasis::enumerate(params, dimension_cap);

    const int n = params.sites;
    const double hop = 1.0 / (2.0 * params.delta);
    const std::uint64_t dim = h.basis_.dimension();
    h.diag_.resize(dim);
    h.rows_.resize(dim);

    std::vector<char> occ(n, 0);
    for (std::uint64_t r = 0; r < dim; ++r) {
        const Configuration c = h.basis_.unrank(r);

        double d = 0.0;
        for (int s : c) d += params.mass * ((s % 2 == 0) ? 1.0 : -1.0);
        d += contact_interaction_term(params, c);
        h.diag_[r] = d;

        std::fill(occ.begin(), occ.end(), 0);
        for (int s : c) occ[s] = 1;

        // one-quantum moves to adjacent empty sites (periodic)
        for (std::size_t i = 0; i < c.size(); ++i) {
            const int s = c[i];
            for (int dir : {+1, -1}) {
                const int t = ((s + dir) % n + n) % n;
                if (occ[t]) continue;

                Configuration moved(c);
                moved[i] = t;
                // removing position i, reinserting t at its ordered position:
                // net sign (-1)^(i + new position); nontrivial only across the seam
                std::sort(moved.begin(), moved.end());
                const std::size_t j = static_cast<std::size_t>(
                    std::lower_bound(moved.begin(), moved.end(), t) - moved.begin());
                const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;

                // row r holds <c|H|moved>; the hop INTO c from the right neighbor
                // carries +i/(2 delta), so the element toward it is the conjugate
                const cplx amp = cplx(0.0, dir > 0 ? -hop : hop) * sign;
                h.rows_[r].push_back({h.basis_.rank(moved), amp});
            }
        }
        std::sort(h.rows_[r].begin(), h.rows_[r].end(),
                  [](const Entry& a, const Entry& b) { return a.col < b.col; });
        // a 2-site ring reaches the same neighbor from both sides: merge
        std::vector<Entry> merged;
        for (const Entry& e : h.rows_[r]) {
            if (!merged.empty() && merged.back().col == e.col) merged.back().amp += e.amp;
            else merged.push_back(e);
        }
        std::erase_if(merged, [](const Entry& e) { return e.amp == cplx(0.0, 0.0); });
        h.rows_[r] = std::move(merged);
    }
    return h;
}

cplx SectorHamiltonian::element(std::uint64_t row, std::uint64_t col) const {
    if (row == col) return cplx(diag_[row], 0.0);
    const auto& r = rows_[row];
    auto it = std::lower_bound(r.begin(), r.end(), col,
                               [](const Entry& e, std::uint64_t c) { return e.col < c; });
    if (it != r.end() && it->col == col) return it->amp;
    return cplx(0.0, 0.0);
}

void SectorHamiltonian::apply(const cplx* x, cplx* y) const {
    const std::uint64_t dim = basis_.dimension();
    for (std::uint64_t r = 0; r < dim; ++r) {
        cplx acc = diag_[r] * x[r];
        for (const Entry& e : rows_[r]) acc += e.amp * x[e.col];
        y[r] = acc;
    }
}

Eigen::VectorXcd SectorHamiltonian::apply(const Eigen::VectorXcd& x) const {
    Eigen::VectorXcd y(x.size());
    apply(x.data(), y.data());
    return y;
}

Eigen::MatrixXcd SectorHamiltonian::dense() const {
    const auto dim = static_cast<Eigen::Index>(basis_.dimension());
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        m(r, r) = diag_[r];
        for (const Entry& e : rows_[r]) m(r, static_cast<Eigen::Index>(e.col)) = e.amp;
    }
    return m;
}

double SectorHamiltonian::spectral_radius_bound() const {
    double bound = 0.0;
    for (std::uint64_t r = 0; r < basis_.dimension(); ++r) {
        double row_sum = std::abs(diag_[r]);
        for (const Entry& e : rows_[r]) row_sum += std::abs(e.amp);
        bound = std::max(bound, row_sum);
    }
    return bound;
}

DispersionPoint dispersion(double p, const LatticeParams& params) {
    DispersionPoint d;
    d.p = p;
    d.p_lat = std::sin(p * params.delta) / params.delta;
    d.e_lat = std::hypot(d.p_lat, params.mass);
    return d;
}

std::vector<double> momentum_grid(const LatticeParams& params) {
    std::vector<double> grid(params.sites);
    const double dp = 2.0 * M_PI / (params.sites * params.delta);
    for (int j = 0; j < params.sites; ++j) grid[j] = j * dp;
    return grid;
}

DoublingReport doubling_report(const LatticeParams& params) {
    constexpr double tol = 1e-9;
    DoublingReport rep;

    LatticeParams one = params;
    one.quanta = 1;
    one.coupling = 0.0;
    const SectorHamiltonian h1 = SectorHamiltonian::assemble(one);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h1.dense());
    rep.staggered_levels.assign(es.eigenvalues().data(),
                                es.eigenvalues().data() + es.eigenvalues().size());

    for (double e : rep.staggered_levels) {
        if (e > tol) ++rep.positive_levels;
        else if (e < -tol) ++rep.negative_levels;
        else ++rep.zero_levels;
    }
    rep.massless_degenerate = rep.zero_levels > 0;

    // reduced momenta p_j = 2 pi j / (sites delta), j = 0..N-1; the partner
    // j+N carries the opposite branch of the same pair
    const std::vector<double> grid = momentum_grid(params);
    for (int j = 0; j < params.half(); ++j) {
        const DispersionPoint d = dispersion(grid[j], params);
        rep.predicted_levels.push_back(+d.e_lat);
        rep.predicted_levels.push_back(-d.e_lat);
    }
    std::sort(rep.predicted_levels.begin(), rep.predicted_levels.end());
    for (std::size_t i = 0; i < rep.predicted_levels.size(); ++i)
        rep.max_level_error = std::max(
            rep.max_level_error, std::abs(rep.predicted_levels[i] - rep.staggered_levels[i]));

    // the naive discretization keeps both spinor components on every site,
    // so every momentum of the full grid contributes a +-E_lat pair
    std::vector<double> naive;
    for (double p : grid) {
        const DispersionPoint d = dispersion(p, params);
        naive.push_back(+d.e_lat);
        naive.push_back(-d.e_lat);
    }
    std::sort(naive.begin(), naive.end());
    for (std::size_t i = 0; i < naive.size();) {
        std::size_t j = i + 1;
        while (j < naive.size() && naive[j] - naive[i] <= tol) ++j;
        rep.naive_degeneracy[std::abs(naive[i]) <= tol ? 0.0 : naive[i]] = static_cast<int>(j - i);
        i = j;
    }
    return rep;
}

} // namespace bellsim
