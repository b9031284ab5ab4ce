#include "hf/spectral.hpp"

#include "hf/executor.hpp"
#include "hf/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace hf::spectral {

const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::NoConvergenceQR: return "NoConvergenceQR";
        case ErrorKind::NoStabilization: return "NoStabilization";
        case ErrorKind::NonMonotoneRank: return "NonMonotoneRank";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "unknown";
}

namespace {

void require_square_finite(const Matrix& a, const char* what) {
    if (a.rows() != a.cols()) throw SpectralError(ErrorKind::InvalidArgument, std::string(what) + ": matrix is not square");
    if (!a.allFinite()) throw SpectralError(ErrorKind::InvalidArgument, std::string(what) + ": matrix has NaN/Inf entries");
}

void sort_spectrum(std::vector<Complex>& ev) {
    std::sort(ev.begin(), ev.end(), [](const Complex& x, const Complex& y) {
        const double ax = std::abs(x), ay = std::abs(y);
        if (ax != ay) return ax > ay;
        if (x.real() != y.real()) return x.real() > y.real();
        return x.imag() > y.imag();
    });
}

}  // namespace

std::vector<Complex> eigenvalues(const Matrix& a) {
    require_square_finite(a, "eigenvalues");
    const Eigen::Index d = a.rows();
    std::vector<Complex> ev;
    if (d == 1) {
        ev.emplace_back(a(0, 0), 0.0);
    } else if (d == 2) {
        const double half_tr = 0.5 * (a(0, 0) + a(1, 1));
        const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        const double disc = half_tr * half_tr - det;
        if (disc >= 0.0) {
            const double q = half_tr + std::copysign(std::sqrt(disc), half_tr);
            ev.emplace_back(q, 0.0);
            ev.emplace_back(q != 0.0 ? det / q : 0.0, 0.0);
        } else {
            const double w = std::sqrt(-disc);
            ev.emplace_back(half_tr, w);
            ev.emplace_back(half_tr, -w);
        }
    } else if (d > 2) {
        Eigen::EigenSolver<Matrix> solver(a, false);
        if (solver.info() != Eigen::Success) {
            throw SpectralError(ErrorKind::NoConvergenceQR, "shifted QR iteration did not converge");
        }
        const auto& v = solver.eigenvalues();
        for (Eigen::Index i = 0; i < d; ++i) ev.push_back(v[i]);
    }
    sort_spectrum(ev);
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].imag() == 0.0) continue;
        if (ev[i].imag() < 0.0 || i + 1 >= ev.size() || ev[i + 1] != std::conj(ev[i])) {
            throw SpectralError(ErrorKind::NoConvergenceQR, "eigenvalues of a real matrix are not in conjugate pairs");
        }
        ++i;
    }
    return ev;
}

RankResult numerical_rank(const Matrix& a, double rtol) {
    if (!a.allFinite()) throw SpectralError(ErrorKind::InvalidArgument, "numerical_rank: matrix has NaN/Inf entries");
    RankResult r;
    if (a.size() == 0) return r;
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto& s = svd.singularValues();
    r.singular_values.assign(s.data(), s.data() + s.size());
    const double smax = s.size() ? s(0) : 0.0;
    if (smax > 0.0) {
        for (double v : r.singular_values) r.rank += v > rtol * smax ? 1 : 0;
    }
    return r;
}

RankSweep rank_sweep(const Matrix& dp, int n_max, double rtol) {
    require_square_finite(dp, "rank_sweep");
    if (n_max < 1) throw SpectralError(ErrorKind::InvalidArgument, "rank_sweep: n_max must be at least 1");
    const Eigen::Index d = dp.rows();
    RankSweep sw;
    sw.rtol = rtol;
    std::vector<Matrix> left;
    Matrix p = dp;
    for (int m = 1; m <= n_max; ++m) {
        if (m > 1) p = p * dp;
        Eigen::JacobiSVD<Matrix> svd(p, Eigen::ComputeThinU);
        const auto& s = svd.singularValues();
        const double smax = s.size() ? s(0) : 0.0;
        sw.scales.push_back(smax);
        std::vector<double> sv(s.data(), s.data() + s.size());
        int rank = 0;
        if (smax > 0.0) {
            for (double& v : sv) {
                v /= smax;
                rank += v > rtol ? 1 : 0;
            }
            p /= smax;
        }
        sw.ranks.push_back(rank);
        sw.singular_values.push_back(std::move(sv));
        left.push_back(svd.matrixU());
    }
    for (int m = 1; m < n_max; ++m) {
        if (sw.ranks[m] > sw.ranks[m - 1]) {
            std::ostringstream os;
            os << "rank increased from " << sw.ranks[m - 1] << " to " << sw.ranks[m] << " at power " << m + 1
               << "; rtol " << rtol << " is mis-set for this matrix";
            throw SpectralError(ErrorKind::NonMonotoneRank, os.str());
        }
    }
    int idx = n_max;
    while (idx > 1 && sw.ranks[idx - 2] == sw.ranks[n_max - 1]) --idx;
    if (idx == n_max && n_max > 1 && sw.ranks.back() != 0) {
        std::ostringstream os;
        os << "ranks still decreasing at n_max = " << n_max;
        throw SpectralError(ErrorKind::NoStabilization, os.str());
    }
    sw.stabilization_index = idx;
    sw.r = sw.ranks[idx - 1];
    sw.basis = sw.r > 0 ? Matrix(left[idx - 1].leftCols(sw.r)) : Matrix(d, 0);
    return sw;
}

double invariance_residual(const Matrix& dp, const Matrix& basis) {
    if (basis.cols() == 0) return 0.0;
    const Matrix img = dp * basis;
    const Matrix res = img - basis * (basis.transpose() * img);
    Eigen::JacobiSVD<Matrix> svd(res);
    return svd.singularValues()(0);
}

RankProfile rank_profile(const poincare::Map& map, const State& u_star, int m, double radius, int n_samples,
                         std::uint64_t seed, double rtol, double delta_rel) {
    if (m < 1 || n_samples < 0 || !(radius >= 0.0)) {
        throw SpectralError(ErrorKind::InvalidArgument, "rank_profile: need m >= 1, n_samples >= 0, radius >= 0");
    }
    auto iterate = [&](const State& u) {
        State v = u;
        for (int i = 0; i < m; ++i) v = map(v);
        return v;
    };
    RankProfile prof;
    prof.points.push_back(u_star);
    for (int s = 0; s < n_samples; ++s) {
        std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(s)));
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        State p = u_star;
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += radius * unit(rng);
        prof.points.push_back(p);
    }
    for (std::size_t i = 0; i < prof.points.size(); ++i) {
        Matrix J;
        try {
            J = poincare::jacobian_fd(iterate, prof.points[i], delta_rel);
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "rank_profile sample " << i << ": " << e.what();
            throw poincare::PoincareError(poincare::ErrorKind::MapFailure, os.str());
        }
        prof.ranks.push_back(numerical_rank(J, rtol).rank);
    }
    const auto [lo, hi] = std::minmax_element(prof.ranks.begin(), prof.ranks.end());
    prof.constant = *lo == *hi;
    std::ostringstream os;
    if (prof.constant) {
        prof.rank = *lo;
        os << "rank " << prof.rank << " at all " << prof.ranks.size() << " points";
    } else {
        const auto at = [&](auto it) { return static_cast<std::size_t>(it - prof.ranks.begin()); };
        os << "rank " << *lo << " at point " << at(lo) << ", rank " << *hi << " at point " << at(hi);
    }
    prof.details = os.str();
    return prof;
}

double spectrum_mismatch(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    std::vector<bool> used(b.size(), false);
    double worst = 0.0;
    for (const Complex& x : a) {
        std::size_t best = b.size();
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (!used[j] && (best == b.size() || std::abs(x - b[j]) < std::abs(x - b[best]))) best = j;
        }
        used[best] = true;
        worst = std::max({worst, std::abs(x.real() - b[best].real()), std::abs(x.imag() - b[best].imag())});
    }
    return worst;
}

namespace {

State locate_crossing(const HybridSystem& system, const SectionDef& target, const PeriodicOrbitResult& orbit,
                      const flow::StepperConfig& cfg) {
    const State x0 = orbit.section.lift(orbit.fixed_point);
    SectionStop stop = make_section_stop(target, cfg, false);
    const Execution ex =
        execute_until(system, orbit.section.domain, x0, 2.0 * orbit.period + 1.0, cfg, {}, &stop, false);
    if (ex.termination != Termination::Section) {
        throw poincare::PoincareError(poincare::ErrorKind::NoReturn,
                                      "orbit does not cross section '" + target.name + "' within two periods");
    }
    return target.coords(ex.final_state());
}

}  // namespace

ConsistencyReport section_consistency(const HybridSystem& system, const std::vector<SectionDef>& sections,
                                      const PeriodicOrbitResult& orbit, const flow::StepperConfig& cfg, int m,
                                      const ConsistencyOptions& opts) {
    if (m < 1) throw SpectralError(ErrorKind::InvalidArgument, "section_consistency: m must be at least 1");
    ConsistencyReport rep;
    rep.m = m;
    rep.zero_tol = opts.zero_tol;
    for (const SectionDef& s : sections) {
        SectionSpectrum sp;
        sp.name = s.name;
        const bool own = s.name == orbit.section.name && s.domain == orbit.section.domain;
        State u0 = own ? orbit.fixed_point : locate_crossing(system, s, orbit, cfg);
        const poincare::FixedPointResult fp = poincare::find_fixed_point(system, s, u0, cfg, opts.fixed_point);
        sp.fixed_point = fp.u;
        sp.jacobian = poincare::jacobian_fd(
            [&](const State& v) { return poincare::return_map(system, s, v, cfg, opts.fixed_point.max_time).u_out; },
            fp.u, opts.fixed_point.delta_rel, opts.fixed_point.scheme);
        Matrix power = Matrix::Identity(sp.jacobian.rows(), sp.jacobian.cols());
        for (int i = 0; i < m; ++i) power = power * sp.jacobian;
        sp.multipliers = eigenvalues(power);
        for (const Complex& z : sp.multipliers) (std::abs(z) > opts.zero_tol ? sp.nonzero : sp.near_zero).push_back(z);
        rep.sections.push_back(std::move(sp));
    }
    for (std::size_t i = 0; i < rep.sections.size(); ++i) {
        for (std::size_t j = i + 1; j < rep.sections.size(); ++j) {
            const double gap = spectrum_mismatch(rep.sections[i].nonzero, rep.sections[j].nonzero);
            if (!std::isfinite(gap)) rep.counts_agree = false;
            rep.max_mismatch = std::max(rep.max_mismatch, gap);
        }
    }
    return rep;
}

bool is_stable(const std::vector<Complex>& multipliers, double zero_tol) {
    return std::all_of(multipliers.begin(), multipliers.end(),
                       [&](const Complex& z) { return std::abs(z) <= zero_tol || std::abs(z) < 1.0; });
}

FloquetReport floquet_report(const HybridSystem& system, const SectionDef& section, const State& u0,
                             const flow::StepperConfig& cfg, const FloquetOptions& opts) {
    const poincare::FixedPointResult fp = poincare::find_fixed_point(system, section, u0, cfg, opts.fixed_point);
    FloquetReport rep;
    rep.orbit = poincare::make_orbit(section, fp);
    rep.fixed_point = fp.u;
    rep.period = fp.ret.return_time;
    rep.jacobian = poincare::jacobian_fd(
        [&](const State& v) { return poincare::return_map(system, section, v, cfg, opts.fixed_point.max_time).u_out; },
        fp.u, opts.fixed_point.delta_rel, opts.fixed_point.scheme);
    rep.multipliers = eigenvalues(rep.jacobian);
    rep.sweep = rank_sweep(rep.jacobian, opts.n_max, opts.rtol);
    rep.zero_tol = opts.zero_tol;
    rep.stable = is_stable(rep.multipliers, opts.zero_tol);
    return rep;
}

// Exact arithmetic.

IntMatrix IntMatrix::identity(int n) {
    IntMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1;
    return m;
}

std::string IntMatrix::str() const {
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < rows; ++i) {
        os << (i ? "; " : "") << '[';
        for (int j = 0; j < cols; ++j) os << (j ? ", " : "") << (*this)(i, j);
        os << ']';
    }
    os << ']';
    return os.str();
}

IntMatrix operator*(const IntMatrix& x, const IntMatrix& y) {
    if (x.cols != y.rows) throw SpectralError(ErrorKind::InvalidArgument, "integer matrix product: shape mismatch");
    IntMatrix z(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i) {
        for (int k = 0; k < x.cols; ++k) {
            if (x(i, k) == 0) continue;
            for (int j = 0; j < y.cols; ++j) z(i, j) += x(i, k) * y(k, j);
        }
    }
    return z;
}

IntMatrix power(const IntMatrix& x, int s) {
    IntMatrix p = IntMatrix::identity(x.rows);
    for (int i = 0; i < s; ++i) p = p * x;
    return p;
}

int exact_rank(IntMatrix m) {
    int rank = 0;
    BigInt prev = 1;
    for (int col = 0; col < m.cols && rank < m.rows; ++col) {
        int piv = rank;
        while (piv < m.rows && m(piv, col) == 0) ++piv;
        if (piv == m.rows) continue;
        if (piv != rank) {
            for (int j = 0; j < m.cols; ++j) std::swap(m(piv, j), m(rank, j));
        }
        for (int i = rank + 1; i < m.rows; ++i) {
            for (int j = col + 1; j < m.cols; ++j) {
                m(i, j) = (m(rank, col) * m(i, j) - m(i, col) * m(rank, j)) / prev;
            }
            m(i, col) = 0;
        }
        prev = m(rank, col);
        ++rank;
    }
    return rank;
}

std::vector<OracleViolation> prop1_check(const IntMatrix& a, int trial, bool* literal_failure) {
    if (a.rows != a.cols) throw SpectralError(ErrorKind::InvalidArgument, "prop1_check: matrix is not square");
    const int m = a.rows;
    std::vector<int> ranks(2 * m + 1);  // ranks[s] = rank A^s
    IntMatrix p = IntMatrix::identity(m);
    ranks[0] = m;
    for (int s = 1; s <= 2 * m; ++s) {
        p = p * a;
        ranks[s] = exact_rank(p);
    }
    const int r = ranks[1];
    std::vector<OracleViolation> out;
    for (int s = r + 1; s <= 2 * m; ++s) {
        if (ranks[s] != ranks[r + 1]) {
            std::ostringstream os;
            os << "rank A = " << r << ", rank A^" << r + 1 << " = " << ranks[r + 1] << " but rank A^" << s << " = "
               << ranks[s];
            out.push_back({trial, os.str(), a.str()});
            break;
        }
    }
    if (literal_failure) {
        const int n = std::max(r, 1);
        *literal_failure = ranks[2 * n] != ranks[n];
    }
    return out;
}

std::vector<IntMatrix> cyclic_products(const std::vector<IntMatrix>& factors) {
    const int k = static_cast<int>(factors.size());
    std::vector<IntMatrix> b;
    for (int j = 0; j < k; ++j) {
        IntMatrix p = IntMatrix::identity(factors[j].cols);
        for (int t = 0; t < k; ++t) p = factors[(j + t) % k] * p;
        b.push_back(std::move(p));
    }
    return b;
}

std::vector<OracleViolation> prop2_check(const std::vector<IntMatrix>& factors, int trial, bool* literal_failure) {
    const int k = static_cast<int>(factors.size());
    if (k == 0) throw SpectralError(ErrorKind::InvalidArgument, "prop2_check: empty chain");
    for (int j = 0; j < k; ++j) {
        if (factors[(j + 1) % k].cols != factors[j].rows) {
            throw SpectralError(ErrorKind::InvalidArgument, "prop2_check: chain dimensions are not cyclic");
        }
    }
    const std::vector<IntMatrix> b = cyclic_products(factors);
    int n_min = b[0].rows;
    for (const auto& x : b) n_min = std::min(n_min, x.rows);

    // ranks[j][s] = rank B_j^s for s <= n_min + 2
    std::vector<std::vector<int>> ranks(k);
    for (int j = 0; j < k; ++j) {
        IntMatrix p = IntMatrix::identity(b[j].rows);
        ranks[j].push_back(b[j].rows);
        for (int s = 1; s <= n_min + 2; ++s) {
            p = p * b[j];
            ranks[j].push_back(exact_rank(p));
        }
    }

    auto witness = [&] {
        std::ostringstream os;
        for (int j = 0; j < k; ++j) os << (j ? " ; " : "") << "A" << j << " = " << factors[j].str();
        return os.str();
    };
    std::vector<OracleViolation> out;
    for (int n = n_min; n <= n_min + 1 && out.empty(); ++n) {
        for (int j = 1; j < k; ++j) {
            if (ranks[j][n + 1] != ranks[0][n + 1]) {
                std::ostringstream os;
                os << "n = " << n << ": rank B_0^" << n + 1 << " = " << ranks[0][n + 1] << " but rank B_" << j << "^"
                   << n + 1 << " = " << ranks[j][n + 1];
                out.push_back({trial, os.str(), witness()});
                break;
            }
        }
        for (int j = 0; j < k && out.empty(); ++j) {
            if (b[j].rows <= n && ranks[j][n + 1] != ranks[j][n]) {
                std::ostringstream os;
                os << "n = " << n << ": rank B_" << j << "^" << n + 1 << " = " << ranks[j][n + 1] << " but rank B_" << j
                   << "^" << n << " = " << ranks[j][n];
                out.push_back({trial, os.str(), witness()});
            }
        }
    }
    if (literal_failure) {
        *literal_failure = false;
        for (int j = 0; j < k; ++j) *literal_failure = *literal_failure || ranks[j][n_min + 1] != ranks[j][n_min];
    }
    return out;
}

namespace {

// Entries uniform in [-3, 3]; the zero density and an optional strictly
// upper-triangular pattern vary per draw so that rank-deficient and
// nilpotent matrices occur regularly.
IntMatrix random_int_matrix(std::mt19937_64& rng, int rows, int cols, bool allow_triangular) {
    std::uniform_int_distribution<int> entry(-3, 3);
    std::uniform_int_distribution<int> pattern(0, allow_triangular ? 4 : 3);
    static constexpr double kZeroDensity[] = {0.0, 0.4, 0.7, 0.85};
    const int pat = pattern(rng);
    std::bernoulli_distribution zero(pat < 4 ? kZeroDensity[pat] : 0.3);
    IntMatrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const int v = entry(rng);
            const bool drop = zero(rng) || (pat == 4 && j <= i);
            m(i, j) = drop ? 0 : v;
        }
    }
    return m;
}

OracleReport merge(std::string name, int trials, std::uint64_t seed, std::vector<std::vector<OracleViolation>>& per,
                   const std::vector<char>& literal, const std::vector<OracleViolation>& literal_witness) {
    OracleReport rep;
    rep.name = std::move(name);
    rep.trials = trials;
    rep.seed = seed;
    for (int t = 0; t < trials; ++t) {
        for (auto& v : per[t]) rep.violations.push_back(std::move(v));
        if (literal[t]) {
            ++rep.literal_failures;
            if (rep.literal_examples.size() < 5) rep.literal_examples.push_back(literal_witness[t]);
        }
    }
    return rep;
}

}  // namespace

OracleReport prop1_oracle(int trials, int max_dim, std::uint64_t seed, int threads) {
    if (trials < 0 || max_dim < 1) throw SpectralError(ErrorKind::InvalidArgument, "prop1_oracle: bad trial parameters");
    std::vector<std::vector<OracleViolation>> per(trials);
    std::vector<char> literal(trials, 0);
    std::vector<OracleViolation> witness(trials);
    parallel_for(
        trials,
        [&](int t) {
            std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(t)));
            const int m = std::uniform_int_distribution<int>(1, max_dim)(rng);
            const IntMatrix a = random_int_matrix(rng, m, m, true);
            bool lit = false;
            per[t] = prop1_check(a, t, &lit);
            literal[t] = lit;
            if (lit) witness[t] = {t, "rank(A^2n) != rank(A^n) with n = max(rank A, 1)", a.str()};
        },
        threads);
    return merge("prop1", trials, seed, per, literal, witness);
}

OracleReport prop2_oracle(int trials, std::uint64_t seed, int threads) {
    if (trials < 0) throw SpectralError(ErrorKind::InvalidArgument, "prop2_oracle: bad trial count");
    std::vector<std::vector<OracleViolation>> per(trials);
    std::vector<char> literal(trials, 0);
    std::vector<OracleViolation> witness(trials);
    parallel_for(
        trials,
        [&](int t) {
            std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(t)));
            const int k = std::uniform_int_distribution<int>(1, 5)(rng);
            std::uniform_int_distribution<int> dim(1, 6);
            std::vector<int> dims(k);
            for (int& d : dims) d = dim(rng);
            std::vector<IntMatrix> factors;
            for (int j = 0; j < k; ++j) factors.push_back(random_int_matrix(rng, dims[(j + 1) % k], dims[j], k == 1));
            bool lit = false;
            per[t] = prop2_check(factors, t, &lit);
            literal[t] = lit;
            if (lit) {
                std::ostringstream os;
                for (int j = 0; j < k; ++j) os << (j ? " ; " : "") << "A" << j << " = " << factors[j].str();
                witness[t] = {t, "rank B_j^(n+1) != rank B_j^n for some j with n = min dim", os.str()};
            }
        },
        threads);
    return merge("prop2", trials, seed, per, literal, witness);
}

}  // namespace hf::spectral
