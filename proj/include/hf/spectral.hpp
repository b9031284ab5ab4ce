#pragma once

// Multipliers, numerical rank, rank-of-iterates sweeps, section consistency,
// and exact-arithmetic rank oracles for iterated and cyclic matrix products.

#include "hf/core.hpp"
#include "hf/flow.hpp"
#include "hf/poincare.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace hf::spectral {

using Complex = std::complex<double>;

enum class ErrorKind { NoConvergenceQR, NoStabilization, NonMonotoneRank, InvalidArgument };

const char* to_string(ErrorKind k);

class SpectralError : public Error {
public:
    SpectralError(ErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

/// All eigenvalues with multiplicity, conjugate pairs adjacent (positive
/// imaginary part first), ordered by decreasing modulus then real part.
std::vector<Complex> eigenvalues(const Matrix& a);

struct RankResult {
    int rank = 0;
    std::vector<double> singular_values;  // descending
};

RankResult numerical_rank(const Matrix& a, double rtol = 1e-6);

struct RankSweep {
    std::vector<int> ranks;                             // ranks[m - 1] = rank DP^m
    int stabilization_index = 1;                        // 1-based power
    int r = 0;
    Matrix basis;                                       // d x r, orthonormal
    double rtol = 1e-6;
    std::vector<double> scales;                         // sigma_max of each unnormalized product
    std::vector<std::vector<double>> singular_values;   // of each normalized power
};

/// Ranks of DP^m for m = 1..n_max with per-power renormalization.
/// Throws NonMonotoneRank if a rank increases and NoStabilization if the
/// last two ranks still differ (a terminal rank of 0 counts as stable).
RankSweep rank_sweep(const Matrix& dp, int n_max, double rtol = 1e-6);

/// ||DP B - B (B^T DP B)||_2, zero when range(B) is DP-invariant.
double invariance_residual(const Matrix& dp, const Matrix& basis);

struct RankProfile {
    bool constant = false;
    int rank = -1;              // common rank when constant
    std::vector<State> points;  // center first
    std::vector<int> ranks;
    std::string details;
};

/// Numerical ranks of D(map^m) at u* and n_samples seeded points drawn
/// uniformly from the infinity-ball of `radius` about u*.
RankProfile rank_profile(const poincare::Map& map, const State& u_star, int m, double radius, int n_samples,
                         std::uint64_t seed = 0, double rtol = 1e-6, double delta_rel = 1e-5);

struct SectionSpectrum {
    std::string name;
    State fixed_point;
    Matrix jacobian;
    std::vector<Complex> multipliers;  // eigenvalues of DP^m
    std::vector<Complex> nonzero;      // modulus > zero_tol
    std::vector<Complex> near_zero;
};

struct ConsistencyReport {
    std::vector<SectionSpectrum> sections;
    bool counts_agree = true;
    double max_mismatch = 0.0;  // largest real/imag difference over matched nonzero multipliers
    int m = 1;
    double zero_tol = 1e-4;
};

struct ConsistencyOptions {
    poincare::FixedPointOptions fixed_point;
    double zero_tol = 1e-4;
};

/// Locates the orbit's crossing of every section, refines the fixed point
/// there, and compares the nonzero spectra of DP^m across sections.
ConsistencyReport section_consistency(const HybridSystem& system, const std::vector<SectionDef>& sections,
                                      const PeriodicOrbitResult& orbit, const flow::StepperConfig& cfg, int m,
                                      const ConsistencyOptions& opts = {});

/// Greedy nearest matching of two spectra; returns the largest component gap,
/// or infinity when the sizes differ.
double spectrum_mismatch(const std::vector<Complex>& a, const std::vector<Complex>& b);

struct FloquetOptions {
    poincare::FixedPointOptions fixed_point;
    int n_max = 6;
    double zero_tol = 1e-4;
    double rtol = 1e-6;
};

struct FloquetReport {
    PeriodicOrbitResult orbit;
    State fixed_point;
    double period = 0.0;
    Matrix jacobian;
    std::vector<Complex> multipliers;
    RankSweep sweep;
    bool stable = false;
    double zero_tol = 1e-4;
};

FloquetReport floquet_report(const HybridSystem& system, const SectionDef& section, const State& u0,
                             const flow::StepperConfig& cfg, const FloquetOptions& opts = {});

/// True iff every multiplier of modulus above zero_tol lies strictly inside the unit disc.
bool is_stable(const std::vector<Complex>& multipliers, double zero_tol);

// Exact integer matrices.

using BigInt = boost::multiprecision::cpp_int;

struct IntMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<BigInt> a;  // row-major

    IntMatrix() = default;
    IntMatrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c) {}
    static IntMatrix identity(int n);
    BigInt& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    const BigInt& operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
    std::string str() const;
};

IntMatrix operator*(const IntMatrix& x, const IntMatrix& y);
IntMatrix power(const IntMatrix& x, int s);

/// Rank over the rationals by fraction-free (Bareiss) elimination.
int exact_rank(IntMatrix m);

struct OracleViolation {
    int trial = 0;
    std::string description;
    std::string witness;
};

struct OracleReport {
    std::string name;
    int trials = 0;
    std::uint64_t seed = 0;
    std::vector<OracleViolation> violations;
    /// Trials where the unrestricted statement fails while the checked form holds (informational).
    int literal_failures = 0;
    std::vector<OracleViolation> literal_examples;  // first few
};

/// Square-matrix check: rank(A^s) = rank(A^(r+1)) for r+1 <= s <= 2m, r = rank A.
std::vector<OracleViolation> prop1_check(const IntMatrix& a, int trial, bool* literal_failure = nullptr);

/// Cyclic chain check: factors[j] maps dimension dims[j] to dims[(j+1) % k].
std::vector<OracleViolation> prop2_check(const std::vector<IntMatrix>& factors, int trial,
                                         bool* literal_failure = nullptr);

/// Cyclic products B_j = A_{j-1} ... A_0 A_{k-1} ... A_j (0-based).
std::vector<IntMatrix> cyclic_products(const std::vector<IntMatrix>& factors);

OracleReport prop1_oracle(int trials, int max_dim, std::uint64_t seed, int threads = 0);
OracleReport prop2_oracle(int trials, std::uint64_t seed, int threads = 0);

}  // namespace hf::spectral
