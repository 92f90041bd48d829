#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qpattern/common.hpp"
#include "qpattern/grid.hpp"
#include "qpattern/qsim.hpp"

namespace qpattern {

/// In-place iterative radix-2 transform, X[k] = sum_z x[z] exp(+2 pi i z k / S).
/// Returns the number of butterflies performed, (S/2) log2 S.
inline std::uint64_t fft_forward(std::span<cplx> x) {
    const std::size_t S = x.size();
    if (!is_pow2(S)) throw InvalidArgument("transform length must be a power of two");
    for (std::size_t i = 1, j = 0; i < S; ++i) {
        std::size_t bit = S >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    std::uint64_t ops = 0;
    for (std::size_t len = 2; len <= S; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / static_cast<double>(len);
        const std::size_t half = len / 2;
        // twiddles computed directly per index; a running product drifts at large S
        std::vector<cplx> tw(half);
        for (std::size_t j = 0; j < half; ++j) tw[j] = std::polar(1.0, ang * static_cast<double>(j));
        for (std::size_t i = 0; i < S; i += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const cplx u = x[i + j];
                const cplx v = x[i + j + half] * tw[j];
                x[i + j] = u + v;
                x[i + j + half] = u - v;
                ++ops;
            }
        }
    }
    return ops;
}

struct Spectrum {
    std::vector<double> probs;
    Encoding encoding = Encoding::amplitude;
    int n = 0;  // log2 of the row length of the grid it came from
    int m = 0;
    std::uint64_t transform_ops = 0;

    std::size_t size() const { return probs.size(); }
    std::size_t width() const { return std::size_t{1} << n; }
    std::size_t height() const { return std::size_t{1} << m; }
    double operator[](std::size_t k) const { return probs[k]; }
};

/// Exact measurement distribution of the wave number k after the QFT.
///   amplitude: P(k) = |sum_l exp(2 pi i z_l k / S)|^2 / (rho S^2)
///   phase:     P(k) = |sum_z (-1)^f(z) exp(2 pi i z k / S)|^2 / S^2
inline Spectrum exact_distribution(const CellGrid& grid, Encoding encoding) {
    const std::size_t S = grid.size();
    if (encoding == Encoding::amplitude && grid.white_count() == 0)
        throw PostselectionError("amplitude-encoded spectrum undefined for a grid without points");
    std::vector<cplx> x(S);
    for (std::size_t z = 0; z < S; ++z) {
        if (encoding == Encoding::amplitude)
            x[z] = grid.at(z) ? 1.0 : 0.0;
        else
            x[z] = grid.at(z) ? -1.0 : 1.0;
    }
    Spectrum sp;
    sp.encoding = encoding;
    sp.n = grid.n();
    sp.m = grid.m();
    sp.transform_ops = fft_forward(x);
    const double Sd = static_cast<double>(S);
    const double denom = encoding == Encoding::amplitude ? static_cast<double>(grid.white_count()) * Sd : Sd * Sd;
    sp.probs.resize(S);
    for (std::size_t k = 0; k < S; ++k) sp.probs[k] = std::norm(x[k]) / denom;
    return sp;
}

/// sin^2(pi xi kappa) / sin^2(pi kappa), continued by xi^2 at integer kappa.
inline double laue(double xi, double kappa) {
    if (!(xi > 0.0)) throw InvalidArgument("laue: xi must be positive");
    const double frac = kappa - std::round(kappa);
    const double den = std::sin(std::numbers::pi * frac);
    if (std::abs(den) < 1e-12) {
        // second-order expansion around the integer; exact at frac == 0
        const double x = std::numbers::pi * frac;
        return xi * xi * (1.0 - (xi * xi - 1.0) * x * x / 3.0);
    }
    const double num = std::sin(std::numbers::pi * xi * frac);
    return num * num / (den * den);
}

enum class PeakSource { row, column, resonance, transposed_resonance };

inline std::string to_string(PeakSource s) {
    switch (s) {
        case PeakSource::row: return "row";
        case PeakSource::column: return "column";
        case PeakSource::resonance: return "resonance";
        case PeakSource::transposed_resonance: return "transposed_resonance";
    }
    return "?";
}

/// A predicted peak. Widths are unit-constant scales of the O(.) terms.
struct PeakPrediction {
    double k_center = 0.0;
    double width = 1.0;
    PeakSource source = PeakSource::row;
    int order = 1;             // the integer multiplier
    double laue_xi = 1.0;      // number of coherent addends scale
    double laue_kappa_per_k = 0.0;  // kappa = k * laue_kappa_per_k
    bool suppressed = false;   // resonance candidates only
    double detuning = 0.0;     // distance of order*cos(theta)*N/D from an integer

    long rounded() const { return std::lround(k_center); }
};

struct GridDims {
    std::size_t N = 0;
    std::size_t M = 0;
    std::size_t S() const { return N * M; }
    static GridDims of(const CellGrid& g) { return {g.width(), g.height()}; }
};

inline double wrap_k(double k, double S) {
    double r = std::fmod(k, S);
    if (r < 0) r += S;
    return r;
}

/// Row condition: k = l cos(theta) S / D, width M / (D sqrt(chi)).
inline std::vector<PeakPrediction> predict_row_peaks(double D, double theta, GridDims dims, double chi) {
    const double S = static_cast<double>(dims.S());
    const double c = std::cos(theta);
    std::vector<PeakPrediction> out;
    if (c <= 0.0) return out;
    const double step = c * S / D;
    const long count = static_cast<long>(std::floor(D / c + 1e-9)) - 1;
    for (long l = 1; l <= count; ++l) {
        const double k = static_cast<double>(l) * step;
        if (k >= S) break;
        PeakPrediction p;
        p.k_center = k;
        p.width = static_cast<double>(dims.M) / (D * std::sqrt(chi));
        p.source = PeakSource::row;
        p.order = static_cast<int>(l);
        p.laue_xi = static_cast<double>(dims.N) * std::sqrt(chi);
        p.laue_kappa_per_k = D / (c * S);
        out.push_back(p);
    }
    return out;
}

/// Column condition: k (N + tan theta) / S integer, i.e. k = l (N - tan theta) M / N, width 1/sqrt(chi).
inline std::vector<PeakPrediction> predict_column_condition(double theta, GridDims dims, double chi) {
    const double S = static_cast<double>(dims.S());
    const double N = static_cast<double>(dims.N);
    const double t = std::tan(theta);
    const double step = (N - t) / N * static_cast<double>(dims.M);
    std::vector<PeakPrediction> out;
    if (step <= 0.0) return out;
    for (long l = 1; static_cast<double>(l) * step < S; ++l) {
        PeakPrediction p;
        p.k_center = static_cast<double>(l) * step;
        p.width = 1.0 / std::sqrt(chi);
        p.source = PeakSource::column;
        p.order = static_cast<int>(l);
        p.laue_xi = static_cast<double>(dims.M) * std::sqrt(chi);
        p.laue_kappa_per_k = (N + t) / S;
        out.push_back(p);
    }
    return out;
}

/// Resonance candidates k = l (cos(theta) S/D - sin(theta) M/D) (mod S), or
/// for the transposed array k' = l (sin(theta) S/D - cos(theta) N/D) (mod S).
/// A candidate is flagged suppressed when l cos(theta) N / D (or its transposed
/// analogue) misses an integer by more than 1/(D sqrt(chi)).
inline std::vector<PeakPrediction> predict_resonances(double D, double theta, GridDims dims, bool transposed,
                                                      double chi = 1.0) {
    const double S = static_cast<double>(dims.S());
    const double N = static_cast<double>(dims.N);
    const double M = static_cast<double>(dims.M);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double step = transposed ? (s * S / D - c * N / D) : (c * S / D - s * M / D);
    const double lead = transposed ? std::abs(s) : std::abs(c);
    std::vector<PeakPrediction> out;
    if (std::abs(step) < 1e-12) return out;
    // candidates inside one period 0 < k < S, about D / cos(theta) (D / sin(theta) transposed)
    const double fit = std::floor(S / std::abs(step) + 1e-9);
    const long count = static_cast<long>(std::clamp(fit - 1.0, 1.0, S - 1.0));
    const double tolerance = 1.0 / (D * std::sqrt(chi));
    const double fine = transposed ? s * M / D : c * N / D;
    for (long l = 1; l <= count; ++l) {
        PeakPrediction p;
        p.k_center = wrap_k(static_cast<double>(l) * step, S);
        p.source = transposed ? PeakSource::transposed_resonance : PeakSource::resonance;
        p.order = static_cast<int>(l);
        p.width = (transposed ? N : M) / (D * std::sqrt(chi));
        const double v = static_cast<double>(l) * fine;
        p.detuning = std::abs(v - std::round(v));
        p.suppressed = p.detuning > tolerance;
        p.laue_xi = (transposed ? M : N) * std::sqrt(chi);
        p.laue_kappa_per_k = lead > 0.0 ? D / (lead * S) : 0.0;
        out.push_back(p);
    }
    return out;
}

/// Order-of-magnitude probability of landing on a resonant peak, (chi delta_rho)^2 / rho.
inline double peak_probability_estimate(double rho, double delta_rho, double chi) {
    if (!(rho > 0.0)) throw InvalidArgument("rho must be positive");
    const double a = chi * delta_rho;
    return a * a / rho;
}

/// Expected P(k) at k != 0 for an array without a pattern.
inline double noise_floor(std::size_t S, double /*rho*/ = 0.5) {
    if (S < 2) throw InvalidArgument("noise floor needs S >= 2");
    return 1.0 / static_cast<double>(S);
}

}  // namespace qpattern
