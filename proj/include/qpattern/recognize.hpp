#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qpattern/common.hpp"
#include "qpattern/grid.hpp"
#include "qpattern/qsim.hpp"
#include "qpattern/spectral.hpp"

namespace qpattern {

enum class AnalysisMode { oracle, sample };

inline std::string to_string(AnalysisMode m) { return m == AnalysisMode::oracle ? "oracle" : "sample"; }

/// Null model for sample-mode window counts. A patternless random array does
/// not measure uniformly: its bin probabilities are exponentially distributed
/// (speckle), which turns a window count into a negative binomial. poisson is
/// the right null only for genuinely uniform samples.
enum class NullModel { speckle, poisson };

inline std::string to_string(NullModel m) { return m == NullModel::speckle ? "speckle" : "poisson"; }

/// Thresholds for turning spectra or samples into peaks. Every O(.) scale
/// uses a unit constant.
struct DetectionPolicy {
    double tau = 16.0;          // oracle mode: P(k) > tau * noise_floor
    double chi_target = 1.0 / 16.0;
    std::optional<std::size_t> gap;       // merge distance; oracle default 1, sample default ceil(M / (2 sqrt(chi)))
    std::optional<std::size_t> window;    // sample mode half-window; default ceil(1 / (2 sqrt(chi)))
    std::uint64_t c_min = 2;              // minimum samples in a reported cluster
    double false_alarm = 0.01;            // sample mode family-wise noise exceedance budget
    NullModel null_model = NullModel::speckle;

    std::size_t gap_for(AnalysisMode mode, std::size_t M) const {
        if (gap) return std::max<std::size_t>(*gap, 1);
        if (mode == AnalysisMode::oracle) return 1;
        return static_cast<std::size_t>(std::ceil(static_cast<double>(M) / (2.0 * std::sqrt(chi_target))));
    }
    std::size_t window_for() const {
        if (window) return *window;
        return static_cast<std::size_t>(std::ceil(1.0 / (2.0 * std::sqrt(chi_target))));
    }
};

struct PeakCluster {
    std::size_t k_low = 0;    // first bin; k_low > k_high when the cluster wraps past S-1
    std::size_t k_high = 0;
    std::uint64_t sample_count = 0;
    double mass = 0.0;        // probability (oracle) or sample fraction (sample mode)
    double weighted_center = 0.0;
    std::vector<std::pair<std::size_t, double>> members;  // (k, weight)
};

struct PeakReport {
    std::vector<PeakCluster> clusters;
    std::uint64_t total_shots = 0;  // Omega; 0 in oracle mode
    bool excluded_k0 = true;
    double k0_weight = 0.0;         // P(0) or fraction of samples at k = 0
    AnalysisMode mode = AnalysisMode::oracle;
    int n = 0;
    int m = 0;

    std::size_t S() const { return std::size_t{1} << (n + m); }
    std::size_t width() const { return std::size_t{1} << n; }
    std::size_t height() const { return std::size_t{1} << m; }
    bool empty() const { return clusters.empty(); }
    double peak_mass() const {
        double acc = 0.0;
        for (const auto& c : clusters) acc += c.mass;
        return acc;
    }
    std::uint64_t peak_samples() const {
        std::uint64_t acc = 0;
        for (const auto& c : clusters) acc += c.sample_count;
        return acc;
    }
    /// Weight of the single strongest bin, as a probability.
    double strongest_bin() const {
        double best = 0.0;
        for (const auto& c : clusters)
            for (const auto& [k, w] : c.members) best = std::max(best, w);
        if (mode == AnalysisMode::sample) best /= static_cast<double>(std::max<std::uint64_t>(total_shots, 1));
        return best;
    }
};

namespace detail {

// Group sorted bin indices into runs separated by at most gap (circularly).
inline std::vector<std::vector<std::size_t>> group_bins(const std::vector<std::size_t>& bins, std::size_t S,
                                                        std::size_t gap) {
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t k : bins) {
        if (!groups.empty() && k - groups.back().back() <= gap)
            groups.back().push_back(k);
        else
            groups.push_back({k});
    }
    if (groups.size() > 1 && groups.front().front() + S - groups.back().back() <= gap) {
        auto tail = std::move(groups.back());
        groups.pop_back();
        tail.insert(tail.end(), groups.front().begin(), groups.front().end());
        groups.front() = std::move(tail);
    }
    return groups;
}

inline PeakCluster make_cluster(const std::vector<std::size_t>& bins, const std::function<double(std::size_t)>& weight,
                                std::size_t S) {
    PeakCluster c;
    c.k_low = bins.front();
    c.k_high = bins.back();
    double wsum = 0.0, acc = 0.0;
    const std::size_t base = bins.front();
    for (std::size_t k : bins) {
        const double w = weight(k);
        if (w <= 0.0) continue;
        c.members.emplace_back(k, w);
        // unwrapped offset from the first bin keeps wrapped clusters contiguous
        const std::size_t off = (k + S - base) % S;
        acc += w * static_cast<double>(off);
        wsum += w;
    }
    c.mass = wsum;
    c.weighted_center = wsum > 0.0 ? std::fmod(static_cast<double>(base) + acc / wsum, static_cast<double>(S))
                                   : static_cast<double>(base);
    return c;
}

// P(X >= c) for X ~ Poisson(lambda), summed upward from c in log space.
inline double poisson_tail(double lambda, std::uint64_t c) {
    if (c == 0) return 1.0;
    if (lambda <= 0.0) return 0.0;
    const double cd = static_cast<double>(c);
    double term = std::exp(cd * std::log(lambda) - lambda - std::lgamma(cd + 1.0));
    double acc = 0.0;
    for (std::uint64_t i = c; term > 0.0; ++i) {
        acc += term;
        term *= lambda / static_cast<double>(i + 1);
        if (term < acc * 1e-17 && static_cast<double>(i) > lambda) break;
    }
    return std::min(1.0, acc);
}

// P(X >= c) for X negative binomial with r exponential addends of total mean lambda.
inline double negbin_tail(double lambda, double r, std::uint64_t c) {
    if (c == 0) return 1.0;
    if (lambda <= 0.0) return 0.0;
    const double p = lambda / (r + lambda);
    const double cd = static_cast<double>(c);
    double term = std::exp(std::lgamma(cd + r) - std::lgamma(r) - std::lgamma(cd + 1.0) + r * std::log1p(-p) +
                           cd * std::log(p));
    double acc = 0.0;
    for (std::uint64_t i = c; term > 0.0; ++i) {
        acc += term;
        const double id = static_cast<double>(i);
        term *= (id + r) / (id + 1.0) * p;
        if (term < acc * 1e-17 && id > lambda) break;
    }
    return std::min(1.0, acc);
}

// Smallest count c with trials * P(X >= c) <= alpha, X the window count under
// the null with 'addends' bins per window.
inline std::uint64_t count_threshold(NullModel model, double lambda, double addends, double trials, double alpha,
                                     std::uint64_t floor_count) {
    auto tail = [&](std::uint64_t c) {
        return model == NullModel::poisson ? poisson_tail(lambda, c) : negbin_tail(lambda, addends, c);
    };
    std::uint64_t c = std::max<std::uint64_t>({floor_count, 1, static_cast<std::uint64_t>(lambda)});
    while (trials * tail(c) > alpha) ++c;
    return c;
}

}  // namespace detail

/// Oracle mode: k != 0 bins with P(k) > tau / S, merged within the gap.
inline PeakReport detect_peaks(const Spectrum& sp, const DetectionPolicy& policy = {}) {
    const std::size_t S = sp.size();
    if (S < 2) throw InvalidArgument("spectrum too short");
    PeakReport rep;
    rep.mode = AnalysisMode::oracle;
    rep.n = sp.n;
    rep.m = sp.m;
    rep.k0_weight = sp.probs[0];
    const double thr = policy.tau * noise_floor(S);
    std::vector<std::size_t> bins;
    for (std::size_t k = 1; k < S; ++k)
        if (sp.probs[k] > thr) bins.push_back(k);
    const std::size_t gap = policy.gap_for(AnalysisMode::oracle, sp.height());
    for (const auto& g : detail::group_bins(bins, S, gap))
        rep.clusters.push_back(detail::make_cluster(g, [&](std::size_t k) { return sp.probs[k]; }, S));
    return rep;
}

/// Sample mode: a bin is significant when the count in its window
/// [k - w, k + w] exceeds what uniform noise would produce anywhere in the
/// spectrum with probability false_alarm; significant bins within the gap
/// form a cluster.
inline PeakReport detect_peaks(const std::vector<MeasurementSample>& samples, int n, int m,
                               const DetectionPolicy& policy = {}) {
    if (samples.empty()) throw InvalidArgument("detect_peaks: empty sample set");
    const std::size_t S = std::size_t{1} << (n + m);
    PeakReport rep;
    rep.mode = AnalysisMode::sample;
    rep.n = n;
    rep.m = m;
    rep.total_shots = samples.size();
    std::vector<std::uint64_t> hist(S, 0);
    for (const auto& s : samples) {
        if (s.k >= S) throw InvalidArgument("sample wave number outside [0, S)");
        ++hist[s.k];
    }
    const double omega = static_cast<double>(samples.size());
    rep.k0_weight = static_cast<double>(hist[0]) / omega;
    const std::uint64_t nonzero = samples.size() - hist[0];
    hist[0] = 0;
    if (nonzero == 0 || S < 2) return rep;

    const std::size_t w = std::min(policy.window_for(), (S - 1) / 2);
    const double lambda = static_cast<double>(nonzero) * static_cast<double>(2 * w + 1) / static_cast<double>(S - 1);
    const std::uint64_t thr = detail::count_threshold(policy.null_model, lambda, static_cast<double>(2 * w + 1),
                                                      static_cast<double>(S - 1), policy.false_alarm, policy.c_min);

    // circular running window sum
    std::vector<std::uint64_t> win(S, 0);
    std::uint64_t acc = 0;
    for (std::size_t j = 0; j <= 2 * w; ++j) acc += hist[(S - w + j) % S];
    for (std::size_t k = 0; k < S; ++k) {
        win[k] = acc;
        acc -= hist[(k + S - w) % S];
        acc += hist[(k + w + 1) % S];
    }
    std::vector<std::size_t> bins;
    for (std::size_t k = 1; k < S; ++k)
        if (win[k] >= thr && hist[k] > 0) bins.push_back(k);

    const std::size_t gap = policy.gap_for(AnalysisMode::sample, std::size_t{1} << m);
    for (const auto& g : detail::group_bins(bins, S, gap)) {
        // every occupied bin inside the cluster's extent counts toward it
        std::vector<std::size_t> extent;
        const std::size_t len = (g.back() + S - g.front()) % S + 1;
        for (std::size_t i = 0; i < len; ++i) {
            const std::size_t k = (g.front() + i) % S;
            if (k != 0 && hist[k] > 0) extent.push_back(k);
        }
        auto c = detail::make_cluster(extent, [&](std::size_t k) { return static_cast<double>(hist[k]); }, S);
        c.sample_count = static_cast<std::uint64_t>(c.mass);
        c.mass /= omega;
        if (c.sample_count >= policy.c_min) rep.clusters.push_back(std::move(c));
    }
    return rep;
}

/// Largest spacing dk such that every value lies within tolerance of a
/// positive integer multiple of dk. Candidates are the divisors of the
/// smallest value and of the pairwise gaps; an accepted candidate is refined
/// by a least-squares fit over the assigned multiples. std::nullopt when no
/// candidate is consistent.
inline std::optional<double> common_spacing(std::vector<double> values, double tolerance, int max_divisor = 64) {
    if (values.empty()) throw InvalidArgument("common_spacing needs at least one peak");
    std::sort(values.begin(), values.end());
    if (values.front() <= 0.0) throw InvalidArgument("common_spacing: peak centres must be positive");
    std::vector<double> cands;
    for (int j = 1; j <= max_divisor; ++j) cands.push_back(values.front() / j);
    for (std::size_t a = 0; a < values.size(); ++a)
        for (std::size_t b = a + 1; b < values.size(); ++b) {
            const double gap = values[b] - values[a];
            if (gap <= tolerance) continue;
            for (int j = 1; j <= max_divisor; ++j) cands.push_back(gap / j);
        }
    std::sort(cands.begin(), cands.end(), std::greater<>());

    auto fits = [&](double dk, std::vector<long>& mult) {
        mult.clear();
        for (double v : values) {
            const long q = std::lround(v / dk);
            if (q < 1 || std::abs(v - static_cast<double>(q) * dk) > tolerance) return false;
            mult.push_back(q);
        }
        return true;
    };
    std::vector<long> mult;
    for (double dk : cands) {
        if (dk <= tolerance) break;
        if (!fits(dk, mult)) continue;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            num += static_cast<double>(mult[i]) * values[i];
            den += static_cast<double>(mult[i]) * static_cast<double>(mult[i]);
        }
        const double refined = num / den;
        std::vector<long> mult2;
        if (fits(refined, mult2) && mult2 == mult) return refined;
        return dk;
    }
    return std::nullopt;
}

/// Cluster centres folded onto (0, S/2] (P(k) = P(S - k) for real data).
inline std::vector<double> folded_centers(const PeakReport& rep, double min_relative_mass = 0.0) {
    double top = 0.0;
    for (const auto& c : rep.clusters) top = std::max(top, c.mass);
    const double S = static_cast<double>(rep.S());
    std::vector<double> out;
    for (const auto& c : rep.clusters) {
        if (c.mass < min_relative_mass * top) continue;
        const double k = c.weighted_center;
        const double f = std::min(k, S - k);
        if (f > 0.0) out.push_back(f);
    }
    return out;
}

inline std::optional<double> common_spacing(const PeakReport& rep, double tolerance) {
    const auto centers = folded_centers(rep);
    if (centers.empty()) throw InvalidArgument("common_spacing needs at least one peak");
    return common_spacing(centers, tolerance);
}

// ---------------------------------------------------------------------------
// Parameter estimation.
//
// The flattened transform samples the 2-D wave-vector plane: bin k of an
// N x M run corresponds to (u, v) = (k / S, k / M) mod 1 in cycles per cell
// along x and y. A family of lines with spacing D and angle theta puts its
// fundamental at +-(cos(theta), -sin(theta)) / D. The original run pins v
// finely and u coarsely; the transposed run does
// the opposite, and the two are combined into one wave-vector.
// ---------------------------------------------------------------------------

struct WaveVector {
    double u = 0.0;  // cycles per cell along x
    double v = 0.0;  // cycles per cell along y
};

inline double centered_frac(double x) { return x - std::floor(x + 0.5); }

inline WaveVector wave_vector_of(double k, std::size_t S, std::size_t M) {
    return {centered_frac(k / static_cast<double>(S)), centered_frac(k / static_cast<double>(M))};
}

/// Line parameters carried by a wave-vector, theta folded into (-pi/2, pi/2].
inline std::pair<double, double> lines_from_wave_vector(WaveVector w) {
    const double norm = std::hypot(w.u, w.v);
    if (norm <= 0.0) return {std::numeric_limits<double>::infinity(), 0.0};
    double theta = std::atan2(-w.v, w.u);
    if (theta > std::numbers::pi / 2) theta -= std::numbers::pi;
    if (theta <= -std::numbers::pi / 2) theta += std::numbers::pi;
    return {1.0 / norm, theta};
}

inline WaveVector wave_vector_from_lines(double D, double theta) { return {std::cos(theta) / D, -std::sin(theta) / D}; }

struct LobeEstimate {
    WaveVector w;
    double mass = 0.0;
    bool valid = false;
};

/// Weighted centroid of the strongest spectral lobe, in the run's own frame.
/// Members are sign-aligned with the seed (conjugate lobes) and kept when
/// inside a radius of a few lobe widths around it.
inline LobeEstimate fundamental_lobe(const PeakReport& rep, double chi_scale) {
    LobeEstimate out;
    const std::size_t S = rep.S();
    const std::size_t N = rep.width();
    const std::size_t M = rep.height();
    std::size_t best_k = 0;
    double best_w = -1.0;
    for (const auto& c : rep.clusters)
        for (const auto& [k, w] : c.members)
            if (w > best_w) {
                best_w = w;
                best_k = k;
            }
    if (best_w <= 0.0) return out;
    WaveVector seed = wave_vector_of(static_cast<double>(best_k), S, M);
    if (seed.u < 0.0 || (seed.u == 0.0 && seed.v < 0.0)) seed = {-seed.u, -seed.v};

    const double sq = std::sqrt(std::clamp(chi_scale, 1e-6, 1.0));
    const double ru = 2.0 / (static_cast<double>(N) * sq);
    const double rv = 2.0 / (static_cast<double>(M) * sq);
    for (int iter = 0; iter < 3; ++iter) {
        double su = 0.0, sv = 0.0, sw = 0.0;
        for (const auto& c : rep.clusters)
            for (const auto& [k, w] : c.members) {
                WaveVector p = wave_vector_of(static_cast<double>(k), S, M);
                for (int sign : {1, -1}) {
                    const double du = centered_frac(sign * p.u - seed.u);
                    const double dv = centered_frac(sign * p.v - seed.v);
                    if (std::abs(du) <= ru && std::abs(dv) <= rv) {
                        su += w * du;
                        sv += w * dv;
                        sw += w;
                        break;
                    }
                }
            }
        if (sw <= 0.0) break;
        seed = {seed.u + su / sw, seed.v + sv / sw};
        out.mass = sw;
        out.valid = true;
    }
    out.w = seed;
    return out;
}

enum class EstimateStatus { ok, ambiguous, presence_only };

inline std::string to_string(EstimateStatus s) {
    switch (s) {
        case EstimateStatus::ok: return "ok";
        case EstimateStatus::ambiguous: return "ambiguous";
        case EstimateStatus::presence_only: return "presence_only";
    }
    return "?";
}

struct ParameterCandidate {
    double D = 0.0;
    double theta = 0.0;
    double score = 0.0;   // observed peak weight explained by the candidate's predictions
    std::string origin;   // "wave_vector" or "common_factor"
};

struct PatternEstimate {
    EstimateStatus status = EstimateStatus::presence_only;
    double D_hat = 0.0;
    double theta_hat = 0.0;
    double chi_hat = 0.0;
    double D_uncertainty = 0.0;
    double theta_uncertainty = 0.0;
    std::optional<double> spacing_original;    // common k-spacing of the original run
    std::optional<double> spacing_transposed;  // common k-spacing of the transposed run
    int matched_peaks = 0;
    int unmatched_peaks = 0;
    int resonances_unsuppressed = 0;
    int resonances_total = 0;
    std::vector<ParameterCandidate> candidates;  // ranked, best first
};

struct EstimationPolicy {
    double chi_scale = 1.0 / 16.0;  // lobe width / uncertainty scale
    int harmonics = 3;
    double ambiguity_ratio = 0.98;  // runner-up score above this fraction of the best -> ambiguous
};

namespace detail {

// Fraction of a report's weight lying within the predicted lobes of the first
// few harmonics of wave-vector w (expressed in that run's frame).
inline double explained_weight(const PeakReport& rep, WaveVector w, int harmonics, double chi_scale) {
    const std::size_t S = rep.S();
    const std::size_t N = rep.width();
    const std::size_t M = rep.height();
    const double sq = std::sqrt(std::clamp(chi_scale, 1e-6, 1.0));
    const double ru = 1.5 / (static_cast<double>(N) * sq);
    const double rv = 1.5 / (static_cast<double>(M) * sq);
    double hit = 0.0, total = 0.0;
    for (const auto& c : rep.clusters)
        for (const auto& [k, wt] : c.members) {
            total += wt;
            const WaveVector p = wave_vector_of(static_cast<double>(k), S, M);
            bool matched = false;
            for (int j = 1; j <= harmonics && !matched; ++j)
                for (int sign : {1, -1}) {
                    const double du = centered_frac(sign * p.u - j * w.u);
                    const double dv = centered_frac(sign * p.v - j * w.v);
                    if (std::abs(du) <= ru && std::abs(dv) <= rv) {
                        matched = true;
                        break;
                    }
                }
            if (matched) hit += wt;
        }
    return total > 0.0 ? hit / total : 0.0;
}

inline WaveVector to_transposed_frame(WaveVector w) { return {w.v, w.u}; }

}  // namespace detail

/// Recover (D, theta) from the peak reports of the original and the
/// transposed run. dims are the original array's.
inline PatternEstimate estimate_parameters(const PeakReport& report, const PeakReport& report_transposed,
                                           GridDims dims, const EstimationPolicy& policy = {}) {
    PatternEstimate est;
    if (report.empty() || report_transposed.empty()) return est;
    if (report.width() != dims.N || report.height() != dims.M || report_transposed.width() != dims.M ||
        report_transposed.height() != dims.N)
        throw InvalidArgument("estimate_parameters: report dimensions do not match the array");

    const double S = static_cast<double>(dims.S());
    const double tol = 1.0 / std::sqrt(policy.chi_scale);

    // Common-factor route: S / dk ~ D / cos(theta), S / dk' ~ D / sin(theta).
    const auto strong = folded_centers(report, 0.05);
    const auto strong_t = folded_centers(report_transposed, 0.05);
    if (!strong.empty()) est.spacing_original = common_spacing(strong, tol);
    if (!strong_t.empty()) est.spacing_transposed = common_spacing(strong_t, tol);

    std::vector<ParameterCandidate> cands;
    if (est.spacing_original && est.spacing_transposed) {
        const double a = S / *est.spacing_original;
        const double b = S / *est.spacing_transposed;
        const double theta = std::atan2(a, b);  // tan(theta) = a / b
        const double D = a * b / std::hypot(a, b);
        cands.push_back({D, theta, 0.0, "common_factor"});
        cands.push_back({D, -theta, 0.0, "common_factor"});
    }

    // Wave-vector route: fine centroid of the fundamental lobe in each run.
    const LobeEstimate lobe = fundamental_lobe(report, policy.chi_scale);
    const LobeEstimate lobe_t = fundamental_lobe(report_transposed, policy.chi_scale);
    if (lobe.valid && lobe_t.valid) {
        WaveVector wt{lobe_t.w.v, lobe_t.w.u};  // back to the original frame
        // align conjugate sign with the original run's lobe
        const double d_plus = std::hypot(centered_frac(wt.u - lobe.w.u), centered_frac(wt.v - lobe.w.v));
        const double d_minus = std::hypot(centered_frac(-wt.u - lobe.w.u), centered_frac(-wt.v - lobe.w.v));
        if (d_minus < d_plus) wt = {-wt.u, -wt.v};
        const double wa = lobe.mass / (lobe.mass + lobe_t.mass);
        const WaveVector avg{wa * lobe.w.u + (1 - wa) * wt.u, wa * lobe.w.v + (1 - wa) * wt.v};
        for (const WaveVector& w : {avg, lobe.w, wt}) {
            const auto [D, theta] = lines_from_wave_vector(w);
            if (std::isfinite(D)) cands.push_back({D, theta, 0.0, "wave_vector"});
        }
        // mirror image, scored so the transposed run can rule it out
        const auto [Dm, thm] = lines_from_wave_vector(avg);
        if (std::isfinite(Dm)) cands.push_back({Dm, -thm, 0.0, "wave_vector_mirror"});
    } else if (lobe.valid) {
        const auto [D, theta] = lines_from_wave_vector(lobe.w);
        if (std::isfinite(D)) cands.push_back({D, theta, 0.0, "wave_vector"});
    }
    if (cands.empty()) return est;

    for (auto& c : cands) {
        const WaveVector w = wave_vector_from_lines(c.D, c.theta);
        c.score = detail::explained_weight(report, w, policy.harmonics, policy.chi_scale) +
                  detail::explained_weight(report_transposed, detail::to_transposed_frame(w), policy.harmonics,
                                           policy.chi_scale);
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const ParameterCandidate& a, const ParameterCandidate& b) { return a.score > b.score; });
    est.candidates = cands;
    const auto& best = cands.front();
    est.D_hat = best.D;
    est.theta_hat = best.theta;
    est.status = EstimateStatus::ok;
    for (std::size_t i = 1; i < cands.size(); ++i) {
        const bool different = std::abs(cands[i].D - best.D) > 0.1 * best.D ||
                               std::abs(centered_frac((cands[i].theta - best.theta) / std::numbers::pi)) *
                                       std::numbers::pi > 0.1;
        if (different && cands[i].score >= policy.ambiguity_ratio * best.score) est.status = EstimateStatus::ambiguous;
    }

    // O(1/sqrt(chi)) resolution of the wave-vector, propagated to D and theta.
    const double sq = std::sqrt(policy.chi_scale);
    const double du = 1.0 / (static_cast<double>(dims.N) * sq);
    const double dv = 1.0 / (static_cast<double>(dims.M) * sq);
    const double dw = std::hypot(du, dv);
    est.D_uncertainty = best.D * best.D * dw;
    est.theta_uncertainty = std::min(std::numbers::pi / 2, best.D * dw);

    // Evidence summary: which predicted resonances carry observed weight.
    const WaveVector w = wave_vector_from_lines(best.D, best.theta);
    const double ru = 1.5 / (static_cast<double>(dims.N) * sq);
    const double rv = 1.5 / (static_cast<double>(dims.M) * sq);
    for (const auto& c : report.clusters) {
        const WaveVector p = wave_vector_of(c.weighted_center, dims.S(), dims.M);
        bool ok = false;
        for (int j = 1; j <= policy.harmonics && !ok; ++j)
            for (int sign : {1, -1})
                if (std::abs(centered_frac(sign * p.u - j * w.u)) <= 2 * ru &&
                    std::abs(centered_frac(sign * p.v - j * w.v)) <= 2 * rv)
                    ok = true;
        (ok ? est.matched_peaks : est.unmatched_peaks) += 1;
    }
    for (const auto& p : predict_resonances(best.D, best.theta, dims, false, policy.chi_scale)) {
        ++est.resonances_total;
        if (!p.suppressed) ++est.resonances_unsuppressed;
    }
    return est;
}

enum class ChiKind { chi, chi_times_delta_rho, upper_bound };

inline std::string to_string(ChiKind k) {
    switch (k) {
        case ChiKind::chi: return "chi";
        case ChiKind::chi_times_delta_rho: return "chi_times_delta_rho";
        case ChiKind::upper_bound: return "upper_bound";
    }
    return "?";
}

struct ChiEstimate {
    double value = 0.0;
    ChiKind kind = ChiKind::chi;
    double chi_min = 1.0;
    double peak_fraction = 0.0;
    double calibration = 1.0;
};

/// Invert p ~ (chi delta_rho)^2 / rho, p being the probability of the
/// resonant wave number itself. Without delta_rho only chi*delta_rho is
/// identifiable and is returned as such.
inline ChiEstimate estimate_chi_from_fraction(double p_hat, double rho, std::optional<double> delta_rho,
                                              std::uint64_t omega, double calibration = 1.0) {
    ChiEstimate e;
    e.peak_fraction = p_hat;
    e.calibration = calibration;
    e.chi_min = omega > 0 ? 1.0 / std::sqrt(static_cast<double>(omega)) : 0.0;
    if (p_hat <= 0.0) {
        e.kind = ChiKind::upper_bound;
        e.value = e.chi_min;
        return e;
    }
    const double chi_dr = calibration * std::sqrt(p_hat * rho);
    if (delta_rho && *delta_rho > 0.0) {
        e.kind = ChiKind::chi;
        e.value = std::min(1.0, chi_dr / *delta_rho);
    } else {
        e.kind = ChiKind::chi_times_delta_rho;
        e.value = chi_dr;
    }
    return e;
}

inline ChiEstimate estimate_chi(const PeakReport& rep, double rho, std::optional<double> delta_rho,
                                double calibration = 1.0) {
    if (rep.mode == AnalysisMode::sample && rep.total_shots == 0)
        throw InvalidArgument("estimate_chi: no samples");
    return estimate_chi_from_fraction(rep.strongest_bin(), rho, delta_rho, rep.total_shots, calibration);
}

struct PresenceDecision {
    bool present = false;
    double chi_min = 1.0;
    PeakReport report;
};

/// Pattern present iff at least one cluster besides k = 0; the smallest
/// pattern the shot count can rule out is chi_min = 1/sqrt(Omega).
inline PresenceDecision decide_pattern_present(const std::vector<MeasurementSample>& samples, int n, int m,
                                               const DetectionPolicy& policy = {}) {
    PresenceDecision d;
    d.report = detect_peaks(samples, n, m, policy);
    d.present = !d.report.clusters.empty();
    d.chi_min = 1.0 / std::sqrt(static_cast<double>(samples.size()));
    return d;
}

// ---------------------------------------------------------------------------
// Localisation by subdivision.
// ---------------------------------------------------------------------------

struct LocaliseOptions {
    AnalysisMode mode = AnalysisMode::oracle;
    Encoding encoding = Encoding::amplitude;
    double chi_scale = 1.0 / 16.0;     // smallest region side ~ sqrt(chi) * array side
    std::size_t shots = 10000;          // sample mode, per subgrid
    std::uint64_t query_budget = 0;     // 0 = unlimited; oracle mode charges one query per evaluation
    DetectionPolicy detection{};
    std::uint64_t seed = 0;
};

struct LocaliseResult {
    std::vector<Region> regions;
    std::uint64_t queries = 0;
    std::uint64_t evaluations = 0;
    bool complete = true;
};

namespace detail {

struct Localiser {
    const CellGrid& grid;
    const LocaliseOptions& opt;
    std::size_t min_w, min_h;
    LocaliseResult res;

    bool over_budget() const { return opt.query_budget != 0 && res.queries >= opt.query_budget; }

    bool evidence(const Region& r) {
        ++res.evaluations;
        const CellGrid sub = subgrid(grid, r);
        if (opt.mode == AnalysisMode::oracle) {
            ++res.queries;
            if (opt.encoding == Encoding::amplitude && sub.white_count() == 0) return false;
            DetectionPolicy pol = opt.detection;
            return !detect_peaks(exact_distribution(sub, opt.encoding), pol).empty();
        }
        if (opt.encoding == Encoding::amplitude && sub.white_count() == 0) {
            res.queries += opt.shots;  // every trial fails; charge one per shot
            return false;
        }
        Rng rng(derive_seed(opt.seed, (r.x0 << 32) ^ (r.y0 << 8) ^ r.w ^ (r.h << 20)));
        const auto run = run_pipeline(sub, opt.shots, rng, opt.encoding);
        res.queries += run.counters.queries;
        return !detect_peaks(run.samples, sub.n(), sub.m(), opt.detection).empty();
    }

    std::vector<Region> children(const Region& r) const {
        const bool split_x = r.w / 2 >= min_w && r.w > 1;
        const bool split_y = r.h / 2 >= min_h && r.h > 1;
        std::vector<Region> out;
        const std::size_t w = split_x ? r.w / 2 : r.w;
        const std::size_t h = split_y ? r.h / 2 : r.h;
        for (std::size_t y = r.y0; y < r.y0 + r.h; y += h)
            for (std::size_t x = r.x0; x < r.x0 + r.w; x += w) out.push_back({x, y, w, h});
        if (out.size() == 1) out.clear();
        return out;
    }

    // Regions under r that carry evidence; r itself when every child does or
    // when r does but no child can be singled out.
    std::vector<Region> visit(const Region& r, bool r_positive) {
        const auto kids = children(r);
        if (kids.empty()) return r_positive ? std::vector<Region>{r} : std::vector<Region>{};
        std::vector<bool> pos;
        for (const auto& k : kids) {
            if (over_budget()) {
                res.complete = false;
                return r_positive ? std::vector<Region>{r} : std::vector<Region>{};
            }
            pos.push_back(evidence(k));
        }
        const bool all = std::all_of(pos.begin(), pos.end(), [](bool b) { return b; });
        if (all) return {r};
        std::vector<Region> out;
        for (std::size_t i = 0; i < kids.size(); ++i) {
            auto sub = visit(kids[i], pos[i]);
            out.insert(out.end(), sub.begin(), sub.end());
        }
        if (out.empty() && r_positive) out.push_back(r);
        return out;
    }
};

}  // namespace detail

/// Recursively halve the array into power-of-two subgrids no smaller than the
/// chi scale, rerun the pipeline on each and keep the pieces with peaks.
inline LocaliseResult localise(const CellGrid& grid, const LocaliseOptions& opt = {}) {
    const double side = std::sqrt(std::clamp(opt.chi_scale, 0.0, 1.0));
    auto min_side = [&](std::size_t full) {
        const auto want = static_cast<std::size_t>(std::ceil(side * static_cast<double>(full)));
        return std::min<std::size_t>(full, std::max<std::size_t>(2, next_pow2(std::max<std::size_t>(want, 1))));
    };
    detail::Localiser loc{grid, opt, min_side(grid.width()), min_side(grid.height()), {}};
    const Region root = grid.bounds();
    const bool root_positive = loc.evidence(root);
    loc.res.regions = loc.visit(root, root_positive);
    return loc.res;
}

}  // namespace qpattern
