#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qpattern/common.hpp"
#include "qpattern/grid.hpp"

namespace qpattern {

using cplx = std::complex<double>;

inline constexpr int kDefaultMaxQubits = 22;

/// State of s coordinate qubits plus one ancilla. Basis index is (z << 1) | a,
/// with coordinate qubit j carrying weight 2^j in z (little-endian).
class PureState {
public:
    PureState() = default;

    /// |0...0>|0>
    explicit PureState(int s, int max_qubits = kDefaultMaxQubits) : s_(s) {
        if (s < 1) throw InvalidArgument("state needs at least one coordinate qubit");
        if (s > max_qubits)
            throw ResourceError("s = " + std::to_string(s) + " exceeds the qubit budget of " +
                                std::to_string(max_qubits));
        amp_.assign(std::size_t{2} << s, cplx{0.0, 0.0});
        amp_[0] = 1.0;
    }

    int qubits() const { return s_; }
    std::size_t coord_dim() const { return std::size_t{1} << s_; }
    std::size_t dim() const { return amp_.size(); }

    static std::size_t index(std::size_t z, int ancilla) { return (z << 1) | static_cast<std::size_t>(ancilla); }

    cplx amplitude(std::size_t z, int ancilla) const { return amp_[index(z, ancilla)]; }
    std::vector<cplx>& amplitudes() { return amp_; }
    const std::vector<cplx>& amplitudes() const { return amp_; }

    double norm2() const {
        double acc = 0.0;
        for (const auto& a : amp_) acc += std::norm(a);
        return acc;
    }

    /// Probability mass of the ancilla-1 branch.
    double ancilla_one_weight() const {
        double acc = 0.0;
        for (std::size_t i = 1; i < amp_.size(); i += 2) acc += std::norm(amp_[i]);
        return acc;
    }

    std::uint64_t gate_count = 0;
    std::uint64_t query_count = 0;

private:
    int s_ = 0;
    std::vector<cplx> amp_;
};

namespace gates {

inline std::size_t bit_of(int coord_qubit) { return std::size_t{1} << (coord_qubit + 1); }

inline void hadamard_bit(PureState& st, std::size_t bit) {
    auto& a = st.amplitudes();
    const double r = std::numbers::sqrt2 / 2.0;
    for (std::size_t base = 0; base < a.size(); base += 2 * bit) {
        for (std::size_t i = base; i < base + bit; ++i) {
            const cplx u = a[i];
            const cplx v = a[i + bit];
            a[i] = (u + v) * r;
            a[i + bit] = (u - v) * r;
        }
    }
    ++st.gate_count;
}

inline void hadamard(PureState& st, int q) { hadamard_bit(st, bit_of(q)); }
inline void hadamard_ancilla(PureState& st) { hadamard_bit(st, 1); }

inline void pauli_x_ancilla(PureState& st) {
    auto& a = st.amplitudes();
    for (std::size_t i = 0; i < a.size(); i += 2) std::swap(a[i], a[i + 1]);
    ++st.gate_count;
}

/// diag(1, e^{i angle}) on both qubits being 1.
inline void controlled_phase(PureState& st, int control, int target, double angle) {
    const std::size_t mask = bit_of(control) | bit_of(target);
    const cplx ph = std::polar(1.0, angle);
    auto& a = st.amplitudes();
    for (std::size_t i = 0; i < a.size(); ++i)
        if ((i & mask) == mask) a[i] *= ph;
    ++st.gate_count;
}

inline void swap(PureState& st, int q0, int q1) {
    const std::size_t b0 = bit_of(q0);
    const std::size_t b1 = bit_of(q1);
    auto& a = st.amplitudes();
    for (std::size_t i = 0; i < a.size(); ++i)
        if ((i & b0) && !(i & b1)) std::swap(a[i], a[(i ^ b0) | b1]);
    ++st.gate_count;
}

}  // namespace gates

/// Hadamard on every coordinate qubit of |0>|0>: amplitude 1/sqrt(S) on each |z>|0>.
inline PureState prepare_superposition(int s, int max_qubits = kDefaultMaxQubits) {
    PureState st(s, max_qubits);
    for (int q = 0; q < s; ++q) gates::hadamard(st, q);
    return st;
}

inline void check_dims(const PureState& st, const CellGrid& grid) {
    if (st.qubits() != grid.qubits())
        throw InvalidArgument("state has " + std::to_string(st.qubits()) + " coordinate qubits but the grid needs " +
                              std::to_string(grid.qubits()));
}

/// |z>|0> -> |z>|f(z)>. Defined on ancilla |0> only; a populated ancilla-1
/// branch is rejected.
inline void oracle_amplitude(PureState& st, const CellGrid& grid) {
    check_dims(st, grid);
    auto& a = st.amplitudes();
    for (std::size_t i = 1; i < a.size(); i += 2)
        if (a[i] != cplx{0.0, 0.0}) throw InvalidArgument("amplitude oracle requires the ancilla in |0>");
    for (std::size_t z = 0; z < grid.size(); ++z)
        if (grid.at(z)) std::swap(a[PureState::index(z, 0)], a[PureState::index(z, 1)]);
    ++st.query_count;
}

/// |z>|a> -> |z>|a xor f(z)>, an involution.
inline void oracle_phase_xor(PureState& st, const CellGrid& grid) {
    check_dims(st, grid);
    auto& a = st.amplitudes();
    for (std::size_t z = 0; z < grid.size(); ++z)
        if (grid.at(z)) std::swap(a[PureState::index(z, 0)], a[PureState::index(z, 1)]);
    ++st.query_count;
}

struct SwitchOutput {
    bool alpha;
    bool not_alpha_and_beta;
    bool alpha_and_beta;
    friend bool operator==(const SwitchOutput&, const SwitchOutput&) = default;
};

/// Refractor switch: routes beta to the second or third line depending on alpha.
inline SwitchOutput switch_gate(bool alpha, bool beta) { return {alpha, !alpha && beta, alpha && beta}; }

/// Switch gate on a 3-qubit basis state (bit 2 = alpha, bit 1 = beta, bit 0 =
/// third line). Only inputs with the third line in |0> are in the domain.
inline unsigned switch_gate_basis(unsigned in) {
    if (in > 7) throw InvalidArgument("switch gate acts on 3-bit basis states");
    if (in & 1u) throw InvalidArgument("switch gate requires the third input in |0>");
    const auto out = switch_gate((in >> 2) & 1u, (in >> 1) & 1u);
    return (unsigned(out.alpha) << 2) | (unsigned(out.not_alpha_and_beta) << 1) | unsigned(out.alpha_and_beta);
}

/// Unitary completion of the switch gate: the controlled swap (Fredkin) of the
/// last two lines, which agrees with switch_gate_basis on its domain.
inline std::array<std::array<int, 8>, 8> switch_gate_matrix() {
    std::array<std::array<int, 8>, 8> u{};
    for (unsigned in = 0; in < 8; ++in) {
        unsigned out = in;
        if (in & 4u) out = (in & 4u) | ((in & 1u) << 1) | ((in >> 1) & 1u);
        u[out][in] = 1;
    }
    return u;
}

/// Measure the ancilla and keep the f = 1 branch. Returns the success probability.
inline double postselect_f1(PureState& st) {
    const double p = st.ancilla_one_weight();
    if (p <= 0.0) throw PostselectionError("post-selection on f = 1 is impossible: the grid has no points");
    const double scale = 1.0 / std::sqrt(p);
    auto& a = st.amplitudes();
    for (std::size_t i = 0; i < a.size(); i += 2) {
        a[i] = 0.0;
        a[i + 1] *= scale;
    }
    return p;
}

inline std::uint64_t qft_gate_count(int s) {
    const auto u = static_cast<std::uint64_t>(s);
    return u * (u + 1) / 2 + u / 2;
}

/// |z> -> S^{-1/2} sum_k exp(+2 pi i z k / S)|k> on the coordinate register:
/// Hadamards, controlled phases, then the bit-reversal swaps.
inline void qft_circuit(PureState& st) {
    const int s = st.qubits();
    for (int q = s - 1; q >= 0; --q) {
        gates::hadamard(st, q);
        for (int c = q - 1; c >= 0; --c)
            gates::controlled_phase(st, c, q, 2.0 * std::numbers::pi / static_cast<double>(std::uint64_t{1} << (q - c + 1)));
    }
    for (int q = 0; q < s / 2; ++q) gates::swap(st, q, s - 1 - q);
}

struct MeasurementSample {
    std::size_t k = 0;
    std::size_t shot_id = 0;
};

/// Marginal distribution of the coordinate register (ancilla traced out).
inline std::vector<double> coordinate_probabilities(const PureState& st) {
    std::vector<double> p(st.coord_dim());
    const auto& a = st.amplitudes();
    for (std::size_t z = 0; z < p.size(); ++z) p[z] = std::norm(a[2 * z]) + std::norm(a[2 * z + 1]);
    return p;
}

/// Inverse-CDF sampler over a fixed discrete distribution.
class DiscreteSampler {
public:
    explicit DiscreteSampler(const std::vector<double>& probs) : cdf_(probs.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            cdf_[i] = acc;
        }
        total_ = acc;
        if (!(total_ > 0.0)) throw InvalidArgument("cannot sample from a zero distribution");
    }

    std::size_t operator()(Rng& rng) const {
        const double u = uniform01(rng) * total_;
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        auto i = static_cast<std::size_t>(it - cdf_.begin());
        if (i >= cdf_.size()) i = cdf_.size() - 1;
        return i;
    }

private:
    std::vector<double> cdf_;
    double total_ = 0.0;
};

/// i.i.d. measurements of the coordinate register in the computational basis.
inline std::vector<MeasurementSample> sample_k(const PureState& st, std::size_t shots, Rng& rng) {
    DiscreteSampler draw(coordinate_probabilities(st));
    std::vector<MeasurementSample> out(shots);
    for (std::size_t i = 0; i < shots; ++i) out[i] = {draw(rng), i};
    return out;
}

namespace detail {

// One semiclassical step on the highest remaining coordinate qubit: classical
// phase, Hadamard, then the outcome probabilities of the two halves.
inline void semiclassical_step(std::vector<cplx>& w, double phase, double& p0, double& p1) {
    const std::size_t half = w.size() / 2;
    const double r = std::numbers::sqrt2 / 2.0;
    const cplx ph = std::polar(1.0, phase);
    p0 = p1 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
        const cplx u = w[i];
        const cplx v = w[i + half] * ph;
        w[i] = (u + v) * r;
        w[i + half] = (u - v) * r;
        p0 += std::norm(w[i]);
        p1 += std::norm(w[i + half]);
    }
}

inline double semiclassical_phase(const std::vector<int>& bits, int q, int s) {
    double phase = 0.0;
    for (int h = q + 1; h < s; ++h)
        if (bits[h]) phase += 2.0 * std::numbers::pi / static_cast<double>(std::uint64_t{1} << (h - q + 1));
    return phase;
}

inline void semiclassical_branch(std::vector<cplx> w, int q, int s, std::vector<int>& bits, double prob,
                                 std::vector<double>& out) {
    if (q < 0) {
        std::size_t k = 0;
        for (int h = 0; h < s; ++h)
            if (bits[h]) k |= std::size_t{1} << (s - 1 - h);
        out[k] += prob;
        return;
    }
    double p0, p1;
    semiclassical_step(w, semiclassical_phase(bits, q, s), p0, p1);
    const double total = p0 + p1;
    if (total <= 0.0) return;
    const std::size_t half = w.size() / 2;
    for (int b = 0; b < 2; ++b) {
        const double pb = (b ? p1 : p0) / total;
        if (pb <= 0.0) continue;
        std::vector<cplx> sub(w.begin() + static_cast<std::ptrdiff_t>(b ? half : 0),
                              w.begin() + static_cast<std::ptrdiff_t>(b ? w.size() : half));
        bits[q] = b;
        semiclassical_branch(std::move(sub), q - 1, s, bits, prob * pb, out);
        bits[q] = 0;
    }
}

}  // namespace detail

/// Measurement-based QFT: each coordinate qubit, highest first, gets one
/// classically controlled phase, a Hadamard and an immediate measurement.
/// Costs 3 elementary operations per qubit. The state is not modified.
inline MeasurementSample semiclassical_qft_sample(const PureState& st, Rng& rng, std::size_t shot_id,
                                                  std::uint64_t& gate_count) {
    const int s = st.qubits();
    std::vector<cplx> w = st.amplitudes();
    std::vector<int> bits(static_cast<std::size_t>(s), 0);
    std::size_t k = 0;
    for (int q = s - 1; q >= 0; --q) {
        double p0, p1;
        detail::semiclassical_step(w, detail::semiclassical_phase(bits, q, s), p0, p1);
        const int b = uniform01(rng) * (p0 + p1) < p1 ? 1 : 0;
        bits[static_cast<std::size_t>(q)] = b;
        if (b) k |= std::size_t{1} << (s - 1 - q);
        const std::size_t half = w.size() / 2;
        if (b) std::copy(w.begin() + static_cast<std::ptrdiff_t>(half), w.end(), w.begin());
        w.resize(half);
        gate_count += 3;  // phase, Hadamard, measurement
    }
    return {k, shot_id};
}

/// Exact outcome distribution of the semiclassical sampler, enumerating every
/// measurement branch. O(s * S).
inline std::vector<double> semiclassical_distribution(const PureState& st) {
    const int s = st.qubits();
    std::vector<double> out(st.coord_dim(), 0.0);
    std::vector<int> bits(static_cast<std::size_t>(s), 0);
    detail::semiclassical_branch(st.amplitudes(), s - 1, s, bits, 1.0, out);
    return out;
}

enum class Encoding { amplitude, phase };
enum class QftMode { circuit, semiclassical };

inline std::string to_string(Encoding e) { return e == Encoding::amplitude ? "amplitude" : "phase"; }
inline std::string to_string(QftMode m) { return m == QftMode::circuit ? "circuit" : "semiclassical"; }

struct Counters {
    std::uint64_t gates = 0;
    std::uint64_t queries = 0;
    std::uint64_t trials = 0;
    std::uint64_t shots = 0;

    Counters& operator+=(const Counters& o) {
        gates += o.gates;
        queries += o.queries;
        trials += o.trials;
        shots += o.shots;
        return *this;
    }
};

/// Amplitude encoding: H^s, oracle, keep f = 1. The returned state is the
/// normalized superposition over point coordinates.
inline PureState prepare_point_state(const CellGrid& grid, double& success_probability,
                                     int max_qubits = kDefaultMaxQubits) {
    PureState st = prepare_superposition(grid.qubits(), max_qubits);
    oracle_amplitude(st, grid);
    success_probability = postselect_f1(st);
    return st;
}

/// Phase encoding: ancilla in (|0> - |1>)/sqrt(2), XOR oracle. The coordinate
/// register carries (-1)^f(z) / sqrt(S).
inline PureState prepare_phase_state(const CellGrid& grid, int max_qubits = kDefaultMaxQubits) {
    PureState st = prepare_superposition(grid.qubits(), max_qubits);
    gates::pauli_x_ancilla(st);
    gates::hadamard_ancilla(st);
    oracle_phase_xor(st, grid);
    return st;
}

struct PipelineResult {
    std::vector<MeasurementSample> samples;
    Counters counters;
    double success_probability = 1.0;
};

/// Full quantum pipeline, one measured wave number per shot.
///
/// Every accepted amplitude-encoding trial leaves the same post-selected
/// state, so that state (and its QFT) is simulated once; the trials
/// themselves are drawn per shot from the exact f = 1 probability, which is
/// what the query counter records.
inline PipelineResult run_pipeline(const CellGrid& grid, std::size_t shots, Rng& rng, Encoding encoding,
                                   QftMode mode = QftMode::circuit, int max_qubits = kDefaultMaxQubits) {
    PipelineResult res;
    const int s = grid.qubits();
    PureState st;
    std::uint64_t prep_gates = 0;
    if (encoding == Encoding::amplitude) {
        st = prepare_point_state(grid, res.success_probability, max_qubits);
        prep_gates = static_cast<std::uint64_t>(s);
    } else {
        st = prepare_phase_state(grid, max_qubits);
        prep_gates = static_cast<std::uint64_t>(s) + 2;
    }

    std::vector<double> probs;
    if (mode == QftMode::circuit) {
        qft_circuit(st);
        probs = coordinate_probabilities(st);
    }
    std::optional<DiscreteSampler> draw;
    if (mode == QftMode::circuit) draw.emplace(probs);

    res.samples.reserve(shots);
    for (std::size_t shot = 0; shot < shots; ++shot) {
        if (encoding == Encoding::amplitude) {
            for (;;) {
                ++res.counters.trials;
                ++res.counters.queries;
                res.counters.gates += prep_gates;
                if (uniform01(rng) < res.success_probability) break;
            }
        } else {
            ++res.counters.trials;
            ++res.counters.queries;
            res.counters.gates += prep_gates;
        }
        if (mode == QftMode::circuit) {
            res.counters.gates += qft_gate_count(s);
            res.samples.push_back({(*draw)(rng), shot});
        } else {
            res.samples.push_back(semiclassical_qft_sample(st, rng, shot, res.counters.gates));
        }
        ++res.counters.shots;
    }
    return res;
}

}  // namespace qpattern
