#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpattern/common.hpp"
#include "qpattern/grid.hpp"
#include "qpattern/qsim.hpp"
#include "qpattern/recognize.hpp"
#include "qpattern/spectral.hpp"

namespace qpattern {

using json = nlohmann::json;

/// Validation failure in a config, naming the offending field.
class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& field, const std::string& what)
        : InvalidArgument(field + ": " + what), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// Peak height p ~ kappa (chi delta_rho)^2 / rho with kappa ~ 0.5 on generated
// line patterns (see tests/calibration_test.cpp); chi_hat scales by 1/sqrt(kappa).
inline constexpr double kDefaultChiCalibration = 1.4;

struct ExperimentConfig {
    // grid
    int n = 6;
    int m = 6;
    double rho = 0.5;
    std::uint64_t grid_seed = 1;
    std::string grid_file;  // when set, read instead of generating
    std::optional<std::pair<std::size_t, std::size_t>> content;  // generated width x height, black padding beyond
    std::optional<LinePatternSpec> pattern;

    // pipeline
    Encoding encoding = Encoding::amplitude;
    AnalysisMode mode = AnalysisMode::oracle;
    QftMode qft = QftMode::circuit;
    std::size_t shots = 10000;
    std::uint64_t seed = 1;
    int max_qubits = kDefaultMaxQubits;

    DetectionPolicy detection;
    EstimationPolicy estimation;
    double chi_calibration = kDefaultChiCalibration;
    std::optional<double> delta_rho_assumed;

    bool localise = false;
    LocaliseOptions localise_options;

    std::string output_dir;
    std::string output_prefix;

    std::uint64_t transposed_seed() const { return derive_seed(seed, 2); }
    std::uint64_t original_seed() const { return derive_seed(seed, 1); }
    std::uint64_t localise_seed() const { return derive_seed(seed, 3); }
};

namespace detail {

template <class T>
T get_field(const json& j, const std::string& key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + key, std::string("wrong type (") + e.what() + ")");
    }
}

inline void reject_unknown(const json& j, const std::vector<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path.substr(0, path.size() - 1), "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError(path + it.key(), "unknown key");
}

inline Encoding parse_encoding(const std::string& s, const std::string& field) {
    if (s == "amplitude") return Encoding::amplitude;
    if (s == "phase") return Encoding::phase;
    throw ConfigError(field, "expected amplitude|phase, got '" + s + "'");
}

inline AnalysisMode parse_mode(const std::string& s, const std::string& field) {
    if (s == "oracle") return AnalysisMode::oracle;
    if (s == "sample") return AnalysisMode::sample;
    throw ConfigError(field, "expected oracle|sample, got '" + s + "'");
}

inline QftMode parse_qft(const std::string& s, const std::string& field) {
    if (s == "circuit") return QftMode::circuit;
    if (s == "semiclassical") return QftMode::semiclassical;
    throw ConfigError(field, "expected circuit|semiclassical, got '" + s + "'");
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
    if (c.grid_file.empty()) {
        if (c.n < 0 || c.m < 0 || c.n + c.m < 1) throw ConfigError("grid.n", "need n, m >= 0 and n + m >= 1");
        if (c.n + c.m > c.max_qubits) throw ConfigError("grid.n", "n + m exceeds pipeline.max_qubits");
    }
    if (!(c.rho > 0.0 && c.rho <= 1.0)) throw ConfigError("grid.rho", "must lie in (0, 1]");
    if (c.mode == AnalysisMode::sample && c.shots < 1) throw ConfigError("pipeline.shots", "must be >= 1 in sample mode");
    if (c.max_qubits < 1 || c.max_qubits > 30) throw ConfigError("pipeline.max_qubits", "must lie in [1, 30]");
    if (!(c.detection.tau > 0.0)) throw ConfigError("detection.tau", "must be positive");
    if (!(c.detection.chi_target > 0.0 && c.detection.chi_target <= 1.0))
        throw ConfigError("detection.chi_target", "must lie in (0, 1]");
    if (!(c.detection.false_alarm > 0.0 && c.detection.false_alarm < 1.0))
        throw ConfigError("detection.false_alarm", "must lie in (0, 1)");
    if (!(c.estimation.chi_scale > 0.0 && c.estimation.chi_scale <= 1.0))
        throw ConfigError("estimation.chi_scale", "must lie in (0, 1]");
    if (c.estimation.harmonics < 1) throw ConfigError("estimation.harmonics", "must be >= 1");
    if (!(c.chi_calibration > 0.0)) throw ConfigError("estimation.chi_calibration", "must be positive");
    if (c.delta_rho_assumed && !(*c.delta_rho_assumed > 0.0))
        throw ConfigError("estimation.delta_rho_assumed", "must be positive");
    if (c.localise && c.localise_options.mode == AnalysisMode::sample && c.localise_options.shots < 1)
        throw ConfigError("localise.shots", "must be >= 1 in sample mode");
    if (c.content && c.grid_file.empty()) {
        const auto [w, h] = *c.content;
        if (w == 0 || h == 0 || w > (std::size_t{1} << c.n) || h > (std::size_t{1} << c.m))
            throw ConfigError("grid.content", "must be non-empty and fit inside 2^n x 2^m");
        if (c.pattern && (c.pattern->region.x0 + c.pattern->region.w > w || c.pattern->region.y0 + c.pattern->region.h > h))
            throw ConfigError("pattern.region", "lies outside grid.content");
    }
    if (c.pattern && c.grid_file.empty()) {
        try {
            validate(*c.pattern, BackgroundSpec{c.rho, c.grid_seed}, GridShape{c.n, c.m});
        } catch (const InvalidArgument& e) {
            throw ConfigError("pattern", e.what());
        }
    }
}

inline ExperimentConfig config_from_json(const json& j) {
    using detail::get_field;
    ExperimentConfig c;
    detail::reject_unknown(j, {"grid", "pattern", "pipeline", "detection", "estimation", "localise", "output"}, "");

    if (j.contains("grid")) {
        const json& g = j["grid"];
        detail::reject_unknown(g, {"n", "m", "rho", "seed", "file", "content"}, "grid.");
        if (g.contains("content") && !g["content"].is_null()) {
            const json& ct = g["content"];
            if (!ct.is_array() || ct.size() != 2) throw ConfigError("grid.content", "expected [width, height]");
            try {
                c.content = std::make_pair(ct[0].get<std::size_t>(), ct[1].get<std::size_t>());
            } catch (const json::exception&) {
                throw ConfigError("grid.content", "entries must be non-negative integers");
            }
        }
        c.n = get_field<int>(g, "n", "grid.", c.n);
        c.m = get_field<int>(g, "m", "grid.", c.m);
        c.rho = get_field<double>(g, "rho", "grid.", c.rho);
        c.grid_seed = get_field<std::uint64_t>(g, "seed", "grid.", c.grid_seed);
        c.grid_file = get_field<std::string>(g, "file", "grid.", c.grid_file);
    }
    if (j.contains("pattern") && !j["pattern"].is_null()) {
        const json& p = j["pattern"];
        detail::reject_unknown(p, {"spacing", "theta", "region", "delta_rho", "z0", "line_width"}, "pattern.");
        LinePatternSpec ps;
        ps.spacing = get_field<double>(p, "spacing", "pattern.", ps.spacing);
        ps.theta = get_field<double>(p, "theta", "pattern.", ps.theta);
        ps.delta_rho = get_field<double>(p, "delta_rho", "pattern.", ps.delta_rho);
        if (!p.contains("region")) throw ConfigError("pattern.region", "required");
        const json& r = p["region"];
        if (r.is_array()) {
            if (r.size() != 4) throw ConfigError("pattern.region", "expected [x0, y0, w, h]");
            try {
                ps.region = {r[0].get<std::size_t>(), r[1].get<std::size_t>(), r[2].get<std::size_t>(),
                             r[3].get<std::size_t>()};
            } catch (const json::exception&) {
                throw ConfigError("pattern.region", "entries must be non-negative integers");
            }
        } else {
            detail::reject_unknown(r, {"x0", "y0", "w", "h"}, "pattern.region.");
            ps.region.x0 = get_field<std::size_t>(r, "x0", "pattern.region.", 0);
            ps.region.y0 = get_field<std::size_t>(r, "y0", "pattern.region.", 0);
            ps.region.w = get_field<std::size_t>(r, "w", "pattern.region.", 0);
            ps.region.h = get_field<std::size_t>(r, "h", "pattern.region.", 0);
        }
        const std::size_t N = std::size_t{1} << std::clamp(c.n, 0, 30);
        ps.z0 = get_field<std::size_t>(p, "z0", "pattern.", ps.region.x0 + N * ps.region.y0);
        if (p.contains("line_width")) ps.line_width = get_field<double>(p, "line_width", "pattern.", 0.0);
        c.pattern = ps;
    }
    if (j.contains("pipeline")) {
        const json& p = j["pipeline"];
        detail::reject_unknown(p, {"encoding", "mode", "qft", "shots", "seed", "max_qubits"}, "pipeline.");
        if (p.contains("encoding"))
            c.encoding = detail::parse_encoding(get_field<std::string>(p, "encoding", "pipeline.", ""), "pipeline.encoding");
        if (p.contains("mode"))
            c.mode = detail::parse_mode(get_field<std::string>(p, "mode", "pipeline.", ""), "pipeline.mode");
        if (p.contains("qft")) c.qft = detail::parse_qft(get_field<std::string>(p, "qft", "pipeline.", ""), "pipeline.qft");
        c.shots = get_field<std::size_t>(p, "shots", "pipeline.", c.shots);
        c.seed = get_field<std::uint64_t>(p, "seed", "pipeline.", c.seed);
        c.max_qubits = get_field<int>(p, "max_qubits", "pipeline.", c.max_qubits);
    }
    if (j.contains("detection")) {
        const json& d = j["detection"];
        detail::reject_unknown(d, {"tau", "chi_target", "gap", "window", "c_min", "false_alarm", "null_model"},
                               "detection.");
        c.detection.tau = get_field<double>(d, "tau", "detection.", c.detection.tau);
        c.detection.chi_target = get_field<double>(d, "chi_target", "detection.", c.detection.chi_target);
        if (d.contains("gap") && !d["gap"].is_null()) c.detection.gap = get_field<std::size_t>(d, "gap", "detection.", 1);
        if (d.contains("window") && !d["window"].is_null())
            c.detection.window = get_field<std::size_t>(d, "window", "detection.", 0);
        c.detection.c_min = get_field<std::uint64_t>(d, "c_min", "detection.", c.detection.c_min);
        c.detection.false_alarm = get_field<double>(d, "false_alarm", "detection.", c.detection.false_alarm);
        if (d.contains("null_model")) {
            const auto v = get_field<std::string>(d, "null_model", "detection.", "");
            if (v == "speckle")
                c.detection.null_model = NullModel::speckle;
            else if (v == "poisson")
                c.detection.null_model = NullModel::poisson;
            else
                throw ConfigError("detection.null_model", "expected speckle|poisson, got '" + v + "'");
        }
    }
    if (j.contains("estimation")) {
        const json& e = j["estimation"];
        detail::reject_unknown(e, {"chi_scale", "harmonics", "ambiguity_ratio", "chi_calibration", "delta_rho_assumed"},
                               "estimation.");
        c.estimation.chi_scale = get_field<double>(e, "chi_scale", "estimation.", c.estimation.chi_scale);
        c.estimation.harmonics = get_field<int>(e, "harmonics", "estimation.", c.estimation.harmonics);
        c.estimation.ambiguity_ratio = get_field<double>(e, "ambiguity_ratio", "estimation.", c.estimation.ambiguity_ratio);
        c.chi_calibration = get_field<double>(e, "chi_calibration", "estimation.", c.chi_calibration);
        if (e.contains("delta_rho_assumed") && !e["delta_rho_assumed"].is_null())
            c.delta_rho_assumed = get_field<double>(e, "delta_rho_assumed", "estimation.", 0.0);
    }
    if (j.contains("localise")) {
        const json& l = j["localise"];
        detail::reject_unknown(l, {"enabled", "mode", "chi_scale", "shots", "query_budget"}, "localise.");
        c.localise = get_field<bool>(l, "enabled", "localise.", true);
        if (l.contains("mode"))
            c.localise_options.mode = detail::parse_mode(get_field<std::string>(l, "mode", "localise.", ""), "localise.mode");
        c.localise_options.chi_scale = get_field<double>(l, "chi_scale", "localise.", c.localise_options.chi_scale);
        c.localise_options.shots = get_field<std::size_t>(l, "shots", "localise.", c.localise_options.shots);
        c.localise_options.query_budget =
            get_field<std::uint64_t>(l, "query_budget", "localise.", c.localise_options.query_budget);
    }
    if (j.contains("output")) {
        const json& o = j["output"];
        detail::reject_unknown(o, {"dir", "prefix"}, "output.");
        c.output_dir = get_field<std::string>(o, "dir", "output.", c.output_dir);
        c.output_prefix = get_field<std::string>(o, "prefix", "output.", c.output_prefix);
    }
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("parse error: ") + e.what());
    }
    return config_from_json(j);
}

/// Canonical form with every default filled in; the config hash is taken over it.
inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["grid"] = {{"n", c.n}, {"m", c.m}, {"rho", c.rho}, {"seed", c.grid_seed}, {"file", c.grid_file}};
    j["grid"]["content"] = c.content ? json::array({c.content->first, c.content->second}) : json(nullptr);
    if (c.pattern) {
        const auto& p = *c.pattern;
        j["pattern"] = {{"spacing", p.spacing},
                        {"theta", p.theta},
                        {"region", {p.region.x0, p.region.y0, p.region.w, p.region.h}},
                        {"delta_rho", p.delta_rho},
                        {"z0", p.z0}};
        if (p.line_width) j["pattern"]["line_width"] = *p.line_width;
    } else {
        j["pattern"] = nullptr;
    }
    j["pipeline"] = {{"encoding", to_string(c.encoding)}, {"mode", to_string(c.mode)}, {"qft", to_string(c.qft)},
                     {"shots", c.shots},  {"seed", c.seed},  {"max_qubits", c.max_qubits}};
    j["detection"] = {{"tau", c.detection.tau},
                      {"chi_target", c.detection.chi_target},
                      {"c_min", c.detection.c_min},
                      {"false_alarm", c.detection.false_alarm},
                      {"null_model", to_string(c.detection.null_model)}};
    j["detection"]["gap"] = c.detection.gap ? json(*c.detection.gap) : json(nullptr);
    j["detection"]["window"] = c.detection.window ? json(*c.detection.window) : json(nullptr);
    j["estimation"] = {{"chi_scale", c.estimation.chi_scale},
                       {"harmonics", c.estimation.harmonics},
                       {"ambiguity_ratio", c.estimation.ambiguity_ratio},
                       {"chi_calibration", c.chi_calibration}};
    j["estimation"]["delta_rho_assumed"] = c.delta_rho_assumed ? json(*c.delta_rho_assumed) : json(nullptr);
    j["localise"] = {{"enabled", c.localise},
                     {"mode", to_string(c.localise_options.mode)},
                     {"chi_scale", c.localise_options.chi_scale},
                     {"shots", c.localise_options.shots},
                     {"query_budget", c.localise_options.query_budget}};
    j["output"] = {{"dir", c.output_dir}, {"prefix", c.output_prefix}};
    return j;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(config_to_json(c).dump())); }

// ---------------------------------------------------------------------------
// Serialisation of analysis results.
// ---------------------------------------------------------------------------

inline json to_json(const PeakReport& r) {
    json clusters = json::array();
    for (const auto& c : r.clusters)
        clusters.push_back({{"k_low", c.k_low},
                            {"k_high", c.k_high},
                            {"sample_count", c.sample_count},
                            {"mass", c.mass},
                            {"weighted_center", c.weighted_center},
                            {"bins", c.members.size()}});
    return {{"mode", to_string(r.mode)},  {"n", r.n},
            {"m", r.m},                   {"total_shots", r.total_shots},
            {"excluded_k0", r.excluded_k0}, {"k0_weight", r.k0_weight},
            {"clusters", clusters}};
}

inline json to_json(const PatternEstimate& e) {
    json cands = json::array();
    for (const auto& c : e.candidates)
        cands.push_back({{"D", c.D}, {"theta", c.theta}, {"score", c.score}, {"origin", c.origin}});
    json j = {{"status", to_string(e.status)},
              {"D_hat", e.D_hat},
              {"theta_hat", e.theta_hat},
              {"chi_hat", e.chi_hat},
              {"uncertainty", {{"D", e.D_uncertainty}, {"theta", e.theta_uncertainty}}},
              {"confidence",
               {{"matched_peaks", e.matched_peaks},
                {"unmatched_peaks", e.unmatched_peaks},
                {"resonances_unsuppressed", e.resonances_unsuppressed},
                {"resonances_total", e.resonances_total}}},
              {"candidates", cands}};
    j["spacing_original"] = e.spacing_original ? json(*e.spacing_original) : json(nullptr);
    j["spacing_transposed"] = e.spacing_transposed ? json(*e.spacing_transposed) : json(nullptr);
    return j;
}

inline json to_json(const ChiEstimate& c) {
    return {{"value", c.value},
            {"kind", to_string(c.kind)},
            {"chi_min", c.chi_min},
            {"peak_fraction", c.peak_fraction},
            {"calibration", c.calibration}};
}

inline json to_json(const Region& r) { return json::array({r.x0, r.y0, r.w, r.h}); }

inline json to_json(const LocaliseResult& l) {
    json regions = json::array();
    for (const auto& r : l.regions) regions.push_back(to_json(r));
    return {{"regions", regions}, {"queries", l.queries}, {"evaluations", l.evaluations}, {"complete", l.complete}};
}

inline json to_json(const Counters& c) {
    return {{"gates", c.gates}, {"queries", c.queries}, {"trials", c.trials}, {"shots", c.shots}};
}

// ---------------------------------------------------------------------------
// Runs.
// ---------------------------------------------------------------------------

struct RunCounters {
    Counters quantum;                     // both runs together
    std::uint64_t classical_transform_ops = 0;
};

struct RunReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::uint64_t grid_seed = 0;
    std::uint64_t original_seed = 0;
    std::uint64_t transposed_seed = 0;
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t white_count = 0;
    bool present = false;
    double chi_min = 0.0;
    PeakReport peaks;
    PeakReport peaks_transposed;
    PatternEstimate estimate;
    ChiEstimate chi;
    std::optional<LocaliseResult> localisation;
    RunCounters counters;
    std::vector<std::string> artifacts;
    double wall_time_ms = 0.0;  // not serialised, so reports stay byte-identical across runs
};

inline json to_json(const RunReport& r) {
    json j = {{"config_hash", r.config_hash},
              {"seeds",
               {{"pipeline", r.seed},
                {"grid", r.grid_seed},
                {"original", r.original_seed},
                {"transposed", r.transposed_seed}}},
              {"grid", {{"width", r.width}, {"height", r.height}, {"white_count", r.white_count}}},
              {"present", r.present},
              {"chi_min", r.chi_min},
              {"peaks", to_json(r.peaks)},
              {"peaks_transposed", to_json(r.peaks_transposed)},
              {"estimate", to_json(r.estimate)},
              {"chi", to_json(r.chi)},
              {"counters",
               {{"oracle_queries", r.counters.quantum.queries},
                {"quantum_gates", r.counters.quantum.gates},
                {"trials", r.counters.quantum.trials},
                {"shots", r.counters.quantum.shots},
                {"classical_transform_ops", r.counters.classical_transform_ops}}},
              {"artifacts", r.artifacts}};
    j["localisation"] = r.localisation ? to_json(*r.localisation) : json(nullptr);
    return j;
}

/// Header comment lines shared by every artifact a run writes.
inline std::vector<std::string> provenance_lines(const std::string& hash, std::uint64_t seed, std::uint64_t grid_seed,
                                                 std::uint64_t stream_seed) {
    return {"config_hash=" + hash, "seed=" + std::to_string(seed) + " grid_seed=" + std::to_string(grid_seed) +
                                       " stream_seed=" + std::to_string(stream_seed)};
}

inline void write_samples_csv(std::ostream& os, const std::vector<MeasurementSample>& samples,
                              const std::vector<std::string>& header) {
    for (const auto& h : header) os << "# " << h << '\n';
    os << "shot_id,k\n";
    for (const auto& s : samples) os << s.shot_id << ',' << s.k << '\n';
}

inline void write_spectrum_csv(std::ostream& os, const Spectrum& sp, const std::vector<std::string>& header) {
    for (const auto& h : header) os << "# " << h << '\n';
    os << "k,p\n";
    os << std::setprecision(17);
    for (std::size_t k = 0; k < sp.size(); ++k) os << k << ',' << sp.probs[k] << '\n';
}

inline json predictions_to_json(const std::vector<PeakPrediction>& preds) {
    json out = json::array();
    for (const auto& p : preds)
        out.push_back({{"k_center", p.k_center},
                       {"width", p.width},
                       {"source", to_string(p.source)},
                       {"order", p.order},
                       {"laue_xi", p.laue_xi},
                       {"laue_kappa_per_k", p.laue_kappa_per_k},
                       {"suppressed", p.suppressed},
                       {"detuning", p.detuning}});
    return out;
}

inline CellGrid make_grid(const ExperimentConfig& c) {
    if (!c.grid_file.empty()) {
        std::ifstream in(c.grid_file);
        if (!in) throw ConfigError("grid.file", "cannot open " + c.grid_file);
        return read_grid(in);
    }
    if (c.content) {
        const CellGrid g = generate_padded_grid(c.content->first, c.content->second, c.pattern, {c.rho, c.grid_seed});
        if (g.n() != c.n || g.m() != c.m) throw ConfigError("grid.content", "pads to a shape other than 2^n x 2^m");
        return g;
    }
    return generate_grid(GridShape{c.n, c.m}, c.pattern, BackgroundSpec{c.rho, c.grid_seed});
}

namespace detail {

struct SideResult {
    PeakReport peaks;
    Counters counters;
    std::uint64_t transform_ops = 0;
    std::optional<Spectrum> spectrum;
    std::vector<MeasurementSample> samples;
};

inline SideResult run_side(const CellGrid& g, const ExperimentConfig& c, std::uint64_t stream_seed) {
    SideResult out;
    if (c.mode == AnalysisMode::oracle) {
        if (c.encoding == Encoding::amplitude && g.white_count() == 0)
            throw PostselectionError("grid has no white cell; post-selection cannot succeed");
        out.spectrum = exact_distribution(g, c.encoding);
        out.transform_ops = out.spectrum->transform_ops;
        out.peaks = detect_peaks(*out.spectrum, c.detection);
    } else {
        Rng rng(stream_seed);
        auto res = run_pipeline(g, c.shots, rng, c.encoding, c.qft, c.max_qubits);
        out.counters = res.counters;
        out.samples = std::move(res.samples);
        out.peaks = detect_peaks(out.samples, g.n(), g.m(), c.detection);
    }
    return out;
}

}  // namespace detail

/// generate -> pipeline on the array and its transpose -> detect -> estimate
/// -> (optional) localise. Artifacts go to output_dir when it is set.
inline RunReport run(const ExperimentConfig& c) {
    validate(c);
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.config_hash = config_hash(c);
    rep.seed = c.seed;
    rep.grid_seed = c.grid_seed;
    rep.original_seed = c.original_seed();
    rep.transposed_seed = c.transposed_seed();

    const CellGrid grid = make_grid(c);
    const CellGrid grid_t = transpose(grid);
    rep.width = grid.width();
    rep.height = grid.height();
    rep.white_count = grid.white_count();

    detail::SideResult a, b;
    try {
        a = detail::run_side(grid, c, rep.original_seed);
        b = detail::run_side(grid_t, c, rep.transposed_seed);
    } catch (const PostselectionError& e) {
        throw PostselectionError(std::string("pipeline failed: ") + e.what());
    } catch (const ResourceError& e) {
        throw ResourceError(std::string("pipeline failed: ") + e.what());
    }
    rep.peaks = a.peaks;
    rep.peaks_transposed = b.peaks;
    rep.counters.quantum = a.counters;
    rep.counters.quantum += b.counters;
    rep.counters.classical_transform_ops = a.transform_ops + b.transform_ops;
    rep.present = !a.peaks.empty();
    rep.chi_min = c.mode == AnalysisMode::sample ? 1.0 / std::sqrt(static_cast<double>(c.shots)) : 0.0;

    rep.estimate = estimate_parameters(a.peaks, b.peaks, GridDims::of(grid), c.estimation);
    rep.chi = estimate_chi(a.peaks, grid.rho() > 0 ? grid.rho() : c.rho, c.delta_rho_assumed, c.chi_calibration);
    if (c.mode == AnalysisMode::oracle) rep.chi.chi_min = 0.0;
    rep.estimate.chi_hat = rep.chi.kind == ChiKind::chi ? rep.chi.value : 0.0;

    if (c.localise) {
        LocaliseOptions lo = c.localise_options;
        lo.encoding = c.encoding;
        lo.detection = c.detection;
        lo.seed = c.localise_seed();
        rep.localisation = localise(grid, lo);
    }

    if (!c.output_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(c.output_dir);
        auto path = [&](const std::string& name) { return (fs::path(c.output_dir) / (c.output_prefix + name)).string(); };
        {
            const auto p = path("grid.txt");
            std::ofstream os(p);
            write_grid(os, grid, provenance_lines(rep.config_hash, c.seed, c.grid_seed, 0));
            rep.artifacts.push_back(p);
        }
        auto dump_side = [&](const detail::SideResult& s, const std::string& tag, std::uint64_t stream) {
            const auto header = provenance_lines(rep.config_hash, c.seed, c.grid_seed, stream);
            if (s.spectrum) {
                const auto p = path("spectrum" + tag + ".csv");
                std::ofstream os(p);
                write_spectrum_csv(os, *s.spectrum, header);
                rep.artifacts.push_back(p);
            } else {
                const auto p = path("samples" + tag + ".csv");
                std::ofstream os(p);
                write_samples_csv(os, s.samples, header);
                rep.artifacts.push_back(p);
            }
        };
        dump_side(a, "", rep.original_seed);
        dump_side(b, "_transposed", rep.transposed_seed);
        const auto p = path("report.json");
        rep.artifacts.push_back(p);
        std::ofstream os(p);
        os << to_json(rep).dump(2) << '\n';
    }
    rep.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// ---------------------------------------------------------------------------
// Complexity sweep.
// ---------------------------------------------------------------------------

struct SweepRow {
    int s = 0;
    double rho_measured = 0.0;
    std::uint64_t qft_gates_per_shot = 0;        // measured by running the circuit once
    std::uint64_t qft_gates_closed_form = 0;
    double semiclassical_ops_per_shot = 0.0;
    double queries_per_shot_amplitude = 0.0;
    double queries_per_shot_phase = 0.0;
    std::uint64_t classical_transform_ops = 0;
};

struct SweepOptions {
    std::size_t shots = 10000;               // amplitude/phase query statistics
    std::size_t semiclassical_shots = 16;
    double rho = 0.5;
    std::uint64_t seed = 1;
    int max_qubits = kDefaultMaxQubits;
};

inline SweepRow sweep_one(int s, const SweepOptions& o) {
    SweepRow row;
    row.s = s;
    const int n = (s + 1) / 2;
    const int m = s - n;
    const CellGrid g = generate_grid(GridShape{n, m}, std::nullopt, BackgroundSpec{o.rho, derive_seed(o.seed, 100 + s)});
    row.rho_measured = g.rho();

    PureState st = prepare_superposition(s, o.max_qubits);
    const std::uint64_t before = st.gate_count;
    qft_circuit(st);
    row.qft_gates_per_shot = st.gate_count - before;
    row.qft_gates_closed_form = qft_gate_count(s);

    Rng rng(derive_seed(o.seed, 200 + s));
    if (g.white_count() > 0) {
        const auto amp = run_pipeline(g, o.shots, rng, Encoding::amplitude, QftMode::circuit, o.max_qubits);
        row.queries_per_shot_amplitude = static_cast<double>(amp.counters.queries) / static_cast<double>(o.shots);
    }
    const auto ph = run_pipeline(g, o.shots, rng, Encoding::phase, QftMode::circuit, o.max_qubits);
    row.queries_per_shot_phase = static_cast<double>(ph.counters.queries) / static_cast<double>(o.shots);

    PureState ps = prepare_phase_state(g, o.max_qubits);
    std::uint64_t ops = 0;
    for (std::size_t i = 0; i < o.semiclassical_shots; ++i) semiclassical_qft_sample(ps, rng, i, ops);
    row.semiclassical_ops_per_shot = static_cast<double>(ops) / static_cast<double>(o.semiclassical_shots);

    row.classical_transform_ops = exact_distribution(g, Encoding::phase).transform_ops;
    return row;
}

/// One row per size; sizes run concurrently, rows come back in input order.
inline std::vector<SweepRow> complexity_sweep(const std::vector<int>& sizes, const SweepOptions& o = {}) {
    for (int s : sizes)
        if (s < 1 || s > o.max_qubits) throw InvalidArgument("sweep size " + std::to_string(s) + " outside [1, max_qubits]");
    std::vector<std::future<SweepRow>> jobs;
    for (int s : sizes) jobs.push_back(std::async(std::launch::async, sweep_one, s, o));
    std::vector<SweepRow> rows;
    for (auto& j : jobs) rows.push_back(j.get());
    return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, const std::vector<std::string>& header) {
    for (const auto& h : header) os << "# " << h << '\n';
    os << "s,S,rho_measured,qft_gates_per_shot,qft_gates_closed_form,semiclassical_ops_per_shot,queries_per_shot_amplitude,"
          "queries_per_shot_phase,classical_transform_ops\n";
    os << std::setprecision(10);
    for (const auto& r : rows)
        os << r.s << ',' << (std::uint64_t{1} << r.s) << ',' << r.rho_measured << ',' << r.qft_gates_per_shot << ',' << r.qft_gates_closed_form
           << ',' << r.semiclassical_ops_per_shot << ',' << r.queries_per_shot_amplitude << ','
           << r.queries_per_shot_phase << ',' << r.classical_transform_ops << '\n';
}

/// Least-squares fit y ~ c * x through the origin; returns c and the largest
/// relative residual |y - c x| / (c x).
inline std::pair<double, double> proportional_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw InvalidArgument("fit needs matching non-empty series");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += x[i] * y[i];
        den += x[i] * x[i];
    }
    const double c = num / den;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(y[i] - c * x[i]) / (c * x[i]));
    return {c, worst};
}

}  // namespace qpattern
