// qpattern: command-line front end. Every --section.key flag overrides the
// matching key of the JSON config given with --config.

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qpattern/experiment.hpp"

using namespace qpattern;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kPipeline = 3, kIncomplete = 4 };

const std::vector<std::pair<std::string, std::string>> kConfigKeys = {
    {"grid.n", "log2 of the row length"},
    {"grid.m", "log2 of the number of rows"},
    {"grid.rho", "background density"},
    {"grid.seed", "generator seed"},
    {"grid.file", "read this grid instead of generating one"},
    {"grid.content", "[width,height] of the generated part; black padding beyond"},
    {"pattern.spacing", "line spacing D"},
    {"pattern.theta", "line angle from vertical, radians"},
    {"pattern.region", "[x0,y0,w,h]"},
    {"pattern.delta_rho", "on-line density excess"},
    {"pattern.z0", "anchor cell of the first line"},
    {"pattern.line_width", "full line width (default D/2)"},
    {"pipeline.encoding", "amplitude|phase"},
    {"pipeline.mode", "oracle|sample"},
    {"pipeline.qft", "circuit|semiclassical"},
    {"pipeline.shots", "measurements per run"},
    {"pipeline.seed", "base seed for sampling"},
    {"pipeline.max_qubits", "qubit budget"},
    {"detection.tau", "oracle threshold in units of the noise floor"},
    {"detection.chi_target", "smallest pattern fraction of interest"},
    {"detection.gap", "cluster merge distance"},
    {"detection.window", "sample-mode half window"},
    {"detection.c_min", "minimum samples per cluster"},
    {"detection.false_alarm", "sample-mode noise exceedance budget"},
    {"detection.null_model", "speckle|poisson sample-mode null"},
    {"estimation.chi_scale", "lobe width / uncertainty scale"},
    {"estimation.harmonics", "harmonics used when scoring candidates"},
    {"estimation.ambiguity_ratio", "runner-up score ratio that flags ambiguity"},
    {"estimation.chi_calibration", "peak-height calibration constant"},
    {"estimation.delta_rho_assumed", "assumed delta_rho for chi_hat"},
    {"localise.enabled", "run localisation"},
    {"localise.mode", "oracle|sample"},
    {"localise.chi_scale", "smallest subgrid fraction"},
    {"localise.shots", "shots per subgrid (sample mode)"},
    {"localise.query_budget", "oracle query budget (0 = unlimited)"},
    {"output.dir", "artifact directory"},
    {"output.prefix", "artifact file prefix"},
};

struct ConfigArgs {
    std::string path;
    std::map<std::string, std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", path, "JSON config file");
        for (const auto& [key, help] : kConfigKeys) app->add_option("--" + key, overrides[key], help);
    }

    ExperimentConfig build() const {
        json j = json::object();
        if (!path.empty()) {
            std::ifstream in(path);
            if (!in) throw ConfigError("<file>", "cannot open " + path);
            try {
                j = json::parse(in, nullptr, true, true);
            } catch (const json::parse_error& e) {
                throw ConfigError("<file>", std::string("parse error: ") + e.what());
            }
        }
        for (const auto& [key, raw] : overrides) {
            if (raw.empty()) continue;
            const auto dot = key.find('.');
            json value = json::parse(raw, nullptr, false);
            if (value.is_discarded()) value = raw;  // bare words such as sample or phase
            j[key.substr(0, dot)][key.substr(dot + 1)] = value;
        }
        return config_from_json(j);
    }
};

std::vector<int> parse_sizes(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto dash = part.find('-');
        if (dash != std::string::npos) {
            const int a = std::stoi(part.substr(0, dash));
            const int b = std::stoi(part.substr(dash + 1));
            for (int v = a; v <= b; ++v) out.push_back(v);
        } else if (!part.empty()) {
            out.push_back(std::stoi(part));
        }
    }
    return out;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw Error("cannot write " + path);
    return file;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum line-pattern recognition simulator"};
    app.require_subcommand(1);

    ConfigArgs gen_args, run_args, loc_args, spec_args;
    std::string gen_out, loc_out, spec_out, spec_predict, sweep_out, sweep_sizes = "4-16";
    SweepOptions sweep_opts;

    auto* gen = app.add_subcommand("generate", "write a generated grid in the text format");
    gen_args.attach(gen);
    gen->add_option("-o,--out", gen_out, "output file (default stdout)");

    auto* runc = app.add_subcommand("run", "generate, run both pipelines, detect and estimate; prints the report");
    run_args.attach(runc);

    auto* sweep = app.add_subcommand("sweep", "gate, query and transform-op counts per qubit count");
    sweep->add_option("--sizes", sweep_sizes, "qubit counts, e.g. 4-16 or 8,10,12");
    sweep->add_option("--shots", sweep_opts.shots, "shots for the query statistics");
    sweep->add_option("--semiclassical-shots", sweep_opts.semiclassical_shots, "semiclassical samples per size");
    sweep->add_option("--rho", sweep_opts.rho, "background density");
    sweep->add_option("--seed", sweep_opts.seed, "base seed");
    sweep->add_option("--max-qubits", sweep_opts.max_qubits, "qubit budget");
    sweep->add_option("-o,--out", sweep_out, "CSV output (default stdout)");

    auto* loc = app.add_subcommand("localise", "subdivide the array and report the regions carrying the pattern");
    loc_args.attach(loc);
    loc->add_option("-o,--out", loc_out, "JSON output (default stdout)");

    auto* spec = app.add_subcommand("spectrum", "exact wave-number distribution as CSV");
    spec_args.attach(spec);
    spec->add_option("-o,--out", spec_out, "CSV output (default stdout)");
    spec->add_option("--predict", spec_predict, "write predicted peaks for the config's pattern to this JSON file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = gen_args.build();
            const auto grid = make_grid(cfg);
            std::ofstream f;
            write_grid(open_out(gen_out, f), grid, provenance_lines(config_hash(cfg), cfg.seed, cfg.grid_seed, 0));
            return kOk;
        }
        if (runc->parsed()) {
            const auto cfg = run_args.build();
            const auto rep = run(cfg);
            std::cout << to_json(rep).dump(2) << '\n';
            std::cerr << "wall time " << rep.wall_time_ms << " ms\n";
            if (rep.localisation && !rep.localisation->complete) return kIncomplete;
            return kOk;
        }
        if (sweep->parsed()) {
            const auto sizes = parse_sizes(sweep_sizes);
            if (sizes.empty()) throw InvalidArgument("--sizes: no sizes given");
            const auto rows = complexity_sweep(sizes, sweep_opts);
            std::ofstream f;
            std::ostringstream hdr;
            hdr << "shots=" << sweep_opts.shots << " semiclassical_shots=" << sweep_opts.semiclassical_shots
                << " rho=" << sweep_opts.rho;
            write_sweep_csv(open_out(sweep_out, f), rows,
                            {"config_hash=" + hex64(fnv1a(sweep_sizes + hdr.str())),
                             "seed=" + std::to_string(sweep_opts.seed) + " " + hdr.str()});
            return kOk;
        }
        if (loc->parsed()) {
            auto cfg = loc_args.build();
            const auto grid = make_grid(cfg);
            LocaliseOptions lo = cfg.localise_options;
            lo.encoding = cfg.encoding;
            lo.detection = cfg.detection;
            lo.seed = cfg.localise_seed();
            const auto res = localise(grid, lo);
            json j = to_json(res);
            j["config_hash"] = config_hash(cfg);
            j["seeds"] = {{"pipeline", cfg.seed}, {"grid", cfg.grid_seed}, {"localise", lo.seed}};
            std::ofstream f;
            open_out(loc_out, f) << j.dump(2) << '\n';
            return res.complete ? kOk : kIncomplete;
        }
        if (spec->parsed()) {
            const auto cfg = spec_args.build();
            const auto grid = make_grid(cfg);
            const auto sp = exact_distribution(grid, cfg.encoding);
            std::ofstream f;
            write_spectrum_csv(open_out(spec_out, f), sp,
                               provenance_lines(config_hash(cfg), cfg.seed, cfg.grid_seed, 0));
            if (!spec_predict.empty()) {
                if (!cfg.pattern) throw ConfigError("pattern", "--predict needs a pattern");
                const auto& p = *cfg.pattern;
                const auto dims = GridDims::of(grid);
                const double chi = pattern_fraction(p, GridShape{grid.n(), grid.m()});
                json j = {{"config_hash", config_hash(cfg)},
                          {"seeds", {{"pipeline", cfg.seed}, {"grid", cfg.grid_seed}}},
                          {"row", predictions_to_json(predict_row_peaks(p.spacing, p.theta, dims, chi))},
                          {"column", predictions_to_json(predict_column_condition(p.theta, dims, chi))},
                          {"resonance", predictions_to_json(predict_resonances(p.spacing, p.theta, dims, false, chi))},
                          {"transposed_resonance",
                           predictions_to_json(predict_resonances(p.spacing, p.theta, dims, true, chi))},
                          {"peak_probability", peak_probability_estimate(cfg.rho, p.delta_rho, chi)}};
                std::ofstream pf(spec_predict);
                if (!pf) throw Error("cannot write " + spec_predict);
                pf << j.dump(2) << '\n';
            }
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kPipeline;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kPipeline;
    }
    return kUsage;
}
