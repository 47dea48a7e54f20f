#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mta/mta.hpp"

namespace {

/// Spec-file or flag value rejected during validation; `field` names the
/// offending key in diagnostics.
struct SpecError : std::runtime_error {
    SpecError(const std::string& field, const std::string& message)
        : std::runtime_error("invalid value for '" + field + "': " + message),
          field_name(field) {}
    std::string field_name;
};

/// Fully resolved experiment description: defaults, then spec file, then
/// command-line overrides.
struct ExperimentSpec {
    std::vector<int> settings{1};
    std::vector<double> rhos{0.0};
    std::vector<double> qs{0.1};
    int reps = 50;
    std::vector<std::string> methods{"mta", "hsic_bh"};
    int H = 20;
    std::uint64_t seed = 1;
    std::string out = ".";
    std::string format = "csv";

    mta::Index n = 1000;
    mta::Index p = 200;
    int sparsity = 20;
    double coef_sd = -1.0;
    double kappa = 0.5;
    double fdp_offset = 0.0;
    int n_perm = 199;
    std::string sigma_rule = "snr_matched";
    double psi = 10.0;
    double sigma = 0.5;
    std::string design_file;  // empty: generate AR(1) Gaussian designs
};

template <typename T>
std::vector<T> scalar_or_array(const nlohmann::json& value, const std::string& field) {
    std::vector<T> out;
    try {
        if (value.is_array()) {
            for (const auto& v : value) out.push_back(v.get<T>());
        } else {
            out.push_back(value.get<T>());
        }
    } catch (const nlohmann::json::exception&) {
        throw SpecError(field, "wrong type");
    }
    if (out.empty()) throw SpecError(field, "empty list");
    return out;
}

template <typename T>
T scalar(const nlohmann::json& value, const std::string& field) {
    try {
        return value.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SpecError(field, "wrong type");
    }
}

void apply_spec_file(const std::string& path, ExperimentSpec& spec) {
    std::ifstream in(path);
    if (!in) throw SpecError("spec", "cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw SpecError("spec", std::string("JSON parse failure: ") + e.what());
    }
    if (!doc.is_object()) throw SpecError("spec", "top level must be an object");

    for (const auto& [key, value] : doc.items()) {
        if (key == "setting")
            spec.settings = scalar_or_array<int>(value, key);
        else if (key == "rho")
            spec.rhos = scalar_or_array<double>(value, key);
        else if (key == "q")
            spec.qs = scalar_or_array<double>(value, key);
        else if (key == "reps")
            spec.reps = scalar<int>(value, key);
        else if (key == "methods")
            spec.methods = scalar_or_array<std::string>(value, key);
        else if (key == "H")
            spec.H = scalar<int>(value, key);
        else if (key == "seed")
            spec.seed = scalar<std::uint64_t>(value, key);
        else if (key == "out")
            spec.out = scalar<std::string>(value, key);
        else if (key == "format")
            spec.format = scalar<std::string>(value, key);
        else if (key == "n")
            spec.n = scalar<mta::Index>(value, key);
        else if (key == "p")
            spec.p = scalar<mta::Index>(value, key);
        else if (key == "sparsity")
            spec.sparsity = scalar<int>(value, key);
        else if (key == "coef_sd")
            spec.coef_sd = scalar<double>(value, key);
        else if (key == "kappa")
            spec.kappa = scalar<double>(value, key);
        else if (key == "fdp_offset")
            spec.fdp_offset = scalar<double>(value, key);
        else if (key == "n_perm")
            spec.n_perm = scalar<int>(value, key);
        else if (key == "sigma_rule")
            spec.sigma_rule = scalar<std::string>(value, key);
        else if (key == "psi")
            spec.psi = scalar<double>(value, key);
        else if (key == "sigma")
            spec.sigma = scalar<double>(value, key);
        else if (key == "design_file")
            spec.design_file = scalar<std::string>(value, key);
        else
            throw SpecError(key, "unknown field");
    }
}

void validate_spec(const ExperimentSpec& spec) {
    if (spec.settings.empty()) throw SpecError("setting", "empty grid");
    for (int s : spec.settings)
        if (s < 1 || s > 4) throw SpecError("setting", "must be 1..4");
    for (double r : spec.rhos)
        if (!(r >= 0.0 && r < 1.0)) throw SpecError("rho", "must be in [0,1)");
    for (double q : spec.qs)
        if (!(q > 0.0 && q < 1.0)) throw SpecError("q", "must be in (0,1)");
    if (spec.reps < 1) throw SpecError("reps", "must be >= 1");
    if (spec.methods.empty()) throw SpecError("methods", "empty list");
    for (const auto& m : spec.methods)
        if (m != "mta" && m != "hsic_bh")
            throw SpecError("methods", "unknown method '" + m + "'");
    if (spec.H < 2) throw SpecError("H", "must be >= 2");
    if (spec.format != "csv" && spec.format != "json")
        throw SpecError("format", "must be 'csv' or 'json'");
    if (spec.n < 1) throw SpecError("n", "must be >= 1");
    if (spec.p < 1) throw SpecError("p", "must be >= 1");
    if (spec.sparsity < 0 || spec.sparsity > spec.p)
        throw SpecError("sparsity", "must be in [0, p]");
    if (spec.kappa < 0.0) throw SpecError("kappa", "must be >= 0");
    if (spec.fdp_offset < 0.0) throw SpecError("fdp_offset", "must be >= 0");
    if (spec.n_perm < 99) throw SpecError("n_perm", "must be >= 99");
    if (spec.sigma_rule != "snr_matched" && spec.sigma_rule != "psi_scaled" &&
        spec.sigma_rule != "fixed")
        throw SpecError("sigma_rule",
                        "must be 'snr_matched', 'psi_scaled', or 'fixed'");
}

mta::SigmaRule sigma_rule_of(const ExperimentSpec& spec) {
    if (spec.sigma_rule == "psi_scaled") return mta::SigmaRule::psi_scaled(spec.psi);
    if (spec.sigma_rule == "fixed") return mta::SigmaRule::fixed(spec.sigma);
    return mta::SigmaRule::snr_matched();
}

int run_command(const ExperimentSpec& spec) {
    validate_spec(spec);

    mta::RunOptions options;
    options.H = spec.H;
    options.lambda_rule = mta::LambdaRule::nodewise_default();
    options.lambda_rule.kappa = spec.kappa;
    options.fdp_offset = spec.fdp_offset;
    options.n_perm = spec.n_perm;

    std::vector<mta::ReplicationRecord> records;
    std::uint64_t cell_index = 0;
    for (int setting : spec.settings) {
        for (double rho : spec.rhos) {
            for (double q : spec.qs) {
                mta::SimConfig cfg;
                cfg.n = spec.n;
                cfg.p = spec.p;
                cfg.rho = rho;
                cfg.setting = setting;
                cfg.n_indices = setting == 4 ? 5 : 2;
                cfg.sparsity_per_index = spec.sparsity;
                cfg.coef_sd = spec.coef_sd;
                cfg.sigma_rule = sigma_rule_of(spec);
                cfg.design_file = spec.design_file;
                const std::uint64_t cell_seed = mta::derive_seed(spec.seed, cell_index++);
                auto cell_records = mta::run_replications(cfg, spec.methods, spec.reps,
                                                          q, cell_seed, options);
                records.insert(records.end(),
                               std::make_move_iterator(cell_records.begin()),
                               std::make_move_iterator(cell_records.end()));
            }
        }
    }

    const auto cells = mta::empirical_fdr(records);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(spec.out, ec);
    if (ec) {
        std::cerr << "error: cannot create output directory '" << spec.out
                  << "': " << ec.message() << '\n';
        return 1;
    }
    const fs::path results_path =
        fs::path(spec.out) / ("results." + spec.format);
    const fs::path summary_path =
        fs::path(spec.out) / ("summary." + spec.format);

    std::ofstream results_file(results_path, std::ios::binary);
    std::ofstream summary_file(summary_path, std::ios::binary);
    if (!results_file || !summary_file) {
        std::cerr << "error: cannot open output files under '" << spec.out << "'\n";
        return 1;
    }
    if (spec.format == "csv") {
        mta::write_results_csv(records, results_file);
        mta::write_summary_csv(cells, summary_file);
    } else {
        results_file << mta::results_json(records).dump(2) << '\n';
        summary_file << mta::summary_json(cells).dump(2) << '\n';
    }

    std::size_t errored = 0;
    for (const auto& rec : records)
        if (rec.errored) ++errored;
    std::cout << "cells: " << cells.size() << ", records: " << records.size()
              << ", errored: " << errored << '\n';
    std::cout << "wrote " << results_path.string() << '\n';
    std::cout << "wrote " << summary_path.string() << '\n';
    return 0;
}

int demo_command(std::uint64_t seed) {
    const auto seeds = mta::ReplicationSeeds::for_rep(seed, 0);
    const mta::Index n = 1000, p = 200;
    const mta::Matrix X = mta::gen_design(n, p, 0.0, seeds.design);
    const auto truth = mta::gen_coefficients(p, 2, 20, n, seeds.truth);
    const auto draw =
        mta::gen_response(X, truth, 1, mta::SigmaRule::snr_matched(), seeds.response);

    mta::Dataset data{draw.y, X, {}};
    const auto result = mta::mta_procedure(data, 20, 0.1, seeds.mta);

    if (result.mirror.tau_q)
        std::cout << "# tau_q " << mta::format_double(*result.mirror.tau_q) << '\n';
    else
        std::cout << "# tau_q none\n";
    const std::set<mta::Index> blanket(truth.markov_blanket.begin(),
                                       truth.markov_blanket.end());
    std::cout << "label,m\n";
    for (mta::Index j = 0; j < p; ++j)
        std::cout << (blanket.count(j) ? "non_null" : "null") << ','
                  << mta::format_double(result.mirror.m(j)) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model-free multiple testing with angular balanced statistics"};
    app.require_subcommand(1);

    ExperimentSpec spec;
    std::string spec_path;

    auto* run = app.add_subcommand("run", "Run a simulation grid and write tables");
    run->add_option("--spec", spec_path, "JSON experiment spec file");
    run->add_option("--setting", spec.settings, "Response settings (1..4)");
    run->add_option("--rho", spec.rhos, "Design AR(1) correlations");
    run->add_option("--q", spec.qs, "Target FDR levels");
    run->add_option("--reps", spec.reps, "Replications per cell");
    run->add_option("--methods", spec.methods, "Methods: mta, hsic_bh");
    run->add_option("--H", spec.H, "Slice count");
    run->add_option("--seed", spec.seed, "Base seed");
    run->add_option("--out", spec.out, "Output directory");
    run->add_option("--format", spec.format, "Output format: csv or json");
    run->add_option("--n", spec.n, "Sample size");
    run->add_option("--p", spec.p, "Feature count");
    run->add_option("--sparsity", spec.sparsity, "Nonzeros per index row");
    run->add_option("--coef_sd", spec.coef_sd, "Coefficient scale (<=0: 20/sqrt(n))");
    run->add_option("--kappa", spec.kappa, "Node-wise penalty multiplier");
    run->add_option("--fdp_offset", spec.fdp_offset, "FDP-hat numerator offset");
    run->add_option("--n_perm", spec.n_perm, "Permutations for the kernel baseline");
    run->add_option("--sigma_rule", spec.sigma_rule,
                    "Noise rule: snr_matched, psi_scaled, fixed");
    run->add_option("--psi", spec.psi, "Noise scale for psi_scaled");
    run->add_option("--sigma", spec.sigma, "Noise scale for fixed");
    run->add_option("--design_file", spec.design_file,
                    "CSV design matrix reused for every replication");

    std::uint64_t demo_seed = 1;
    auto* demo = app.add_subcommand(
        "demo", "One replication: labeled mirror statistics for histogramming");
    demo->add_option("--seed", demo_seed, "Replication seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) {
            // Apply the spec file first, then re-apply any explicit flags so
            // command-line values override file values.
            if (!spec_path.empty()) {
                ExperimentSpec base;
                apply_spec_file(spec_path, base);
                auto keep_if_passed = [&](const char* flag, auto member) {
                    if (run->count(flag) > 0) base.*member = spec.*member;
                };
                keep_if_passed("--setting", &ExperimentSpec::settings);
                keep_if_passed("--rho", &ExperimentSpec::rhos);
                keep_if_passed("--q", &ExperimentSpec::qs);
                keep_if_passed("--reps", &ExperimentSpec::reps);
                keep_if_passed("--methods", &ExperimentSpec::methods);
                keep_if_passed("--H", &ExperimentSpec::H);
                keep_if_passed("--seed", &ExperimentSpec::seed);
                keep_if_passed("--out", &ExperimentSpec::out);
                keep_if_passed("--format", &ExperimentSpec::format);
                keep_if_passed("--n", &ExperimentSpec::n);
                keep_if_passed("--p", &ExperimentSpec::p);
                keep_if_passed("--sparsity", &ExperimentSpec::sparsity);
                keep_if_passed("--coef_sd", &ExperimentSpec::coef_sd);
                keep_if_passed("--kappa", &ExperimentSpec::kappa);
                keep_if_passed("--fdp_offset", &ExperimentSpec::fdp_offset);
                keep_if_passed("--n_perm", &ExperimentSpec::n_perm);
                keep_if_passed("--sigma_rule", &ExperimentSpec::sigma_rule);
                keep_if_passed("--psi", &ExperimentSpec::psi);
                keep_if_passed("--sigma", &ExperimentSpec::sigma);
                keep_if_passed("--design_file", &ExperimentSpec::design_file);
                spec = base;
            }
            return run_command(spec);
        }
        return demo_command(demo_seed);
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
