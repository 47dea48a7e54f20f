#pragma once

#include <charconv>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mta/evalmetrics.hpp"
#include "mta/simgen.hpp"

namespace mta {

/// Shortest round-trip decimal form of a double, locale-independent with '.'
/// as the decimal separator.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// RFC-4180 style field escaping: quote when the value contains a comma,
/// quote, or newline, doubling any embedded quotes.
inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline constexpr const char* kResultsHeader =
    "setting,rho,method,rep,seed,q,tp,fp,power,fdp,n_rejected,tau_q,wall_ms,"
    "errored,error";

/// Long-format results table, one row per (replication, method), '\n' line
/// endings, header row first. tau_q is empty when no threshold was selected.
inline void write_results_csv(const std::vector<ReplicationRecord>& records,
                              std::ostream& os) {
    os << kResultsHeader << '\n';
    for (const auto& rec : records) {
        os << rec.setting << ',' << format_double(rec.rho) << ','
           << csv_escape(rec.method) << ',' << rec.rep << ',' << rec.seed << ','
           << format_double(rec.q) << ',' << rec.tp << ',' << rec.fp << ','
           << format_double(rec.power) << ',' << format_double(rec.fdp) << ','
           << rec.n_rejected << ',' << (rec.tau_q ? format_double(*rec.tau_q) : "")
           << ',' << format_double(rec.wall_ms) << ',' << (rec.errored ? 1 : 0) << ','
           << csv_escape(rec.error) << '\n';
    }
}

inline constexpr const char* kSummaryHeader =
    "setting,rho,method,q,n_reps,n_errored,mean_power,sd_power,mean_fdp,sd_fdp";

/// Per-cell summary table: mean and sample standard deviation of power and
/// FDP, recomputable from the results table by an independent reader.
inline void write_summary_csv(const std::vector<CellSummary>& cells,
                              std::ostream& os) {
    os << kSummaryHeader << '\n';
    for (const auto& cell : cells) {
        const double scale =
            cell.n_records > 1 ? std::sqrt(static_cast<double>(cell.n_records)) : 0.0;
        os << cell.setting << ',' << format_double(cell.rho) << ','
           << csv_escape(cell.method) << ',' << format_double(cell.q) << ','
           << cell.n_records << ',' << cell.n_errored << ','
           << format_double(cell.mean_power) << ','
           << format_double(cell.se_power * scale) << ','
           << format_double(cell.mean_fdp) << ','
           << format_double(cell.se_fdp * scale) << '\n';
    }
}

inline nlohmann::json results_json(const std::vector<ReplicationRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& rec : records) {
        nlohmann::json row{{"setting", rec.setting},
                           {"rho", rec.rho},
                           {"method", rec.method},
                           {"rep", rec.rep},
                           {"seed", rec.seed},
                           {"q", rec.q},
                           {"tp", rec.tp},
                           {"fp", rec.fp},
                           {"power", rec.power},
                           {"fdp", rec.fdp},
                           {"n_rejected", rec.n_rejected},
                           {"wall_ms", rec.wall_ms},
                           {"errored", rec.errored},
                           {"error", rec.error}};
        if (rec.tau_q)
            row["tau_q"] = *rec.tau_q;
        else
            row["tau_q"] = nullptr;
        arr.push_back(std::move(row));
    }
    return arr;
}

inline nlohmann::json summary_json(const std::vector<CellSummary>& cells) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& cell : cells) {
        const double scale =
            cell.n_records > 1 ? std::sqrt(static_cast<double>(cell.n_records)) : 0.0;
        arr.push_back({{"setting", cell.setting},
                       {"rho", cell.rho},
                       {"method", cell.method},
                       {"q", cell.q},
                       {"n_reps", cell.n_records},
                       {"n_errored", cell.n_errored},
                       {"mean_power", cell.mean_power},
                       {"sd_power", cell.se_power * scale},
                       {"mean_fdp", cell.mean_fdp},
                       {"sd_fdp", cell.se_fdp * scale}});
    }
    return arr;
}

}  // namespace mta
