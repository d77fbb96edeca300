#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "specmargin/bounds.hpp"
#include "specmargin/pacbayes.hpp"

namespace specmargin::reports {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kBoundReportSchema = "bound_report_v1";
inline constexpr const char* kPacBayesReportSchema = "pacbayes_report_v1";

struct InputFile {
    std::string path;
    std::string sha256;
};

/// Provenance block embedded in every artifact. `timestamp` is excluded from
/// canonical comparisons.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> flags;
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, InputFile> inputs;
    std::string tool_version = kToolVersion;
    std::string timestamp;
};

std::string utc_timestamp();
nlohmann::json to_json(const RunManifest& manifest);

nlohmann::json to_json(const BoundReport& report, const RunManifest& manifest, const std::string& gamma_source);

struct VerificationReport {
    Lemma2Summary lemma2;
    std::vector<TailPoint> tail;   // empty when sigma = 0
    std::size_t tail_trials = 0;
    std::size_t tail_h = 0;
    PacBayesEstimate mc;
    std::string sigma_source;      // "explicit" or "proof"
    bool rebalanced = false;
    std::optional<double> beta;
    int exit_status = 0;
};

nlohmann::json to_json(const VerificationReport& report, const RunManifest& manifest);

/// Structural check of a bound_report_v1 document; returns one message per problem.
std::vector<std::string> validate_bound_report(const nlohmann::json& doc);

/// Pretty-printed, sorted keys, trailing newline.
std::string dump(const nlohmann::json& doc);
/// dump() with manifest.timestamp removed, for determinism checks.
std::string canonical_dump(nlohmann::json doc);

/// One row of the comparison table, read back from a bound report.
struct ComparisonRow {
    std::string name;
    std::string mode;
    double gamma = 0.0;
    double m = 0.0;
    double d = 0.0;
    double h = 0.0;
    double empirical_loss_gamma = 0.0;
    double theorem1 = 0.0;
    double bartlett_l1 = 0.0;
    double bartlett_l21 = 0.0;
    double vc = 0.0;
    double comp_our = 0.0;
    double comp_bar = 0.0;
    std::string regime;
    double r_our = 0.0;
    double r_bar = 0.0;
    std::string vc_verdict_theorem1;
    std::string vc_verdict_l1;

    friend bool operator==(const ComparisonRow&, const ComparisonRow&) = default;
};

/// Throws InvalidInput naming both versions when the schema tag is not bound_report_v1.
ComparisonRow comparison_row(const nlohmann::json& doc, const std::string& name);

std::string render_csv(const std::vector<ComparisonRow>& rows);
std::string render_text(const std::vector<ComparisonRow>& rows);
std::vector<ComparisonRow> parse_csv(const std::string& csv);

}  // namespace specmargin::reports
