#include "specmargin/reports.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "specmargin/errors.hpp"

namespace specmargin::reports {

using nlohmann::json;

namespace {

json layer_norms_json(const NormProfile& p) {
    json layers = json::array();
    for (const auto& n : p.layers) {
        layers.push_back({{"spectral", n.spectral}, {"frobenius", n.frobenius}, {"l1", n.l1}, {"l21", n.l21}});
    }
    return layers;
}

std::string fmt_number(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string vc_verdict(double ratio) { return ratio < 1.0 ? "may-beat-vc" : "no-vc-improvement"; }

const std::vector<std::string>& csv_header() {
    static const std::vector<std::string> header = {
        "name",     "mode",     "gamma",  "m",      "d",     "h",     "empirical_loss_gamma",
        "theorem1", "bartlett_l1", "bartlett_l21", "vc", "comp_our", "comp_bar", "regime",
        "r_our",    "r_bar",    "vc_verdict_theorem1", "vc_verdict_l1"};
    return header;
}

std::vector<std::string> row_cells(const ComparisonRow& r, bool exact) {
    auto num = [exact](double x) {
        if (exact) return fmt_number(x);
        std::ostringstream ss;
        ss << std::setprecision(6) << x;
        return ss.str();
    };
    return {r.name,        r.mode,        num(r.gamma),   num(r.m),        num(r.d),        num(r.h),
            num(r.empirical_loss_gamma), num(r.theorem1), num(r.bartlett_l1), num(r.bartlett_l21), num(r.vc),
            num(r.comp_our), num(r.comp_bar), r.regime, num(r.r_our), num(r.r_bar), r.vc_verdict_theorem1,
            r.vc_verdict_l1};
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(cell);
    return out;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json to_json(const RunManifest& manifest) {
    json inputs = json::object();
    for (const auto& [role, file] : manifest.inputs) inputs[role] = {{"path", file.path}, {"sha256", file.sha256}};
    return {{"command", manifest.command},
            {"flags", manifest.flags},
            {"seeds", manifest.seeds},
            {"inputs", inputs},
            {"tool_version", manifest.tool_version},
            {"timestamp", manifest.timestamp}};
}

json to_json(const BoundReport& r, const RunManifest& manifest, const std::string& gamma_source) {
    json doc;
    doc["schema"] = kBoundReportSchema;
    doc["manifest"] = to_json(manifest);
    doc["config"] = {{"gamma", r.config.gamma},
                     {"gamma_source", gamma_source},
                     {"delta", r.config.delta},
                     {"m", r.m},
                     {"mode", to_string(r.config.mode)}};
    doc["network"] = {{"d", r.d}, {"h", r.h}, {"n", r.n}, {"k", r.k}, {"B", r.radius}};
    doc["norms"] = {{"layers", layer_norms_json(r.norms)},
                    {"spectral_product", r.norms.spectral_product},
                    {"beta", r.norms.beta},
                    {"frob_ratio_sum", r.norms.frob_ratio_sum},
                    {"l1_ratio_term", r.norms.l1_ratio_term},
                    {"l21_ratio_term", r.norms.l21_ratio_term}};
    doc["empirical"] = {{"margin_loss_gamma", r.empirical_loss_gamma}, {"error_0", r.empirical_error}};
    doc["bounds"] = {{"theorem1", r.theorem1}, {"bartlett_l1", r.bartlett_l1}, {"bartlett_l21", r.bartlett_l21},
                     {"vc", r.vc}};
    doc["excess"] = {{"theorem1", r.theorem1_excess}, {"bartlett_l1", r.bartlett_l1_excess},
                     {"bartlett_l21", r.bartlett_l21_excess}, {"vc", r.vc_excess}};
    doc["log_terms"] = {{"statement_ln_dm_over_delta", r.log_term_statement},
                        {"proof_ln_6m_cover_over_delta", r.log_term_proof},
                        {"ln_dh_clamped", r.log_clamped}};
    doc["regime"] = {{"comp_our", r.regime.comp_our}, {"comp_bar", r.regime.comp_bar},
                     {"label", regime_label(r.regime)}};
    doc["vc_condition"] = {{"r_our", r.vc_ratios.r_our}, {"r_bar", r.vc_ratios.r_bar},
                           {"verdict_theorem1", vc_verdict(r.vc_ratios.r_our)},
                           {"verdict_l1", vc_verdict(r.vc_ratios.r_bar)}};
    if (r.traceable) {
        const auto& t = *r.traceable;
        doc["traceable"] = {{"beta", t.beta},
                            {"beta_tilde", t.beta_tilde},
                            {"beta_in_range", t.beta_in_range},
                            {"beta_lower", t.beta_lower},
                            {"beta_upper", t.beta_upper},
                            {"sigma", t.sigma},
                            {"kl", t.kl},
                            {"cover_size", t.cover_size},
                            {"nominal_cover_size", t.nominal_cover_size}};
    }
    doc["caveats"] = r.caveats;
    return doc;
}

json to_json(const VerificationReport& r, const RunManifest& manifest) {
    json doc;
    doc["schema"] = kPacBayesReportSchema;
    doc["manifest"] = to_json(manifest);

    json lemma_trials = json::array();
    for (const auto& t : r.lemma2.per_trial) {
        lemma_trials.push_back({{"index", t.index},
                                {"seed", t.seed.value},
                                {"clipped", t.clipped},
                                {"observed", t.observed},
                                {"bound", t.bound},
                                {"holds", t.holds},
                                {"recursion_failures", t.recursion_failures}});
    }
    doc["lemma2"] = {{"sigma", r.lemma2.sigma},
                     {"sigma_source", r.sigma_source},
                     {"rebalanced", r.rebalanced},
                     {"trials", r.lemma2.trials},
                     {"clipped_trials", r.lemma2.clipped},
                     {"lemma_violations", r.lemma2.lemma_violations},
                     {"recursion_violations", r.lemma2.recursion_violations},
                     {"closed_form_violations", r.lemma2.closed_form_violations},
                     {"max_observed_to_bound", r.lemma2.max_observed_to_bound},
                     {"per_trial", std::move(lemma_trials)}};
    if (r.beta) doc["lemma2"]["beta"] = *r.beta;

    json tail = json::array();
    for (const auto& p : r.tail) {
        tail.push_back({{"t", p.t}, {"frequency", p.frequency}, {"bound", p.bound}, {"std_error", p.std_error},
                        {"within", p.within}});
    }
    doc["spectral_tail"] = {{"h", r.tail_h}, {"trials", r.tail_trials}, {"skipped", r.tail.empty()},
                            {"points", std::move(tail)}};

    const auto& mc = r.mc;
    json mc_trials = json::array();
    for (const auto& t : mc.per_trial) {
        mc_trials.push_back({{"seed", t.seed.value},
                             {"max_change_l2", t.max_change_l2},
                             {"max_change_linf", t.max_change_linf},
                             {"perturbed_loss_half_gamma", t.perturbed_loss_half_gamma},
                             {"survived", t.survived}});
    }
    doc["pacbayes"] = {{"sigma", mc.sigma},
                       {"gamma", mc.gamma},
                       {"delta", mc.delta},
                       {"trials", mc.trials},
                       {"m", mc.m},
                       {"empirical_loss_gamma", mc.empirical_loss_gamma},
                       {"empirical_error", mc.empirical_error},
                       {"mean_perturbed_loss_half_gamma", mc.mean_perturbed_loss},
                       {"survived", mc.survived},
                       {"survival", mc.survival},
                       {"survival_std_error", mc.survival_std_error},
                       {"precondition_met", mc.precondition_met},
                       {"survival_estimator", "dataset-max proxy"},
                       {"kl", mc.kl ? json(*mc.kl) : json(nullptr)},
                       {"bound", mc.bound ? json(*mc.bound) : json(nullptr)},
                       {"per_trial", std::move(mc_trials)}};
    doc["exit_status"] = r.exit_status;
    return doc;
}

std::vector<std::string> validate_bound_report(const json& doc) {
    std::vector<std::string> problems;
    auto number_at = [&](const json::json_pointer& ptr, bool nonnegative) {
        if (!doc.contains(ptr)) {
            problems.push_back(ptr.to_string() + ": missing");
            return;
        }
        const json& v = doc.at(ptr);
        if (!v.is_number()) {
            problems.push_back(ptr.to_string() + ": not a number");
            return;
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) problems.push_back(ptr.to_string() + ": not finite");
        if (nonnegative && x < 0.0) problems.push_back(ptr.to_string() + ": negative");
    };
    auto string_at = [&](const json::json_pointer& ptr) {
        if (!doc.contains(ptr) || !doc.at(ptr).is_string()) problems.push_back(ptr.to_string() + ": missing string");
    };

    if (!doc.is_object()) return {"document is not an object"};
    if (!doc.contains("schema") || doc["schema"] != kBoundReportSchema) problems.emplace_back("/schema: expected bound_report_v1");
    for (const char* key : {"/manifest/command", "/manifest/tool_version", "/manifest/timestamp", "/config/mode",
                            "/config/gamma_source", "/regime/label", "/vc_condition/verdict_theorem1",
                            "/vc_condition/verdict_l1"}) {
        string_at(json::json_pointer(key));
    }
    for (const char* key : {"/config/gamma", "/config/delta", "/config/m", "/network/d", "/network/h", "/network/n",
                            "/network/k", "/network/B", "/norms/spectral_product", "/norms/beta",
                            "/norms/frob_ratio_sum", "/norms/l1_ratio_term", "/norms/l21_ratio_term",
                            "/empirical/margin_loss_gamma", "/empirical/error_0", "/bounds/theorem1",
                            "/bounds/bartlett_l1", "/bounds/bartlett_l21", "/bounds/vc", "/regime/comp_our",
                            "/regime/comp_bar", "/vc_condition/r_our", "/vc_condition/r_bar"}) {
        number_at(json::json_pointer(key), true);
    }
    if (doc.contains("empirical")) {
        for (const char* key : {"margin_loss_gamma", "error_0"}) {
            const auto& v = doc["empirical"].value(key, json());
            if (v.is_number() && v.get<double>() > 1.0) problems.push_back(std::string("/empirical/") + key + ": above 1");
        }
    }
    if (!doc.contains(json::json_pointer("/norms/layers")) || !doc.at(json::json_pointer("/norms/layers")).is_array()) {
        problems.emplace_back("/norms/layers: missing array");
    }
    if (doc.contains(json::json_pointer("/config/mode")) && doc.at(json::json_pointer("/config/mode")) == "traceable") {
        for (const char* key : {"/traceable/beta", "/traceable/beta_tilde", "/traceable/sigma", "/traceable/kl",
                                "/traceable/cover_size", "/traceable/nominal_cover_size"}) {
            number_at(json::json_pointer(key), true);
        }
    }
    return problems;
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

std::string canonical_dump(json doc) {
    if (doc.contains("manifest") && doc["manifest"].is_object()) doc["manifest"].erase("timestamp");
    return dump(doc);
}

ComparisonRow comparison_row(const json& doc, const std::string& name) {
    std::string schema = "<none>";
    if (doc.is_object() && doc.contains("schema")) schema = doc["schema"].is_string() ? doc["schema"].get<std::string>() : doc["schema"].dump();
    if (schema != kBoundReportSchema) {
        throw InvalidInput("report '" + name + "' has schema version '" + schema + "', expected '" +
                           kBoundReportSchema + "'");
    }
    if (const auto problems = validate_bound_report(doc); !problems.empty()) {
        throw InvalidInput("report '" + name + "' is malformed: " + problems.front());
    }
    ComparisonRow r;
    r.name = name;
    r.mode = doc["config"]["mode"].get<std::string>();
    r.gamma = doc["config"]["gamma"].get<double>();
    r.m = doc["config"]["m"].get<double>();
    r.d = doc["network"]["d"].get<double>();
    r.h = doc["network"]["h"].get<double>();
    r.empirical_loss_gamma = doc["empirical"]["margin_loss_gamma"].get<double>();
    r.theorem1 = doc["bounds"]["theorem1"].get<double>();
    r.bartlett_l1 = doc["bounds"]["bartlett_l1"].get<double>();
    r.bartlett_l21 = doc["bounds"]["bartlett_l21"].get<double>();
    r.vc = doc["bounds"]["vc"].get<double>();
    r.comp_our = doc["regime"]["comp_our"].get<double>();
    r.comp_bar = doc["regime"]["comp_bar"].get<double>();
    r.regime = doc["regime"]["label"].get<std::string>();
    r.r_our = doc["vc_condition"]["r_our"].get<double>();
    r.r_bar = doc["vc_condition"]["r_bar"].get<double>();
    r.vc_verdict_theorem1 = doc["vc_condition"]["verdict_theorem1"].get<std::string>();
    r.vc_verdict_l1 = doc["vc_condition"]["verdict_l1"].get<std::string>();
    return r;
}

std::string render_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    const auto& header = csv_header();
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& r : rows) {
        const auto cells = row_cells(r, true);
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_escape(cells[i]);
        out << "\n";
    }
    return out.str();
}

std::string render_text(const std::vector<ComparisonRow>& rows) {
    const auto& header = csv_header();
    std::vector<std::vector<std::string>> table{header};
    for (const auto& r : rows) table.push_back(row_cells(r, false));
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : table) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::ostringstream out;
    for (const auto& line : table) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            out << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << line[i];
        }
        out << "\n";
    }
    return out.str();
}

std::vector<ComparisonRow> parse_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("empty CSV");
    if (split_csv_line(line) != csv_header()) throw InvalidInput("unexpected CSV header");
    std::vector<ComparisonRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = split_csv_line(line);
        if (c.size() != csv_header().size()) throw InvalidInput("CSV row has wrong number of cells");
        ComparisonRow r;
        r.name = c[0];
        r.mode = c[1];
        r.gamma = std::stod(c[2]);
        r.m = std::stod(c[3]);
        r.d = std::stod(c[4]);
        r.h = std::stod(c[5]);
        r.empirical_loss_gamma = std::stod(c[6]);
        r.theorem1 = std::stod(c[7]);
        r.bartlett_l1 = std::stod(c[8]);
        r.bartlett_l21 = std::stod(c[9]);
        r.vc = std::stod(c[10]);
        r.comp_our = std::stod(c[11]);
        r.comp_bar = std::stod(c[12]);
        r.regime = c[13];
        r.r_our = std::stod(c[14]);
        r.r_bar = std::stod(c[15]);
        r.vc_verdict_theorem1 = c[16];
        r.vc_verdict_l1 = c[17];
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace specmargin::reports
