#include "specmargin/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "specmargin/bounds.hpp"
#include "specmargin/errors.hpp"
#include "specmargin/io.hpp"
#include "specmargin/kernels.hpp"
#include "specmargin/pacbayes.hpp"
#include "specmargin/reports.hpp"
#include "specmargin/trainer.hpp"

namespace specmargin::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<double> positive_margin_percentile(const Vector& margins, double p) {
    if (!(p > 0.0 && p <= 100.0)) throw InvalidInput("percentile must be in (0, 100]");
    Vector positive;
    std::copy_if(margins.begin(), margins.end(), std::back_inserter(positive), [](double x) { return x > 0.0; });
    if (positive.empty()) return std::nullopt;
    std::sort(positive.begin(), positive.end());
    const double pos = p / 100.0 * static_cast<double>(positive.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, positive.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return positive[lo] + frac * (positive[hi] - positive[lo]);
}

namespace {

// Shortest round-trip decimal form.
std::string number(double x) { return json(x).dump(); }

std::vector<std::size_t> parse_architecture(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw InvalidInput("--arch: '" + item + "' is not a positive integer");
        }
    }
    if (out.size() < 2) throw InvalidInput("--arch needs at least two sizes, e.g. 2,16,16,2");
    return out;
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
    if (out_path.empty()) {
        out << text;
    } else {
        io::write_file(out_path, text);
    }
}

reports::InputFile describe_input(const std::string& path) {
    return {path, io::sha256_hex(io::read_file(path))};
}

struct GammaChoice {
    double gamma = 0.0;
    std::string source;
};

GammaChoice resolve_gamma(const std::optional<double>& gamma, const std::optional<double>& percentile,
                          const ReluNetwork& net, const LabeledDataset& data) {
    if (gamma && percentile) throw InvalidInput("use either --gamma or --gamma-percentile, not both");
    if (gamma) {
        if (!(*gamma > 0.0)) throw InvalidInput("--gamma must be positive");
        return {*gamma, "explicit"};
    }
    if (!percentile) throw InvalidInput("a margin is required: pass --gamma or --gamma-percentile");
    const auto value = positive_margin_percentile(kernels::margins(net, data), *percentile);
    if (!value || !(*value > 0.0)) {
        throw InvalidInput("--gamma-percentile " + number(*percentile) +
                           " resolves to gamma <= 0 (no positive training margins); try a different percentile or "
                           "pass --gamma");
    }
    return {*value, "percentile:" + number(*percentile)};
}

struct CommonFlags {
    std::uint64_t seed = 0;
    std::string out;
    int threads = 0;
    std::string format = "json";
};

void add_common(CLI::App* cmd, CommonFlags& flags, const std::string& format_default) {
    flags.format = format_default;
    cmd->add_option("--seed", flags.seed, "Master RNG seed");
    cmd->add_option("--out", flags.out, "Output path (stdout when omitted)");
    cmd->add_option("--threads", flags.threads, "OpenMP threads (0: SPECMARGIN_THREADS or runtime default)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--format", flags.format, "Output format")->check(CLI::IsMember({"json", "csv", "text"}));
}

reports::RunManifest make_manifest(const std::string& command, const CommonFlags& common) {
    reports::RunManifest m;
    m.command = command;
    m.seeds["seed"] = common.seed;
    m.flags["format"] = common.format;
    m.flags["out"] = common.out;
    m.timestamp = reports::utc_timestamp();
    return m;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
    CommonFlags common;
    std::string task = "blobs";
    std::size_t n = 2;
    std::size_t k = 2;
    std::size_t m = 500;
    double separation = 6.0;
    double cluster_std = 1.0;
    std::string arch;
    double lr = 0.1;
    std::size_t epochs = 100;
    std::size_t batch = 32;
    std::string loss = "cross_entropy";
    double init_scale = 1.0;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
    TaskSpec task;
    task.kind = parse_task_kind(f.task);
    task.n = f.n;
    task.k = f.k;
    task.m = f.m;
    task.separation = f.separation;
    task.cluster_std = f.cluster_std;
    task.seed = RngSeed{f.common.seed};

    TrainConfig cfg;
    cfg.architecture = f.arch.empty() ? std::vector<std::size_t>{f.n, 16, 16, f.k} : parse_architecture(f.arch);
    cfg.learning_rate = f.lr;
    cfg.epochs = f.epochs;
    cfg.batch_size = f.batch;
    cfg.loss = parse_loss_kind(f.loss);
    cfg.init_scale = f.init_scale;
    cfg.seed = RngSeed{f.common.seed};
    if (cfg.architecture.front() != task.n || cfg.architecture.back() != task.k) {
        throw InvalidInput("--arch must start with n=" + std::to_string(task.n) + " and end with k=" +
                           std::to_string(task.k));
    }

    const LabeledDataset data = generate_dataset(task);
    const TrainResult trained = train_sgd(data, cfg);

    const fs::path dir = f.common.out.empty() ? fs::path("run") : fs::path(f.common.out);
    const fs::path weights_path = dir / "weights.json";
    const fs::path dataset_path = dir / "dataset.json";
    const std::string weights_text = io::serialize_weights(trained.net);
    const std::string dataset_text = io::serialize_dataset(data);
    io::write_file(weights_path, weights_text);
    io::write_file(dataset_path, dataset_text);

    const Vector margins = kernels::margins(trained.net, data);
    const double error = margin_loss(trained.net, data, 0.0);
    const double final_loss = mean_loss(trained.net, data, cfg.loss);

    auto manifest = make_manifest("train", f.common);
    manifest.seeds["task"] = task.seed.value;
    manifest.seeds["train"] = cfg.seed.value;
    manifest.flags["task"] = f.task;
    manifest.flags["n"] = std::to_string(f.n);
    manifest.flags["k"] = std::to_string(f.k);
    manifest.flags["m"] = std::to_string(f.m);
    manifest.flags["separation"] = number(f.separation);
    manifest.flags["cluster_std"] = number(f.cluster_std);
    manifest.flags["arch"] = f.arch;
    manifest.flags["lr"] = number(f.lr);
    manifest.flags["epochs"] = std::to_string(f.epochs);
    manifest.flags["batch"] = std::to_string(f.batch);
    manifest.flags["loss"] = f.loss;
    manifest.flags["init_scale"] = number(f.init_scale);

    json percentiles = json::object();
    for (double p : {10.0, 25.0, 50.0, 75.0, 90.0}) {
        const auto v = positive_margin_percentile(margins, p);
        percentiles["p" + std::to_string(static_cast<int>(p))] = v ? json(*v) : json(nullptr);
    }

    json meta;
    meta["schema"] = "train_meta_v1";
    meta["manifest"] = reports::to_json(manifest);
    meta["task"] = {{"kind", to_string(task.kind)}, {"n", task.n},           {"k", task.k},
                    {"m", task.m},                   {"separation", task.separation},
                    {"cluster_std", task.cluster_std}, {"seed", task.seed.value}};
    meta["train"] = {{"architecture", cfg.architecture}, {"learning_rate", cfg.learning_rate},
                     {"epochs", cfg.epochs},             {"batch_size", cfg.batch_size},
                     {"loss", to_string(cfg.loss)},      {"init_scale", cfg.init_scale},
                     {"seed", cfg.seed.value},           {"deterministic", true},
                     {"parallel_gradients", false}};
    meta["final"] = {{"loss", final_loss}, {"error_0", error}, {"margin_percentiles", percentiles},
                     {"epoch_loss", trained.epoch_loss}};
    meta["artifacts"] = {{"weights", {{"path", weights_path.string()}, {"sha256", io::sha256_hex(weights_text)}}},
                         {"dataset", {{"path", dataset_path.string()}, {"sha256", io::sha256_hex(dataset_text)}}}};
    io::write_file(dir / "train_meta.json", reports::dump(meta));

    if (f.common.format == "json") {
        out << reports::dump(meta["final"]);
    } else {
        out << "wrote " << weights_path.string() << ", " << dataset_path.string() << ", "
            << (dir / "train_meta.json").string() << "\n";
        out << "training error L_0 = " << error << "  (final " << to_string(cfg.loss) << " loss " << final_loss
            << ")\n";
        out << "positive-margin percentiles:";
        for (const auto& [key, value] : percentiles.items()) {
            out << " " << key << "=" << (value.is_null() ? std::string("n/a") : number(value.get<double>()));
        }
        out << "\n";
    }
    return kExitOk;
}

// ---- bounds ----------------------------------------------------------------

struct AnalysisFlags {
    CommonFlags common;
    std::string weights;
    std::string dataset;
    std::optional<double> gamma;
    std::optional<double> gamma_percentile;
    double delta = 0.05;
};

void add_analysis(CLI::App* cmd, AnalysisFlags& f, const std::string& format_default) {
    add_common(cmd, f.common, format_default);
    cmd->add_option("--weights", f.weights, "Weight file (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--dataset", f.dataset, "Dataset file (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--gamma", f.gamma, "Margin gamma > 0");
    cmd->add_option("--gamma-percentile", f.gamma_percentile,
                    "Set gamma to this percentile of the positive training margins");
    cmd->add_option("--delta", f.delta, "Failure probability in (0,1)");
}

reports::RunManifest analysis_manifest(const std::string& command, const AnalysisFlags& f) {
    auto manifest = make_manifest(command, f.common);
    manifest.inputs["weights"] = describe_input(f.weights);
    manifest.inputs["dataset"] = describe_input(f.dataset);
    manifest.flags["delta"] = number(f.delta);
    manifest.flags["gamma"] = f.gamma ? number(*f.gamma) : "";
    manifest.flags["gamma_percentile"] = f.gamma_percentile ? number(*f.gamma_percentile) : "";
    return manifest;
}

int cmd_bounds(const AnalysisFlags& f, const std::string& mode, std::ostream& out) {
    const ReluNetwork net = io::load_weights(f.weights);
    const LabeledDataset data = io::load_dataset(f.dataset);
    check_compatible(net, data);
    const GammaChoice gamma = resolve_gamma(f.gamma, f.gamma_percentile, net, data);

    BoundConfig cfg;
    cfg.gamma = gamma.gamma;
    cfg.delta = f.delta;
    cfg.mode = parse_bound_mode(mode);
    const BoundReport report = compute_bound_report(net, data, cfg);

    auto manifest = analysis_manifest("bounds", f);
    manifest.flags["mode"] = mode;
    const json doc = reports::to_json(report, manifest, gamma.source);

    if (f.common.format == "json") {
        emit(reports::dump(doc), f.common.out, out);
    } else {
        const auto row = reports::comparison_row(doc, f.common.out.empty() ? f.weights : f.common.out);
        emit(f.common.format == "csv" ? reports::render_csv({row}) : reports::render_text({row}), f.common.out, out);
    }
    return kExitOk;
}

// ---- verify ----------------------------------------------------------------

struct VerifyFlags {
    AnalysisFlags analysis;
    std::size_t trials = 1000;
    std::optional<double> sigma;
    bool proof_sigma = false;
    std::size_t tail_trials = 2000;
};

int cmd_verify(const VerifyFlags& f, std::ostream& out, std::ostream& err) {
    if (f.sigma.has_value() == f.proof_sigma) throw InvalidInput("pass exactly one of --sigma or --proof-sigma");
    if (f.trials < 1) throw InvalidInput("--trials must be >= 1");
    if (f.sigma && !(*f.sigma >= 0.0)) throw InvalidInput("--sigma must be >= 0");

    const ReluNetwork original = io::load_weights(f.analysis.weights);
    const LabeledDataset data = io::load_dataset(f.analysis.dataset);
    check_compatible(original, data);
    const GammaChoice gamma = resolve_gamma(f.analysis.gamma, f.analysis.gamma_percentile, original, data);
    if (!(data.radius() > 0.0)) throw InvalidInput("dataset radius B must be positive");

    reports::VerificationReport report;
    ReluNetwork net = original;
    double sigma = 0.0;
    if (f.proof_sigma) {
        Rebalanced balanced = rebalance(original);
        net = std::move(balanced.net);
        report.rebalanced = true;
        report.beta = balanced.beta;
        sigma = theorem_sigma(gamma.gamma, data.radius(), net.depth(), net.width(), balanced.beta);
        report.sigma_source = "proof";
    } else {
        sigma = *f.sigma;
        report.sigma_source = "explicit";
    }

    const RngSeed seed{f.analysis.common.seed};
    report.lemma2 = lemma2_trials(net, data, sigma, f.trials, derive_seed(seed, 1));
    report.tail_h = net.width();
    report.tail_trials = std::max<std::size_t>(f.tail_trials, 100);
    if (sigma > 0.0) {
        const Vector grid = default_tail_grid(report.tail_h, sigma);
        report.tail = spectral_tail_check(report.tail_h, sigma, grid, report.tail_trials, derive_seed(seed, 2));
    }
    report.mc = mc_pacbayes(net, data, gamma.gamma, sigma, f.trials, derive_seed(seed, 3), f.analysis.delta);
    report.exit_status = report.lemma2.clean() ? kExitOk : kExitVerificationFailed;

    auto manifest = analysis_manifest("verify", f.analysis);
    manifest.flags["trials"] = std::to_string(f.trials);
    manifest.flags["sigma"] = f.sigma ? number(*f.sigma) : "";
    manifest.flags["proof_sigma"] = f.proof_sigma ? "true" : "false";
    manifest.flags["tail_trials"] = std::to_string(report.tail_trials);
    manifest.flags["gamma_resolved"] = number(gamma.gamma);
    const json doc = reports::to_json(report, manifest);

    if (f.analysis.common.format == "json") {
        emit(reports::dump(doc), f.analysis.common.out, out);
    } else {
        std::ostringstream text;
        text << "sigma = " << number(sigma) << " (" << report.sigma_source << ")\n"
             << "lemma2: " << report.lemma2.trials << " trials, " << report.lemma2.lemma_violations
             << " violations, " << report.lemma2.clipped << " clipped, max observed/bound "
             << report.lemma2.max_observed_to_bound << "\n"
             << "recursion: " << report.lemma2.recursion_violations << " step violations, "
             << report.lemma2.closed_form_violations << " closed-form violations\n"
             << "pac-bayes: survival " << report.mc.survival << " +/- " << report.mc.survival_std_error
             << (report.mc.precondition_met ? " (>= 1/2)" : " (< 1/2)") << ", mean perturbed loss "
             << report.mc.mean_perturbed_loss << "\n";
        if (!f.analysis.common.out.empty()) io::write_file(f.analysis.common.out, reports::dump(doc));
        out << text.str();
    }
    if (report.exit_status != kExitOk) err << "verification failed: perturbation bound or layer recursion violated\n";
    return report.exit_status;
}

// ---- report ----------------------------------------------------------------

struct ReportFlags {
    CommonFlags common;
    std::vector<std::string> inputs;
};

int cmd_report(const ReportFlags& f, std::ostream& out) {
    if (f.inputs.empty()) throw InvalidInput("report needs at least one bound report");
    std::vector<reports::ComparisonRow> rows;
    for (const auto& path : f.inputs) {
        json doc;
        const std::string text = io::read_file(path);
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            throw InvalidInput(path + ": malformed JSON: " + e.what());
        }
        rows.push_back(reports::comparison_row(doc, fs::path(path).stem().string()));
    }
    const std::string format = f.common.format == "json" ? "text" : f.common.format;
    emit(format == "csv" ? reports::render_csv(rows) : reports::render_text(rows), f.common.out, out);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Norm-based generalization bounds for ReLU networks", "specmargin"};
    app.require_subcommand(1);

    TrainFlags train;
    auto* train_cmd = app.add_subcommand("train", "Generate a synthetic task and train a ReLU network with SGD");
    add_common(train_cmd, train.common, "text");
    train_cmd->add_option("--task", train.task, "blobs | random_labels");
    train_cmd->add_option("--n", train.n, "Input dimension");
    train_cmd->add_option("--k", train.k, "Number of classes");
    train_cmd->add_option("--m", train.m, "Number of samples");
    train_cmd->add_option("--separation", train.separation, "Distance between adjacent cluster centers");
    train_cmd->add_option("--cluster-std", train.cluster_std, "Per-coordinate cluster noise");
    train_cmd->add_option("--arch", train.arch, "Layer sizes n,h1,...,k");
    train_cmd->add_option("--lr", train.lr, "Learning rate");
    train_cmd->add_option("--epochs", train.epochs, "Epochs");
    train_cmd->add_option("--batch", train.batch, "Mini-batch size");
    train_cmd->add_option("--loss", train.loss, "cross_entropy | hinge");
    train_cmd->add_option("--init-scale", train.init_scale, "Multiplier on the He initialization scale");

    AnalysisFlags bounds;
    std::string mode = "capacity";
    auto* bounds_cmd = app.add_subcommand("bounds", "Compute generalization bounds for a trained network");
    add_analysis(bounds_cmd, bounds, "json");
    bounds_cmd->add_option("--mode", mode, "capacity | traceable")->check(CLI::IsMember({"capacity", "traceable"}));

    VerifyFlags verify;
    auto* verify_cmd = app.add_subcommand("verify", "Empirically check the perturbation bound and PAC-Bayes quantities");
    add_analysis(verify_cmd, verify.analysis, "json");
    verify_cmd->add_option("--trials", verify.trials, "Perturbation trials");
    verify_cmd->add_option("--sigma", verify.sigma, "Perturbation standard deviation");
    verify_cmd->add_flag("--proof-sigma", verify.proof_sigma, "Use the proof-derived sigma (theorem_sigma at beta_tilde = beta)");
    verify_cmd->add_option("--tail-trials", verify.tail_trials, "Samples for the spectral tail check (>= 100)");

    ReportFlags report;
    auto* report_cmd = app.add_subcommand("report", "Compare bound reports side by side");
    add_common(report_cmd, report.common, "text");
    report_cmd->add_option("inputs", report.inputs, "bound_report_v1 files")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            configure_threads(train.common.threads);
            return cmd_train(train, out);
        }
        if (bounds_cmd->parsed()) {
            configure_threads(bounds.common.threads);
            return cmd_bounds(bounds, mode, out);
        }
        if (verify_cmd->parsed()) {
            configure_threads(verify.analysis.common.threads);
            return cmd_verify(verify, out, err);
        }
        if (report_cmd->parsed()) {
            configure_threads(report.common.threads);
            return cmd_report(report, out);
        }
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const TrainingDiverged& e) {
        err << "error: training diverged: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NotConverged& e) {
        err << "error: " << e.what() << " (last estimate " << e.last_estimate() << ")\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace specmargin::cli
