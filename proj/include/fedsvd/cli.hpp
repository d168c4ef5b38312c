#pragma once

// Command layer behind the `fedsvd` executable.

#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsvd/dataset.hpp"
#include "fedsvd/error.hpp"
#include "fedsvd/model.hpp"
#include "fedsvd/report.hpp"
#include "fedsvd/simulator.hpp"
#include "fedsvd/wire.hpp"

namespace fedsvd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Raised for flag combinations that are syntactically fine but invalid.
class UsageError : public Error {
public:
    using Error::Error;
};

// Parsed flags for all subcommands; each command reads the subset it owns.
struct RunConfig {
    std::string data;
    std::string label_column = "-1";
    bool header = false;
    std::size_t replicate = 1;
    bool scale = false;

    SimulationConfig sim;
    std::string partition = "iid";
    long long clients = 1;
    std::string counts;

    std::string out;
    std::string csv;
    std::string weights_out;
    std::string weights;

    std::string listen = "127.0.0.1:7878";
    std::string connect = "127.0.0.1:7878";
    std::string classes;
};

inline LabelColumn parse_label_column(const std::string& s) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size()) return v;
    return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline std::vector<std::size_t> parse_counts(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(s)) {
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size() || v < 1)
            throw UsageError("--counts: '" + item + "' is not a positive integer");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw UsageError("--counts: no client counts given");
    return out;
}

inline Dataset load_training_data(const RunConfig& cfg) {
    Dataset ds = load_csv(cfg.data, parse_label_column(cfg.label_column), cfg.header);
    if (!cfg.classes.empty()) ds = with_class_list(std::move(ds), split_list(cfg.classes));
    return replicate(ds, cfg.replicate);
}

inline void finalize_sim_config(RunConfig& cfg) {
    if (cfg.clients < 1) throw UsageError("--clients must be >= 1, got " + std::to_string(cfg.clients));
    cfg.sim.num_clients = static_cast<std::size_t>(cfg.clients);
    cfg.sim.partition_mode = partition_mode_from_string(cfg.partition);
    cfg.sim.minmax_scale = cfg.scale;
    if (cfg.replicate < 1) throw UsageError("--replicate must be >= 1");
    try {
        validate(cfg.sim);
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
}

inline int cmd_simulate(RunConfig cfg, std::ostream& out) {
    finalize_sim_config(cfg);
    const Dataset ds = load_training_data(cfg);
    const std::size_t n_train = train_size_for(ds.num_samples(), cfg.sim.train_fraction);
    if (cfg.sim.num_clients > n_train)
        throw UsageError(std::to_string(cfg.sim.num_clients) + " clients exceeds the " + std::to_string(n_train) +
                         " training samples");

    if (cfg.scale && !cfg.weights_out.empty())
        throw UsageError("--weights-out cannot be combined with --scale (the scaler is not saved)");

    // The saved model is the one from the first repeat.
    ModelWeights first;
    const MetricsReport report = run_experiment(ds, cfg.sim, &first);
    if (!cfg.out.empty()) write_json_file(cfg.out, to_json(report));
    if (!cfg.weights_out.empty()) write_json_file(cfg.weights_out, to_json(SavedModel{first, ds.class_list}));
    out << "clients=" << report.num_clients << " partition=" << to_string(report.partition_mode)
        << " accuracy_test=" << report.accuracy_test << " training_time_s=" << report.training_time_seconds
        << " watt_hours=" << report.watt_hours << '\n';
    return kExitOk;
}

inline int cmd_sweep(RunConfig cfg, std::ostream& out) {
    finalize_sim_config(cfg);
    const auto counts = parse_counts(cfg.counts);
    const Dataset ds = load_training_data(cfg);
    const std::size_t n_train = train_size_for(ds.num_samples(), cfg.sim.train_fraction);
    for (auto c : counts)
        if (c > n_train)
            throw UsageError("--counts: " + std::to_string(c) + " clients exceeds the " + std::to_string(n_train) +
                             " training samples");

    const auto reports = sweep_clients(ds, cfg.sim, counts);
    if (!cfg.csv.empty()) {
        std::ofstream f(cfg.csv);
        if (!f) throw IngestError("cannot write '" + cfg.csv + "'");
        write_sweep_csv(f, reports);
    } else {
        write_sweep_csv(out, reports);
    }
    if (!cfg.out.empty()) {
        json all = json::array();
        for (const auto& r : reports) all.push_back(to_json(r));
        write_json_file(cfg.out, {{"schema_version", kReportSchemaVersion}, {"reports", all}});
    }
    return kExitOk;
}

inline int cmd_serve(RunConfig cfg, std::ostream& out) {
    if (cfg.clients < 1) throw UsageError("--clients must be >= 1, got " + std::to_string(cfg.clients));
    if (!(cfg.sim.lambda >= 0.0)) throw UsageError("--lambda must be >= 0");
    const ActivationSpec act = activation_for_encoding(cfg.sim.target_low, cfg.sim.target_high);
    wire::Coordinator coordinator(cfg.listen, static_cast<std::size_t>(cfg.clients), cfg.sim.lambda, act);
    out << "listening on port " << coordinator.port() << std::endl;
    const ModelWeights w = coordinator.run();
    if (!cfg.weights_out.empty()) {
        std::vector<std::string> classes = split_list(cfg.classes);
        std::sort(classes.begin(), classes.end());
        if (classes.empty())
            for (Eigen::Index k = 0; k < w.num_classes(); ++k) classes.push_back(std::to_string(k));
        if (static_cast<Eigen::Index>(classes.size()) != w.num_classes())
            throw ShapeError("--classes lists " + std::to_string(classes.size()) + " names for " +
                             std::to_string(w.num_classes()) + " outputs");
        write_json_file(cfg.weights_out, to_json(SavedModel{w, classes}));
    }
    out << "round complete: " << coordinator.updates_accepted() << " updates, " << w.num_features() << "x"
        << w.num_classes() << " weights" << '\n';
    return kExitOk;
}

inline int cmd_join(RunConfig cfg, std::ostream& out) {
    Dataset shard = load_csv(cfg.data, parse_label_column(cfg.label_column), cfg.header);
    if (!cfg.classes.empty()) shard = with_class_list(std::move(shard), split_list(cfg.classes));
    wire::TransferStats stats;
    const ModelWeights w = wire::run_client_agent(cfg.connect, shard, {cfg.sim.target_low, cfg.sim.target_high}, &stats);
    if (!cfg.weights_out.empty()) write_json_file(cfg.weights_out, to_json(SavedModel{w, shard.class_list}));
    out << "received " << w.num_features() << "x" << w.num_classes() << " weights; sent " << stats.bytes_sent
        << " bytes" << '\n';
    return kExitOk;
}

namespace detail {

inline std::size_t csv_column_count(const std::string& path, bool header) {
    fedsvd::detail::LineSource src(path);
    std::string line;
    std::vector<std::string_view> cells;
    bool skipped_header = !header;
    while (src.next(line)) {
        if (fedsvd::detail::blank(line)) continue;
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        fedsvd::detail::split_cells(line, cells);
        return cells.size();
    }
    throw IngestError("'" + path + "' contains no data rows");
}

}  // namespace detail

// Labels are expected when the file has one column more than the model's
// feature count (or --label-column is given explicitly).
inline int cmd_predict(RunConfig cfg, bool label_column_given, std::ostream& out) {
    const SavedModel model = saved_model_from_json(read_json_file(cfg.weights));
    const auto nf = static_cast<std::size_t>(model.weights.num_features() - 1);
    const std::size_t ncols = detail::csv_column_count(cfg.data, cfg.header);
    const bool labeled = label_column_given || ncols == nf + 1;

    Dataset ds = load_csv(cfg.data, labeled ? std::optional<LabelColumn>(parse_label_column(cfg.label_column)) : std::nullopt,
                          cfg.header);
    const auto predicted = classify(ds.features, model.weights, model.classes);

    std::ofstream file;
    std::ostream* sink = &out;
    if (!cfg.out.empty()) {
        file.open(cfg.out);
        if (!file) throw IngestError("cannot write '" + cfg.out + "'");
        sink = &file;
    }
    for (const auto& p : predicted) *sink << p << '\n';

    if (labeled) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < predicted.size(); ++i)
            hits += predicted[i] == ds.class_list[static_cast<std::size_t>(ds.labels[i])];
        const double acc = predicted.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(predicted.size());
        out << "accuracy=" << acc << '\n';
    }
    return kExitOk;
}

// Entry point; returns the process exit code (0 ok, 1 runtime error, 2 usage).
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"One-round federated training of one-layer networks via merged SVD factors"};
    app.require_subcommand(1);
    RunConfig cfg;
    out.precision(10);

    auto add_data = [&](CLI::App* sub, bool required) {
        auto* opt = sub->add_option("--data", cfg.data, "CSV dataset (.gz accepted)");
        if (required) opt->required();
        sub->add_option("--label-column", cfg.label_column, "Label column index (negative from end) or header name")
            ->capture_default_str();
        sub->add_flag("--header", cfg.header, "First non-empty line is a header");
    };
    auto add_encoding = [&](CLI::App* sub) {
        sub->add_option("--target-low", cfg.sim.target_low, "Encoded value for the off classes")->capture_default_str();
        sub->add_option("--target-high", cfg.sim.target_high, "Encoded value for the true class")->capture_default_str();
    };
    auto add_sim = [&](CLI::App* sub) {
        add_data(sub, true);
        add_encoding(sub);
        sub->add_option("--partition", cfg.partition, "iid | label-sorted")->capture_default_str();
        sub->add_option("--lambda", cfg.sim.lambda, "Ridge regularization")->capture_default_str();
        sub->add_option("--watts", cfg.sim.device_watts, "Device power draw in watts")->capture_default_str();
        sub->add_option("--seed", cfg.sim.seed, "Base seed; repeat r uses seed + r")->capture_default_str();
        sub->add_option("--repeats", cfg.sim.repeats, "Repetitions averaged in the report")->capture_default_str();
        sub->add_option("--train-fraction", cfg.sim.train_fraction, "Training share of the split")->capture_default_str();
        sub->add_flag("--parallel", cfg.sim.parallel_clients, "Fit clients concurrently");
        sub->add_option("--workers", cfg.sim.workers, "Worker threads (default: FEDSVD_WORKERS or core count)");
        sub->add_option("--replicate", cfg.replicate, "Stack k copies of the dataset")->capture_default_str();
        sub->add_flag("--scale", cfg.scale, "Min-max scale features using training statistics");
        sub->add_option("--classes", cfg.classes, "Comma-separated class list overriding the one found in the data");
    };

    auto* simulate = app.add_subcommand("simulate", "Run a federated round over virtual clients and report metrics");
    add_sim(simulate);
    simulate->add_option("--clients", cfg.clients, "Number of clients")->capture_default_str();
    simulate->add_option("--out", cfg.out, "Write the metrics report (JSON) here");
    simulate->add_option("--weights-out", cfg.weights_out, "Write the trained model (JSON) here");

    auto* sweep = app.add_subcommand("sweep", "Repeat the simulation for several client counts");
    add_sim(sweep);
    sweep->add_option("--counts", cfg.counts, "Comma-separated client counts")->required();
    sweep->add_option("--csv", cfg.csv, "Write the sweep CSV here (default: stdout)");
    sweep->add_option("--out", cfg.out, "Also write every report (JSON) here");

    auto* serve = app.add_subcommand("serve", "Coordinate one networked round");
    serve->add_option("--listen", cfg.listen, "host:port to listen on")->capture_default_str();
    serve->add_option("--clients", cfg.clients, "Number of updates to wait for")->required();
    serve->add_option("--lambda", cfg.sim.lambda, "Ridge regularization")->capture_default_str();
    serve->add_option("--classes", cfg.classes, "Class names for the saved model");
    serve->add_option("--weights-out", cfg.weights_out, "Write the solved model (JSON) here");
    add_encoding(serve);

    auto* join = app.add_subcommand("join", "Fit a local shard and take part in a networked round");
    add_data(join, true);
    add_encoding(join);
    join->add_option("--connect", cfg.connect, "Coordinator host:port")->capture_default_str();
    join->add_option("--classes", cfg.classes, "Comma-separated class list shared by all clients");
    join->add_option("--weights-out", cfg.weights_out, "Write the received model (JSON) here");

    auto* predict = app.add_subcommand("predict", "Classify samples with a saved model");
    add_data(predict, true);
    predict->add_option("--weights", cfg.weights, "Model file written by simulate, serve or join")->required();
    predict->add_option("--out", cfg.out, "Write predicted labels here (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(cfg, out);
        if (sweep->parsed()) return cmd_sweep(cfg, out);
        if (serve->parsed()) return cmd_serve(cfg, out);
        if (join->parsed()) return cmd_join(cfg, out);
        if (predict->parsed()) return cmd_predict(cfg, predict->count("--label-column") > 0, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace fedsvd::cli
