#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsvd/error.hpp"
#include "fedsvd/model.hpp"
#include "fedsvd/simulator.hpp"

namespace fedsvd {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kWeightsSchemaVersion = 1;

using json = nlohmann::json;

inline json to_json(const RepeatRecord& r) {
    return {
        {"seed", r.seed},
        {"per_client_seconds", r.per_client_seconds},
        {"coordinator_seconds", r.coordinator_seconds},
        {"training_time_seconds", r.derived.training_time_seconds},
        {"sum_cpu_seconds", r.derived.sum_cpu_seconds},
        {"watt_hours", r.derived.watt_hours},
        {"accuracy_test", r.accuracy_test},
        {"accuracy_train", r.accuracy_train},
    };
}

inline json to_json(const MetricsReport& r) {
    json repeats = json::array();
    for (const auto& rec : r.repeats) repeats.push_back(to_json(rec));
    return {
        {"schema_version", kReportSchemaVersion},
        {"num_clients", r.num_clients},
        {"partition", to_string(r.partition_mode)},
        {"lambda", r.lambda},
        {"device_watts", r.device_watts},
        {"per_client_seconds", r.per_client_seconds},
        {"coordinator_seconds", r.coordinator_seconds},
        {"training_time_seconds", r.training_time_seconds},
        {"sum_cpu_seconds", r.sum_cpu_seconds},
        {"watt_hours", r.watt_hours},
        {"accuracy_test", r.accuracy_test},
        {"accuracy_train", r.accuracy_train},
        {"repeats_aggregated", r.repeats_aggregated},
        {"repeats", repeats},
    };
}

// Reads the fields this version knows about; anything else is ignored.
inline MetricsReport report_from_json(const json& j) {
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() < 1)
        throw FormatError("report: missing or invalid schema_version");
    MetricsReport r;
    r.num_clients = j.at("num_clients").get<std::size_t>();
    r.partition_mode = partition_mode_from_string(j.at("partition").get<std::string>());
    r.lambda = j.at("lambda").get<double>();
    r.device_watts = j.at("device_watts").get<double>();
    r.per_client_seconds = j.at("per_client_seconds").get<std::vector<double>>();
    r.coordinator_seconds = j.at("coordinator_seconds").get<double>();
    r.training_time_seconds = j.at("training_time_seconds").get<double>();
    r.sum_cpu_seconds = j.at("sum_cpu_seconds").get<double>();
    r.watt_hours = j.at("watt_hours").get<double>();
    r.accuracy_test = j.at("accuracy_test").get<double>();
    r.accuracy_train = j.at("accuracy_train").get<double>();
    r.repeats_aggregated = j.at("repeats_aggregated").get<std::size_t>();
    for (const auto& jr : j.value("repeats", json::array())) {
        RepeatRecord rec;
        rec.seed = jr.at("seed").get<std::uint64_t>();
        rec.per_client_seconds = jr.at("per_client_seconds").get<std::vector<double>>();
        rec.coordinator_seconds = jr.at("coordinator_seconds").get<double>();
        rec.derived.training_time_seconds = jr.at("training_time_seconds").get<double>();
        rec.derived.sum_cpu_seconds = jr.at("sum_cpu_seconds").get<double>();
        rec.derived.watt_hours = jr.at("watt_hours").get<double>();
        rec.accuracy_test = jr.at("accuracy_test").get<double>();
        rec.accuracy_train = jr.at("accuracy_train").get<double>();
        r.repeats.push_back(std::move(rec));
    }
    return r;
}

// A trained model plus the class names its output columns stand for.
struct SavedModel {
    ModelWeights weights;
    std::vector<std::string> classes;
};

inline json to_json(const SavedModel& m) {
    json columns = json::array();
    for (Eigen::Index k = 0; k < m.weights.w.cols(); ++k) {
        std::vector<double> col(m.weights.w.col(k).begin(), m.weights.w.col(k).end());
        columns.push_back(col);
    }
    return {
        {"schema_version", kWeightsSchemaVersion},
        {"activation", to_string(m.weights.activation.kind)},
        {"epsilon_clip", m.weights.activation.epsilon_clip},
        {"lambda", m.weights.lambda_used},
        {"num_features_with_bias", m.weights.w.rows()},
        {"classes", m.classes},
        {"w", columns},
    };
}

inline SavedModel saved_model_from_json(const json& j) {
    if (!j.contains("schema_version")) throw FormatError("weights file: missing schema_version");
    SavedModel m;
    m.weights.activation.kind = activation_from_string(j.at("activation").get<std::string>());
    m.weights.activation.epsilon_clip = j.at("epsilon_clip").get<double>();
    m.weights.lambda_used = j.at("lambda").get<double>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    const auto nf = j.at("num_features_with_bias").get<Eigen::Index>();
    const auto& cols = j.at("w");
    if (cols.size() != m.classes.size())
        throw FormatError("weights file: " + std::to_string(cols.size()) + " weight columns for " +
                          std::to_string(m.classes.size()) + " classes");
    m.weights.w.resize(nf, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto col = cols[k].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(col.size()) != nf) throw FormatError("weights file: column length mismatch");
        for (Eigen::Index i = 0; i < nf; ++i) m.weights.w(i, static_cast<Eigen::Index>(k)) = col[static_cast<std::size_t>(i)];
    }
    return m;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

}  // namespace fedsvd
