#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fedsvd/dataset.hpp"
#include "fedsvd/error.hpp"
#include "fedsvd/model.hpp"

namespace fedsvd {

struct SimulationConfig {
    std::size_t num_clients = 1;
    PartitionMode partition_mode = PartitionMode::iid_shuffle;
    double lambda = 1e-3;
    std::uint64_t seed = 0;
    std::size_t repeats = 3;
    double device_watts = 65.0;
    double train_fraction = 0.70;
    bool parallel_clients = false;
    std::size_t workers = 0;  // 0: FEDSVD_WORKERS or hardware concurrency
    double target_low = 0.05;
    double target_high = 0.95;
    bool minmax_scale = false;
};

inline void validate(const SimulationConfig& cfg) {
    if (cfg.num_clients < 1) throw ArgumentError("number of clients must be >= 1");
    if (cfg.repeats < 1) throw ArgumentError("repeats must be >= 1");
    if (!(cfg.lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
    if (!(cfg.device_watts > 0.0)) throw ArgumentError("device watts must be > 0");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) throw ArgumentError("train fraction must lie in (0, 1)");
    if (!(cfg.target_low > 0.0 && cfg.target_low < cfg.target_high && cfg.target_high < 1.0))
        throw ArgumentError("target encoding needs 0 < low < high < 1");
}

inline std::size_t default_workers() {
    if (const char* env = std::getenv("FEDSVD_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

struct RoundTiming {
    std::vector<double> per_client_seconds;
    double coordinator_seconds = 0.0;
};

struct RoundResult {
    ModelWeights weights;
    RoundTiming timing;
};

// Training time, summed CPU time and energy derived from one timing record.
struct DerivedMetrics {
    double training_time_seconds = 0.0;  // slowest client + coordinator
    double sum_cpu_seconds = 0.0;        // all clients + coordinator
    double watt_hours = 0.0;             // watts * sum_cpu / 3600
};

inline DerivedMetrics derive_metrics(std::span<const double> per_client_seconds, double coordinator_seconds,
                                     double device_watts) {
    DerivedMetrics m;
    double slowest = 0.0;
    double total = 0.0;
    for (double t : per_client_seconds) {
        slowest = std::max(slowest, t);
        total += t;
    }
    m.training_time_seconds = slowest + coordinator_seconds;
    m.sum_cpu_seconds = total + coordinator_seconds;
    m.watt_hours = device_watts * m.sum_cpu_seconds / 3600.0;
    return m;
}

struct RepeatRecord {
    std::uint64_t seed = 0;
    std::vector<double> per_client_seconds;
    double coordinator_seconds = 0.0;
    DerivedMetrics derived;
    double accuracy_test = 0.0;
    double accuracy_train = 0.0;
};

// Averages over repeats. The top-level timing figures are derived from the
// mean per-client vector and mean coordinator time, so the three identities
// of derive_metrics hold exactly on the report itself.
struct MetricsReport {
    std::size_t num_clients = 0;
    PartitionMode partition_mode = PartitionMode::iid_shuffle;
    double lambda = 0.0;
    double device_watts = 0.0;
    std::vector<double> per_client_seconds;
    double coordinator_seconds = 0.0;
    double training_time_seconds = 0.0;
    double sum_cpu_seconds = 0.0;
    double watt_hours = 0.0;
    double accuracy_test = 0.0;
    double accuracy_train = 0.0;
    std::size_t repeats_aggregated = 0;
    std::vector<RepeatRecord> repeats;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs job(i) for i in [0, count) on up to `workers` threads.
template <class Job>
void run_indexed(std::size_t count, std::size_t workers, Job&& job) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = count;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline Matrix gather_with_bias(const Matrix& features, std::span<const std::size_t> indices) {
    Matrix x(features.rows() + 1, static_cast<Eigen::Index>(indices.size()));
    x.row(0).setOnes();
    for (std::size_t j = 0; j < indices.size(); ++j)
        x.col(static_cast<Eigen::Index>(j)).tail(features.rows()) = features.col(static_cast<Eigen::Index>(indices[j]));
    return x;
}

inline std::vector<int> gather_labels(std::span<const int> labels, std::span<const std::size_t> indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels[i]);
    return out;
}

}  // namespace detail

// One federated round: partition, fit every client, fold the updates at the
// coordinator in client order and solve. Each client span covers only its
// fit_client call; the coordinator span covers the fold plus the solve.
inline RoundResult run_round(const Dataset& train, const PartitionPlan& plan, const SimulationConfig& cfg) {
    check_consistent(train);
    const auto shards = partition_indices(train.labels, plan);
    const ActivationSpec act = activation_for_encoding(cfg.target_low, cfg.target_high);
    const std::size_t p = shards.size();

    std::vector<ClientUpdate> updates(p);
    RoundTiming timing;
    timing.per_client_seconds.assign(p, 0.0);

    const std::size_t workers = cfg.parallel_clients ? (cfg.workers ? cfg.workers : default_workers()) : 1;
    detail::run_indexed(p, workers, [&](std::size_t i) {
        const Matrix x = detail::gather_with_bias(train.features, shards[i]);
        const auto labels = detail::gather_labels(train.labels, shards[i]);
        const Matrix targets = encode_targets(labels, train.num_classes(), cfg.target_low, cfg.target_high);
        const auto start = detail::Clock::now();
        updates[i] = fit_client(x, targets, act);
        timing.per_client_seconds[i] = detail::seconds_since(start);
    });

    const auto start = detail::Clock::now();
    AggregateState state;
    for (auto& u : updates) state = incorporate(std::move(state), u);
    RoundResult out{solve_weights(state, cfg.lambda, act), {}};
    timing.coordinator_seconds = detail::seconds_since(start);
    out.timing = std::move(timing);
    return out;
}

inline double evaluate_accuracy(const Dataset& ds, const ModelWeights& w) {
    if (ds.num_samples() == 0) return 0.0;
    return accuracy(classify_indices(ds.features, w), ds.labels);
}

// Repeats split + round `cfg.repeats` times with seeds seed, seed+1, ... and
// reports the means. `first_weights`, when given, receives the model of repeat 0.
inline MetricsReport run_experiment(const Dataset& ds, const SimulationConfig& cfg,
                                    ModelWeights* first_weights = nullptr) {
    validate(cfg);
    check_consistent(ds);

    MetricsReport report;
    report.num_clients = cfg.num_clients;
    report.partition_mode = cfg.partition_mode;
    report.lambda = cfg.lambda;
    report.device_watts = cfg.device_watts;
    report.per_client_seconds.assign(cfg.num_clients, 0.0);

    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed = cfg.seed + r;
        auto [train, test] = split_train_test(ds, cfg.train_fraction, seed);
        if (cfg.minmax_scale) {
            const auto scaler = MinMaxScaler::fit(train.features);
            train.features = scaler.apply(train.features);
            test.features = scaler.apply(test.features);
        }
        const RoundResult round = run_round(train, {cfg.partition_mode, cfg.num_clients, seed}, cfg);
        if (r == 0 && first_weights != nullptr) *first_weights = round.weights;

        RepeatRecord rec;
        rec.seed = seed;
        rec.per_client_seconds = round.timing.per_client_seconds;
        rec.coordinator_seconds = round.timing.coordinator_seconds;
        rec.derived = derive_metrics(rec.per_client_seconds, rec.coordinator_seconds, cfg.device_watts);
        rec.accuracy_test = evaluate_accuracy(test, round.weights);
        rec.accuracy_train = evaluate_accuracy(train, round.weights);
        report.repeats.push_back(std::move(rec));
    }

    const double n = static_cast<double>(report.repeats.size());
    for (const auto& rec : report.repeats) {
        for (std::size_t i = 0; i < rec.per_client_seconds.size(); ++i) report.per_client_seconds[i] += rec.per_client_seconds[i];
        report.coordinator_seconds += rec.coordinator_seconds;
        report.accuracy_test += rec.accuracy_test;
        report.accuracy_train += rec.accuracy_train;
    }
    for (double& t : report.per_client_seconds) t /= n;
    report.coordinator_seconds /= n;
    report.accuracy_test /= n;
    report.accuracy_train /= n;
    report.repeats_aggregated = report.repeats.size();

    const auto d = derive_metrics(report.per_client_seconds, report.coordinator_seconds, cfg.device_watts);
    report.training_time_seconds = d.training_time_seconds;
    report.sum_cpu_seconds = d.sum_cpu_seconds;
    report.watt_hours = d.watt_hours;
    return report;
}

inline std::size_t train_size_for(std::size_t n, double train_fraction) {
    return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
}

// One report per client count, in input order. All counts are validated
// against the training-set size before any work starts.
inline std::vector<MetricsReport> sweep_clients(const Dataset& ds, const SimulationConfig& cfg,
                                                std::span<const std::size_t> client_counts) {
    validate(cfg);
    if (client_counts.empty()) throw ArgumentError("sweep: no client counts given");
    const std::size_t n_train = train_size_for(ds.num_samples(), cfg.train_fraction);
    for (auto c : client_counts) {
        if (c < 1) throw ArgumentError("sweep: client count must be >= 1");
        if (c > n_train)
            throw ArgumentError("sweep: " + std::to_string(c) + " clients exceeds the " + std::to_string(n_train) +
                                " training samples");
    }
    std::vector<MetricsReport> out;
    out.reserve(client_counts.size());
    for (auto c : client_counts) {
        SimulationConfig run = cfg;
        run.num_clients = c;
        out.push_back(run_experiment(ds, run));
    }
    return out;
}

inline void write_sweep_csv(std::ostream& out, std::span<const MetricsReport> reports) {
    out << "clients,accuracy_test,training_time_s,sum_cpu_s,watt_hours\n";
    out.precision(17);
    for (const auto& r : reports)
        out << r.num_clients << ',' << r.accuracy_test << ',' << r.training_time_seconds << ',' << r.sum_cpu_seconds
            << ',' << r.watt_hours << '\n';
}

}  // namespace fedsvd
