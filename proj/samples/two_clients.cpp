// Two clients with disjoint halves of a toy dataset train a shared model in
// one round; the result is compared with fitting all the data in one place.

#include <iostream>
#include <random>

#include "fedsvd/fedsvd.hpp"

int main() {
    using namespace fedsvd;

    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 1.0);

    Dataset ds;
    ds.class_list = {"left", "right"};
    const int n = 400;
    ds.features.resize(2, n);
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        ds.features(0, i) = (label ? 4.0 : -4.0) + noise(rng);
        ds.features(1, i) = noise(rng);
        ds.labels.push_back(label);
    }

    const auto shards = partition(ds, {PartitionMode::label_sorted, 2, 0});
    const ActivationSpec act;

    AggregateState coordinator;
    for (const auto& shard : shards) {
        const ClientUpdate update = fit_client(with_bias(shard.features), encode_targets(shard.labels, 2), act);
        coordinator = incorporate(std::move(coordinator), update);
    }
    const ModelWeights federated = solve_weights(coordinator, 1e-3, act);

    const ClientUpdate all = fit_client(with_bias(ds.features), encode_targets(ds.labels, 2), act);
    const ModelWeights centralized = solve_weights(incorporate({}, all), 1e-3, act);

    std::cout << "federated weights:\n" << federated.w << "\n";
    std::cout << "max |federated - centralized| = " << (federated.w - centralized.w).cwiseAbs().maxCoeff() << "\n";
    std::cout << "training accuracy = " << evaluate_accuracy(ds, federated) << "\n";
    return 0;
}
