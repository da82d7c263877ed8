#pragma once

// Stratified N-fold cross-validation, the group-aware holdout split,
// confusion matrices and the derived ratio metrics.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opcode_sieve/grouping.hpp"
#include "opcode_sieve/learn.hpp"

namespace opcode_sieve {

struct ConfusionMatrix {
    std::uint64_t tp = 0;  // malware classified malware
    std::uint64_t tn = 0;  // benign classified benign
    std::uint64_t fp = 0;  // benign classified malware
    std::uint64_t fn = 0;  // malware classified benign

    std::uint64_t tm() const { return tp + fn; }
    std::uint64_t tb() const { return tn + fp; }
    std::uint64_t total() const { return tm() + tb(); }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp; tn += o.tn; fp += o.fp; fn += o.fn;
        return *this;
    }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Ratios in [0,1], accuracy in percent. A ratio whose denominator is zero
/// is reported as nullopt, never as 0.
struct Metrics {
    std::optional<double> tpr, tnr, fpr, fnr;
    std::optional<double> accuracy;
};

/// tpr = tp/tm, tnr = tn/tb, fpr = fp/tb, fnr = fn/tm,
/// accuracy = 100 (tp+tn)/(tm+tb).
Metrics compute_metrics(const ConfusionMatrix& cm);

/// Tallies predictions against labels, malware positive.
/// Throws LengthMismatch.
ConfusionMatrix confusion(std::span<const Label> predictions,
                          std::span<const Label> labels);

struct CVConfig {
    int n_folds = 10;
    bool stratified = true;
    std::uint64_t seed = 0;
};

/// Disjoint fold index sets covering 0..n-1. Stratified mode keeps per-class
/// fold sizes within 1 of each other and requires n_folds <= the rarer
/// class count. Shuffling is a pure function of the seed.
std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const Label> labels,
                                                       const CVConfig& config);
std::vector<std::vector<std::size_t>> stratified_kfold(
    std::span<const FeatureVector> data, const CVConfig& config);

struct FoldResult {
    ConfusionMatrix cm;
    Metrics metrics;
};

struct CVReport {
    CVConfig config;
    std::string model_kind;
    std::vector<FoldResult> folds;
    ConfusionMatrix total;   // elementwise sum over folds
    Metrics aggregate;       // micro-averaged from `total`
    double wall_seconds = 0;
};

using Predictor = std::function<Prediction(const FeatureVector&)>;
/// Maps a training set and the fold index to a predictor. The seam for
/// plugging in further classifiers (or test stubs).
using Trainer = std::function<Predictor(std::span<const FeatureVector>, int fold)>;

Trainer make_trainer(const ModelSpec& spec, std::uint64_t fingerprint);

/// Train on each fold's complement, predict the fold, sum the confusions.
CVReport cross_validate(std::span<const FeatureVector> data, const Trainer& trainer,
                        std::string_view model_kind, const CVConfig& config);
CVReport cross_validate(std::span<const FeatureVector> data, const ModelSpec& spec,
                        const CVConfig& config, std::uint64_t fingerprint = 0);

struct PipelineOptions {
    GroupingParams grouping;
    SelectionParams selection;
    FrequencyOptions frequency;
    /// Select features once on the whole corpus instead of inside each
    /// fold's training portion.
    bool leaky_features = false;
};

/// Full-protocol CV over a raw corpus: size-partition, per-fold feature
/// selection (unless leaky), vectorization, training, prediction.
CVReport cross_validate_corpus(const Corpus& corpus, const PipelineOptions& options,
                               const ModelSpec& spec, const CVConfig& config);

struct HoldoutSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

/// Draws min(per_group_min, group size) samples from every non-empty group
/// into the test side, seed-deterministically; the rest train.
HoldoutSplit group_holdout(const std::vector<SizeGroup>& groups, const Corpus& corpus,
                           int per_group_min, std::uint64_t seed);

/// Group-aware holdout evaluation: split, select features on the training
/// side (unless leaky), train once, score the held-out samples. Reported as
/// a single-fold CVReport.
CVReport evaluate_holdout(const Corpus& corpus, const PipelineOptions& options,
                          const ModelSpec& spec, int per_group_min,
                          std::uint64_t seed);

std::string to_json(const CVReport& report);
/// "n_folds,classifier,accuracy" data line for sweep plotting.
std::string csv_summary_line(const CVReport& report);

} // namespace opcode_sieve
