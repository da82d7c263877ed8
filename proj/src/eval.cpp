#include "opcode_sieve/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>

#include <json.hpp>

#include "opcode_sieve/error.hpp"
#include "opcode_sieve/rng.hpp"

namespace opcode_sieve {
namespace {

using ordered_json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void tally(ConfusionMatrix& cm, Label predicted, Label actual) {
    if (actual == Label::malware)
        ++(predicted == Label::malware ? cm.tp : cm.fn);
    else
        ++(predicted == Label::benign ? cm.tn : cm.fp);
}

// Deal a seed-shuffled index list round-robin into n_folds buckets.
std::vector<std::vector<std::size_t>> deal(std::vector<std::size_t> indices,
                                           int n_folds, std::uint64_t seed,
                                           std::vector<std::vector<std::size_t>> folds) {
    Rng rng(seed);
    for (std::size_t i = indices.size(); i > 1; --i)
        std::swap(indices[i - 1], indices[rng.bounded(i)]);
    for (std::size_t i = 0; i < indices.size(); ++i)
        folds[i % static_cast<std::size_t>(n_folds)].push_back(indices[i]);
    return folds;
}

ordered_json metrics_json(const ConfusionMatrix& cm, const Metrics& m) {
    ordered_json j;
    j["tp"] = cm.tp;
    j["tn"] = cm.tn;
    j["fp"] = cm.fp;
    j["fn"] = cm.fn;
    auto put = [&j](const char* key, const std::optional<double>& value) {
        if (value)
            j[key] = *value;
        else
            j[key] = nullptr;
    };
    put("tpr", m.tpr);
    put("tnr", m.tnr);
    put("fpr", m.fpr);
    put("fnr", m.fnr);
    put("accuracy", m.accuracy);
    return j;
}

Corpus subset_view(const Corpus& corpus, std::span<const std::size_t> rows) {
    Corpus view;
    view.vocabulary = corpus.vocabulary;
    view.samples.reserve(rows.size());
    for (auto r : rows) view.samples.push_back(corpus.samples[r]);
    return view;
}

} // namespace

Metrics compute_metrics(const ConfusionMatrix& cm) {
    auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    Metrics m;
    m.tpr = ratio(cm.tp, cm.tm());
    m.tnr = ratio(cm.tn, cm.tb());
    m.fpr = ratio(cm.fp, cm.tb());
    m.fnr = ratio(cm.fn, cm.tm());
    if (cm.total() != 0)
        m.accuracy = 100.0 * static_cast<double>(cm.tp + cm.tn) /
                     static_cast<double>(cm.total());
    return m;
}

ConfusionMatrix confusion(std::span<const Label> predictions,
                          std::span<const Label> labels) {
    if (predictions.size() != labels.size())
        throw LengthMismatch("confusion: " + std::to_string(predictions.size()) +
                             " predictions vs " + std::to_string(labels.size()) +
                             " labels");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i)
        tally(cm, predictions[i], labels[i]);
    return cm;
}

std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const Label> labels,
                                                       const CVConfig& config) {
    if (config.n_folds < 2)
        throw InvalidSpec("n_folds must be at least 2, got " +
                          std::to_string(config.n_folds));
    const auto n_folds = static_cast<std::size_t>(config.n_folds);
    std::vector<std::vector<std::size_t>> folds(n_folds);

    if (config.stratified) {
        std::vector<std::size_t> malware, benign;
        for (std::size_t i = 0; i < labels.size(); ++i)
            (labels[i] == Label::malware ? malware : benign).push_back(i);
        if (malware.size() < n_folds || benign.size() < n_folds)
            throw TooFewSamples("stratified " + std::to_string(config.n_folds) +
                                "-fold needs that many samples of each class; have " +
                                std::to_string(malware.size()) + " malware, " +
                                std::to_string(benign.size()) + " benign");
        folds = deal(std::move(malware), config.n_folds, derive_seed(config.seed, 0),
                     std::move(folds));
        folds = deal(std::move(benign), config.n_folds, derive_seed(config.seed, 1),
                     std::move(folds));
    } else {
        if (labels.size() < n_folds)
            throw TooFewSamples(std::to_string(config.n_folds) + "-fold needs at least " +
                                std::to_string(config.n_folds) + " samples, have " +
                                std::to_string(labels.size()));
        std::vector<std::size_t> all(labels.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        folds = deal(std::move(all), config.n_folds, derive_seed(config.seed, 0),
                     std::move(folds));
    }
    for (auto& fold : folds) std::sort(fold.begin(), fold.end());
    return folds;
}

std::vector<std::vector<std::size_t>> stratified_kfold(
    std::span<const FeatureVector> data, const CVConfig& config) {
    std::vector<Label> labels;
    labels.reserve(data.size());
    for (const auto& v : data) labels.push_back(v.label);
    return stratified_kfold(labels, config);
}

Trainer make_trainer(const ModelSpec& spec, std::uint64_t fingerprint) {
    return [spec, fingerprint](std::span<const FeatureVector> data, int fold) -> Predictor {
        ModelSpec fold_spec = spec;
        // independent bagging streams per fold, reproducible from one master seed
        if (auto* forest = std::get_if<ForestParams>(&fold_spec))
            forest->seed = derive_seed(forest->seed, static_cast<std::uint64_t>(fold));
        auto model = std::make_shared<TrainedModel>(train(data, fold_spec, fingerprint));
        return [model, fingerprint](const FeatureVector& vec) {
            return predict(*model, vec, fingerprint);
        };
    };
}

CVReport cross_validate(std::span<const FeatureVector> data, const Trainer& trainer,
                        std::string_view model_kind, const CVConfig& config) {
    const auto start = Clock::now();
    auto folds = stratified_kfold(data, config);

    CVReport report;
    report.config = config;
    report.model_kind = std::string(model_kind);

    std::vector<char> held_out(data.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::fill(held_out.begin(), held_out.end(), 0);
        for (auto i : folds[f]) held_out[i] = 1;

        std::vector<FeatureVector> train_set;
        train_set.reserve(data.size() - folds[f].size());
        for (std::size_t i = 0; i < data.size(); ++i)
            if (!held_out[i]) train_set.push_back(data[i]);

        Predictor predictor = trainer(train_set, static_cast<int>(f));
        ConfusionMatrix cm;
        for (auto i : folds[f]) tally(cm, predictor(data[i]).label, data[i].label);

        report.folds.push_back({cm, compute_metrics(cm)});
        report.total += cm;
    }
    report.aggregate = compute_metrics(report.total);
    report.wall_seconds = seconds_since(start);
    return report;
}

CVReport cross_validate(std::span<const FeatureVector> data, const ModelSpec& spec,
                        const CVConfig& config, std::uint64_t fingerprint) {
    return cross_validate(data, make_trainer(spec, fingerprint),
                          to_string(kind_of(spec)), config);
}

CVReport cross_validate_corpus(const Corpus& corpus, const PipelineOptions& options,
                               const ModelSpec& spec, const CVConfig& config) {
    const auto start = Clock::now();
    PartitionResult full = partition(corpus, options.grouping);

    std::vector<std::size_t> rows;  // size-eligible corpus rows, corpus order
    for (const auto& group : full.groups)
        rows.insert(rows.end(), group.member_rows.begin(), group.member_rows.end());
    std::sort(rows.begin(), rows.end());

    std::vector<Label> labels;
    labels.reserve(rows.size());
    for (auto r : rows) labels.push_back(corpus.samples[r].label);
    auto folds = stratified_kfold(labels, config);  // indices into `rows`

    CVReport report;
    report.config = config;
    report.model_kind = std::string(to_string(kind_of(spec)));

    FeatureSet leaky_fs;
    std::uint64_t leaky_fp = 0;
    if (options.leaky_features) {
        leaky_fs = select_features(corpus, full.groups, options.selection,
                                   options.frequency);
        leaky_fp = feature_fingerprint(leaky_fs, corpus.vocabulary);
    }

    std::vector<char> held_out(rows.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::fill(held_out.begin(), held_out.end(), 0);
        for (auto i : folds[f]) held_out[i] = 1;

        std::vector<std::size_t> train_rows;
        train_rows.reserve(rows.size() - folds[f].size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (!held_out[i]) train_rows.push_back(rows[i]);

        FeatureSet fs;
        std::uint64_t fp = 0;
        if (options.leaky_features) {
            fs = leaky_fs;
            fp = leaky_fp;
        } else {
            // the fold's model never sees test labels, not even via selection
            Corpus train_view = subset_view(corpus, train_rows);
            PartitionResult part = partition(train_view, options.grouping);
            fs = select_features(train_view, part.groups, options.selection,
                                 options.frequency);
            fp = feature_fingerprint(fs, corpus.vocabulary);
        }

        std::vector<FeatureVector> train_set;
        train_set.reserve(train_rows.size());
        for (auto r : train_rows) train_set.push_back(vectorize(corpus.samples[r], fs));

        ModelSpec fold_spec = spec;
        if (auto* forest = std::get_if<ForestParams>(&fold_spec))
            forest->seed = derive_seed(forest->seed, f);
        TrainedModel model = train(train_set, fold_spec, fp);

        ConfusionMatrix cm;
        for (auto i : folds[f]) {
            const Sample& sample = corpus.samples[rows[i]];
            tally(cm, predict(model, vectorize(sample, fs), fp).label, sample.label);
        }
        report.folds.push_back({cm, compute_metrics(cm)});
        report.total += cm;
    }
    report.aggregate = compute_metrics(report.total);
    report.wall_seconds = seconds_since(start);
    return report;
}

HoldoutSplit group_holdout(const std::vector<SizeGroup>& groups, const Corpus& corpus,
                           int per_group_min, std::uint64_t seed) {
    if (per_group_min < 1)
        throw InvalidSpec("per_group_min must be positive, got " +
                          std::to_string(per_group_min));

    std::vector<char> in_group(corpus.samples.size(), 0);
    std::vector<char> is_test(corpus.samples.size(), 0);
    for (const auto& group : groups) {
        std::vector<std::size_t> rows = group.member_rows;
        for (auto r : rows) in_group[r] = 1;
        // clamp: tiny groups go to the test side whole
        const auto want = std::min<std::size_t>(
            static_cast<std::size_t>(per_group_min), rows.size());
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(group.index_k)));
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + rng.bounded(rows.size() - i);
            std::swap(rows[i], rows[j]);
        }
        for (std::size_t i = 0; i < want; ++i) is_test[rows[i]] = 1;
    }

    HoldoutSplit split;
    for (std::size_t r = 0; r < corpus.samples.size(); ++r) {
        if (!in_group[r]) continue;
        (is_test[r] ? split.test_ids : split.train_ids).push_back(corpus.samples[r].id);
    }
    return split;
}

CVReport evaluate_holdout(const Corpus& corpus, const PipelineOptions& options,
                          const ModelSpec& spec, int per_group_min,
                          std::uint64_t seed) {
    const auto start = Clock::now();
    PartitionResult full = partition(corpus, options.grouping);
    HoldoutSplit split = group_holdout(full.groups, corpus, per_group_min, seed);
    if (split.train_ids.empty())
        throw EmptyTrainingSet("holdout left no training samples");

    Corpus train_view;
    train_view.vocabulary = corpus.vocabulary;
    train_view.samples.reserve(split.train_ids.size());
    for (const auto& id : split.train_ids) train_view.samples.push_back(*corpus.find(id));

    FeatureSet fs;
    if (options.leaky_features) {
        fs = select_features(corpus, full.groups, options.selection, options.frequency);
    } else {
        PartitionResult part = partition(train_view, options.grouping);
        fs = select_features(train_view, part.groups, options.selection,
                             options.frequency);
    }
    const std::uint64_t fp = feature_fingerprint(fs, corpus.vocabulary);

    std::vector<FeatureVector> train_set;
    train_set.reserve(train_view.samples.size());
    for (const auto& sample : train_view.samples)
        train_set.push_back(vectorize(sample, fs));
    TrainedModel model = train(train_set, spec, fp);

    ConfusionMatrix cm;
    for (const auto& id : split.test_ids) {
        const Sample& sample = *corpus.find(id);
        tally(cm, predict(model, vectorize(sample, fs), fp).label, sample.label);
    }

    CVReport report;
    report.config = CVConfig{.n_folds = 1, .stratified = false, .seed = seed};
    report.model_kind = std::string(to_string(kind_of(spec)));
    report.folds.push_back({cm, compute_metrics(cm)});
    report.total = cm;
    report.aggregate = report.folds.front().metrics;
    report.wall_seconds = seconds_since(start);
    return report;
}

std::string to_json(const CVReport& report) {
    ordered_json j;
    j["model"] = report.model_kind;
    j["config"] = {{"n_folds", report.config.n_folds},
                   {"stratified", report.config.stratified},
                   {"seed", report.config.seed}};
    j["folds"] = ordered_json::array();
    for (const auto& fold : report.folds)
        j["folds"].push_back(metrics_json(fold.cm, fold.metrics));
    j["aggregate"] = metrics_json(report.total, report.aggregate);
    j["wall_seconds"] = report.wall_seconds;
    return j.dump(2) + "\n";
}

std::string csv_summary_line(const CVReport& report) {
    const double acc =
        report.aggregate.accuracy.value_or(std::numeric_limits<double>::quiet_NaN());
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%s,%.4f", report.config.n_folds,
                  report.model_kind.c_str(), acc);
    return buf;
}

} // namespace opcode_sieve
