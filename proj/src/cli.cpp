#include "opcode_sieve/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "opcode_sieve/corpus.hpp"
#include "opcode_sieve/error.hpp"
#include "opcode_sieve/eval.hpp"
#include "opcode_sieve/features.hpp"
#include "opcode_sieve/grouping.hpp"
#include "opcode_sieve/learn.hpp"
#include "opcode_sieve/synth.hpp"

namespace opcode_sieve {
namespace {

namespace fs = std::filesystem;

Corpus corpus_from(const std::string& path) {
    if (path == "-") return load_corpus(std::cin);
    return load_corpus(fs::path(path));
}

LoadedFeatureSet features_from(const std::string& path) {
    if (path == "-") return load_feature_set(std::cin);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path);
    return load_feature_set(in);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Runs `save` against the --out file, or stdout when no --out was given.
template <class SaveFn>
void emit_with(const std::string& out_path, SaveFn save) {
    if (out_path.empty() || out_path == "-") {
        save(std::cout);
        std::cout.flush();
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + out_path + " for writing");
    save(out);
    out.flush();
    if (!out) throw IoFailure("short write to " + out_path);
}

ModelSpec spec_of(const std::string& model, int trees, std::uint64_t seed) {
    if (model == "tree") return TreeParams{};
    ForestParams forest;
    forest.n_trees = trees;
    forest.seed = seed;
    return forest;
}

bool has_both_classes(const SizeGroup& group, const Corpus& corpus) {
    bool malware = false, benign = false;
    for (auto row : group.member_rows)
        (corpus.samples[row].label == Label::malware ? malware : benign) = true;
    return malware && benign;
}

// --- subcommands -----------------------------------------------------------

struct IngestArgs {
    std::string manifest, out;
};

void add_ingest(CLI::App& app) {
    auto args = std::make_shared<IngestArgs>();
    auto* sub = app.add_subcommand(
        "ingest", "Build a corpus file from a manifest of disassembly listings");
    sub->add_option("manifest", args->manifest,
                    "TSV manifest: path<TAB>label<TAB>[size_bytes]")
        ->required();
    sub->add_option("--out", args->out, "corpus output path (default stdout)");
    sub->callback([args] {
        Corpus corpus = ingest_manifest(args->manifest);
        emit_with(args->out, [&](std::ostream& os) { save_corpus(corpus, os); });
        std::size_t malware = 0;
        for (const auto& s : corpus.samples) malware += s.label == Label::malware;
        std::cerr << "ingested " << corpus.samples.size() << " samples (" << malware
                  << " malware, " << corpus.samples.size() - malware << " benign), "
                  << corpus.vocabulary.size() << " distinct opcodes\n";
    });
}

struct StatsArgs {
    std::string corpus, out;
    std::uint64_t bucket_bytes = 5120;
};

void add_stats(CLI::App& app) {
    auto args = std::make_shared<StatsArgs>();
    auto* sub = app.add_subcommand("stats", "Per-size-bucket class counts as CSV");
    sub->add_option("corpus", args->corpus, "corpus file ('-' for stdin)")->required();
    sub->add_option("--bucket-bytes", args->bucket_bytes, "size bucket width")
        ->capture_default_str();
    sub->add_option("--out", args->out, "CSV output path (default stdout)");
    sub->callback([args] {
        Corpus corpus = corpus_from(args->corpus);
        GroupingParams params{.bucket_bytes = args->bucket_bytes, .group_count = 100};
        SizeHistogram malware = size_histogram(corpus, Label::malware, params);
        SizeHistogram benign = size_histogram(corpus, Label::benign, params);

        std::map<int, std::pair<std::uint64_t, std::uint64_t>> merged;
        for (const auto& [k, n] : malware.counts) merged[k].first = n;
        for (const auto& [k, n] : benign.counts) merged[k].second = n;

        std::ostringstream csv;
        csv << "bucket_k,lo_kb,hi_kb,malware,benign\n";
        for (const auto& [k, counts] : merged) {
            const double lo = static_cast<double>(params.bucket_bytes) * k / 1024.0;
            const double hi = static_cast<double>(params.bucket_bytes) * (k + 1) / 1024.0;
            char line[160];
            std::snprintf(line, sizeof line, "%d,%g,%g,%llu,%llu\n", k, lo, hi,
                          static_cast<unsigned long long>(counts.first),
                          static_cast<unsigned long long>(counts.second));
            csv << line;
        }
        emit_with(args->out, [&](std::ostream& os) { os << csv.str(); });
        if (malware.excluded + benign.excluded > 0)
            std::cerr << "excluded " << malware.excluded + benign.excluded
                      << " samples at or above " << params.max_bytes() << " bytes\n";
    });
}

struct SelectArgs {
    std::string corpus, out;
    std::uint64_t bucket_bytes = 5120;
    int min_per_group = 10;
    bool raw_counts = false, global_class_counts = false;
};

void add_select(CLI::App& app) {
    auto args = std::make_shared<SelectArgs>();
    auto* sub = app.add_subcommand(
        "select-features", "Pick the most class-separating opcodes per size group");
    sub->add_option("corpus", args->corpus, "corpus file ('-' for stdin)")->required();
    sub->add_option("--bucket-bytes", args->bucket_bytes, "size bucket width")
        ->capture_default_str();
    sub->add_option("--min-per-group", args->min_per_group,
                    "opcodes to keep per size group")
        ->capture_default_str();
    sub->add_flag("--raw-counts", args->raw_counts,
                  "rank by raw counts instead of per-file relative frequency");
    sub->add_flag("--global-class-counts", args->global_class_counts,
                  "normalize by whole-corpus class sizes instead of per-group");
    sub->add_option("--out", args->out, "feature list output path (default stdout)");
    sub->callback([args] {
        Corpus corpus = corpus_from(args->corpus);
        GroupingParams grouping{.bucket_bytes = args->bucket_bytes, .group_count = 100};
        PartitionResult part = partition(corpus, grouping);
        SelectionParams selection;
        selection.min_per_group = args->min_per_group;
        FrequencyOptions frequency{args->raw_counts, args->global_class_counts};
        FeatureSet features = select_features(corpus, part.groups, selection, frequency);
        emit_with(args->out, [&](std::ostream& os) {
            save_feature_set(features, corpus.vocabulary, os);
        });
        std::cerr << "selected " << features.opcodes.size() << " features from "
                  << part.groups.size() - features.skipped_groups.size() << " groups ("
                  << features.skipped_groups.size() << " single-class skipped, "
                  << part.excluded_ids.size() << " oversize samples excluded)\n";
    });
}

struct TrainArgs {
    std::string corpus, features, out, model;
    int trees = 100;
    std::uint64_t seed = 0;
};

void add_train(CLI::App& app) {
    auto args = std::make_shared<TrainArgs>();
    auto* sub = app.add_subcommand("train", "Fit a classifier on a vectorized corpus");
    sub->add_option("corpus", args->corpus, "corpus file ('-' for stdin)")->required();
    sub->add_option("--features", args->features, "feature list from select-features")
        ->required();
    sub->add_option("--model", args->model, "classifier kind")
        ->required()
        ->check(CLI::IsMember({"tree", "forest"}));
    sub->add_option("--trees", args->trees, "ensemble size for --model forest")
        ->capture_default_str();
    sub->add_option("--seed", args->seed, "bagging seed")
        ->envname("OPCODE_SIEVE_SEED")
        ->capture_default_str();
    sub->add_option("--out", args->out, "model output path (default stdout)");
    sub->callback([args] {
        Corpus corpus = corpus_from(args->corpus);
        LoadedFeatureSet features = features_from(args->features);
        const std::uint64_t fingerprint = feature_fingerprint(features.mnemonics);
        std::vector<FeatureVector> data;
        data.reserve(corpus.samples.size());
        for (const auto& sample : corpus.samples)
            data.push_back(vectorize(sample, features.mnemonics, corpus.vocabulary));
        TrainedModel model =
            train(data, spec_of(args->model, args->trees, args->seed), fingerprint);
        emit_with(args->out, [&](std::ostream& os) { save_model(model, os); });
        std::cerr << "trained " << args->model << " on " << data.size() << " samples x "
                  << features.mnemonics.size() << " features\n";
    });
}

struct EvalArgs {
    std::string corpus, out, model;
    int trees = 100;
    std::uint64_t seed = 0;
    int cv = 10;
    bool holdout = false;
    int holdout_per_group = 5;
    std::uint64_t bucket_bytes = 5120;
    int min_per_group = 10;
    bool raw_counts = false, global_class_counts = false, leaky = false;
};

void add_evaluate(CLI::App& app) {
    auto args = std::make_shared<EvalArgs>();
    auto* sub = app.add_subcommand(
        "evaluate", "Cross-validate or holdout-evaluate the full pipeline");
    sub->add_option("corpus", args->corpus, "corpus file ('-' for stdin)")->required();
    sub->add_option("--model", args->model, "classifier kind")
        ->required()
        ->check(CLI::IsMember({"tree", "forest"}));
    sub->add_option("--trees", args->trees, "ensemble size for --model forest")
        ->capture_default_str();
    sub->add_option("--seed", args->seed, "shuffle/bagging seed")
        ->envname("OPCODE_SIEVE_SEED")
        ->capture_default_str();
    auto* cv_opt =
        sub->add_option("--cv", args->cv, "fold count for stratified cross-validation")
            ->capture_default_str();
    sub->add_flag("--holdout", args->holdout,
                  "group-aware holdout split instead of cross-validation")
        ->excludes(cv_opt);
    sub->add_option("--holdout-per-group", args->holdout_per_group,
                    "test samples drawn per size group with --holdout")
        ->capture_default_str();
    sub->add_option("--bucket-bytes", args->bucket_bytes, "size bucket width")
        ->capture_default_str();
    sub->add_option("--min-per-group", args->min_per_group,
                    "opcodes to keep per size group")
        ->capture_default_str();
    sub->add_flag("--raw-counts", args->raw_counts,
                  "rank by raw counts instead of per-file relative frequency");
    sub->add_flag("--global-class-counts", args->global_class_counts,
                  "normalize by whole-corpus class sizes instead of per-group");
    sub->add_flag("--leaky-features", args->leaky,
                  "select features once on the whole corpus before splitting "
                  "(faster, but lets test data influence selection)");
    sub->add_option("--out", args->out, "JSON report path; summary CSV then on stdout");
    sub->callback([args] {
        Corpus corpus = corpus_from(args->corpus);
        PipelineOptions options;
        options.grouping = {.bucket_bytes = args->bucket_bytes, .group_count = 100};
        options.selection.min_per_group = args->min_per_group;
        options.frequency = {args->raw_counts, args->global_class_counts};
        options.leaky_features = args->leaky;
        const ModelSpec spec = spec_of(args->model, args->trees, args->seed);

        CVReport report =
            args->holdout
                ? evaluate_holdout(corpus, options, spec, args->holdout_per_group,
                                   args->seed)
                : cross_validate_corpus(corpus, options, spec,
                                        CVConfig{args->cv, true, args->seed});

        const std::string json = to_json(report);
        const std::string csv = csv_summary_line(report);
        if (!args->out.empty() && args->out != "-") {
            emit_with(args->out, [&](std::ostream& os) { os << json; });
            std::cout << csv << "\n";
        } else {
            std::cout << json;
            std::cerr << csv << "\n";
        }
    });
}

struct PredictArgs {
    std::string model, features, out;
    std::vector<std::string> inputs;
};

void add_predict(CLI::App& app) {
    auto args = std::make_shared<PredictArgs>();
    auto* sub = app.add_subcommand(
        "predict", "Classify disassembly listings with a trained model");
    sub->add_option("model", args->model, "model file from train")->required();
    sub->add_option("inputs", args->inputs,
                    "disassembly listings (.ops files are token streams)")
        ->required();
    sub->add_option("--features", args->features, "feature list the model was trained on")
        ->required();
    sub->add_option("--out", args->out, "prediction output path (default stdout)");
    sub->callback([args] {
        TrainedModel model = load_model(fs::path(args->model));
        LoadedFeatureSet features = features_from(args->features);
        const std::uint64_t fingerprint = feature_fingerprint(features.mnemonics);

        std::ostringstream lines;
        lines << std::fixed << std::setprecision(6);
        for (const auto& path : args->inputs) {
            const std::string text = slurp(path);
            const std::vector<std::string> tokens =
                path.ends_with(".ops") ? parse_ops(text) : parse_disassembly(text);
            std::error_code ec;
            auto size = fs::file_size(path, ec);
            if (ec) size = 0;
            Vocabulary scratch;
            Sample sample = build_sample(scratch, path, Label::benign, size, tokens);
            const Prediction pred =
                predict(model, vectorize(sample, features.mnemonics, scratch),
                        fingerprint);
            lines << path << '\t' << to_string(pred.label) << '\t' << pred.score << '\n';
        }
        emit_with(args->out, [&](std::ostream& os) { os << lines.str(); });
    });
}

struct SynthArgs {
    std::string out;
    SynthSpec spec;
};

void add_synth(CLI::App& app) {
    auto args = std::make_shared<SynthArgs>();
    auto* sub = app.add_subcommand(
        "synth", "Generate a seeded synthetic corpus with planted class signal");
    sub->add_option("--seed", args->spec.seed, "generator seed")
        ->envname("OPCODE_SIEVE_SEED")
        ->capture_default_str();
    sub->add_option("--malware", args->spec.n_malware, "malware sample count")
        ->capture_default_str();
    sub->add_option("--benign", args->spec.n_benign, "benign sample count")
        ->capture_default_str();
    sub->add_option("--vocab-size", args->spec.vocab_size, "distinct opcodes")
        ->capture_default_str();
    sub->add_option("--signal-opcodes", args->spec.signal_opcodes,
                    "opcodes that carry class signal")
        ->capture_default_str();
    sub->add_option("--signal-gap", args->spec.signal_gap,
                    "planted probability tilt in [0,1]")
        ->capture_default_str();
    sub->add_option("--size-lo", args->spec.size_lo, "minimum file size in bytes")
        ->capture_default_str();
    sub->add_option("--size-hi", args->spec.size_hi, "maximum file size in bytes")
        ->capture_default_str();
    sub->add_option("--ops-lo", args->spec.ops_lo, "minimum opcodes per sample")
        ->capture_default_str();
    sub->add_option("--ops-hi", args->spec.ops_hi, "maximum opcodes per sample")
        ->capture_default_str();
    sub->add_option("--out", args->out, "corpus output path (default stdout)");
    sub->callback([args] {
        Corpus corpus = synth_corpus(args->spec);
        emit_with(args->out, [&](std::ostream& os) { save_corpus(corpus, os); });
        std::cerr << "generated " << corpus.samples.size() << " samples over "
                  << corpus.vocabulary.size() << " opcodes\n";
    });
}

struct ReportArgs {
    std::string corpus, out;
    double threshold = 0.02;
    std::uint64_t bucket_bytes = 5120;
    bool raw_counts = false, global_class_counts = false, pooled = false;
    int group = 0;
};

void add_report(CLI::App& app) {
    auto args = std::make_shared<ReportArgs>();
    auto* sub = app.add_subcommand(
        "report", "Dominant-opcode report: per-class frequencies and differences");
    sub->add_option("corpus", args->corpus, "corpus file ('-' for stdin)")->required();
    sub->add_option("--report-threshold", args->threshold,
                    "keep opcodes whose difference or frequency reaches this")
        ->capture_default_str();
    sub->add_option("--bucket-bytes", args->bucket_bytes, "size bucket width")
        ->capture_default_str();
    sub->add_flag("--raw-counts", args->raw_counts,
                  "rank by raw counts instead of per-file relative frequency");
    sub->add_flag("--global-class-counts", args->global_class_counts,
                  "normalize by whole-corpus class sizes instead of per-group");
    auto* group_opt =
        sub->add_option("--group", args->group, "restrict to one size-group index");
    sub->add_flag("--pooled", args->pooled, "one pooled report over all eligible samples")
        ->excludes(group_opt);
    sub->add_option("--out", args->out, "CSV output path (default stdout)");
    sub->callback([args, sub] {
        Corpus corpus = corpus_from(args->corpus);
        GroupingParams grouping{.bucket_bytes = args->bucket_bytes, .group_count = 100};
        PartitionResult part = partition(corpus, grouping);
        const FrequencyOptions frequency{args->raw_counts, args->global_class_counts};

        std::ostringstream csv;
        csv << "group_k,mnemonic,freq_benign,freq_malware,signed_diff\n";
        csv << std::fixed << std::setprecision(6);
        auto emit_profile = [&](const SizeGroup& group, const std::string& key) {
            GroupProfile profile = build_group_profile(group, corpus, frequency);
            for (const auto& entry : dominant_report(profile, args->threshold))
                csv << key << ',' << corpus.vocabulary.mnemonic_of(entry.opcode) << ','
                    << entry.freq_benign << ',' << entry.freq_malware << ','
                    << entry.signed_diff << '\n';
        };

        if (args->pooled) {
            SizeGroup all;
            all.index_k = -1;
            all.hi_bytes = grouping.max_bytes();
            for (const auto& group : part.groups) {
                all.member_ids.insert(all.member_ids.end(), group.member_ids.begin(),
                                      group.member_ids.end());
                all.member_rows.insert(all.member_rows.end(), group.member_rows.begin(),
                                       group.member_rows.end());
            }
            emit_profile(all, "all");
        } else if (sub->count("--group") > 0) {
            const SizeGroup* wanted = nullptr;
            for (const auto& group : part.groups)
                if (group.index_k == args->group) wanted = &group;
            if (wanted == nullptr)
                throw EmptyClassInGroup("group " + std::to_string(args->group) +
                                        " has no samples");
            emit_profile(*wanted, std::to_string(args->group));
        } else {
            int skipped = 0;
            for (const auto& group : part.groups) {
                if (!has_both_classes(group, corpus)) {
                    ++skipped;
                    continue;
                }
                emit_profile(group, std::to_string(group.index_k));
            }
            if (skipped > 0)
                std::cerr << "skipped " << skipped << " single-class groups\n";
        }
        emit_with(args->out, [&](std::ostream& os) { os << csv.str(); });
    });
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"opcode-frequency malware triage pipeline"};
    app.require_subcommand(1);
    add_ingest(app);
    add_stats(app);
    add_select(app);
    add_train(app);
    add_evaluate(app);
    add_predict(app);
    add_synth(app);
    add_report(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help and friends
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("opcode-sieve");
    for (const auto& arg : args) argv.push_back(arg.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace opcode_sieve
