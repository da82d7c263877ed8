#pragma once

// Per-group class frequency profiles, top-opcode selection by frequency
// difference, the cross-group union, dominance reporting and sample
// vectorization.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "opcode_sieve/corpus.hpp"
#include "opcode_sieve/grouping.hpp"

namespace opcode_sieve {

struct FrequencyOptions {
    /// Use raw opcode counts instead of per-file relative frequency for the
    /// selection-stage f_i. Vectorization is unaffected.
    bool raw_counts = false;
    /// Divide the per-group class sums by the whole-corpus class counts
    /// instead of the group-local ones.
    bool global_class_counts = false;
};

struct SelectionParams {
    int min_per_group = 10;
    double report_threshold = 0.02;
};

struct GroupProfile {
    int group_k = 0;
    int n_benign = 0;
    int n_malware = 0;
    std::map<OpcodeId, double> freq_benign;
    std::map<OpcodeId, double> freq_malware;
    std::map<OpcodeId, double> diff;  // |benign - malware|, zero entries kept
};

/// Mean per-file opcode frequency over the group members of one class:
/// sum of f_i over member files divided by the class member count.
/// Throws EmptyClassInGroup when the group holds no member of that label.
std::map<OpcodeId, double> group_class_frequency(const SizeGroup& group,
                                                 const Corpus& corpus, Label label,
                                                 const FrequencyOptions& options = {});

/// Absolute difference over the union of keys; missing keys read as 0 and
/// zero-valued results are retained.
std::map<OpcodeId, double> frequency_difference(const std::map<OpcodeId, double>& fb,
                                                const std::map<OpcodeId, double>& fm);

GroupProfile build_group_profile(const SizeGroup& group, const Corpus& corpus,
                                 const FrequencyOptions& options = {});

/// The min(min_per_group, nonzero support) opcodes with the largest
/// difference; ties break toward the smaller id. Returned ascending by id.
std::vector<OpcodeId> select_group_features(const std::map<OpcodeId, double>& diff,
                                            const SelectionParams& params);

struct FeatureSet {
    std::vector<OpcodeId> opcodes;  // ascending, no duplicates
    std::map<OpcodeId, std::vector<int>> source_groups;
    std::vector<int> skipped_groups;  // groups lacking one class

    bool contains(OpcodeId opcode) const;
};

/// Union of per-group selections over every group that has members of both
/// classes. Throws NoEligibleGroups when no group qualifies.
FeatureSet select_features(const Corpus& corpus, const std::vector<SizeGroup>& groups,
                           const SelectionParams& params = {},
                           const FrequencyOptions& options = {});

struct DominantEntry {
    OpcodeId opcode = 0;
    double freq_benign = 0;
    double freq_malware = 0;
    double signed_diff = 0;  // benign - malware; positive = benign-dominant
};

/// Opcodes whose class difference or occurrence clears `threshold`, sorted by
/// descending |difference| (ties toward the smaller id).
std::vector<DominantEntry> dominant_report(const GroupProfile& profile,
                                           double threshold);

struct FeatureVector {
    std::string sample_id;
    Label label = Label::benign;
    std::vector<double> values;
};

/// Dense per-sample relative frequencies aligned with fs.opcodes.
FeatureVector vectorize(const Sample& sample, const FeatureSet& fs);

/// Same, but aligned with an explicit mnemonic order (e.g. a loaded feature
/// file). Mnemonics absent from the vocabulary read as frequency 0.
FeatureVector vectorize(const Sample& sample,
                        std::span<const std::string> mnemonics,
                        const Vocabulary& vocab);

/// Stable hash of the ordered feature mnemonics; ties models to the feature
/// set they were trained on.
std::uint64_t feature_fingerprint(std::span<const std::string> mnemonics);
std::uint64_t feature_fingerprint(const FeatureSet& fs, const Vocabulary& vocab);

void save_feature_set(const FeatureSet& fs, const Vocabulary& vocab, std::ostream& out);

struct LoadedFeatureSet {
    std::vector<std::string> mnemonics;            // ascending original id order
    std::vector<std::vector<int>> source_groups;   // parallel to mnemonics
};

LoadedFeatureSet load_feature_set(std::istream& in);

} // namespace opcode_sieve
