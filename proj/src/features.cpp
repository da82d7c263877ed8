#include "opcode_sieve/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

namespace opcode_sieve {

namespace {

constexpr std::string_view kFeaturesMagic = "opcode-sieve-features v1";

int count_label(const SizeGroup& group, const Corpus& corpus, Label label) {
    int n = 0;
    for (std::size_t row : group.member_rows)
        if (corpus.samples[row].label == label) ++n;
    return n;
}

int count_label(const Corpus& corpus, Label label) {
    int n = 0;
    for (const Sample& s : corpus.samples)
        if (s.label == label) ++n;
    return n;
}

} // namespace

std::map<OpcodeId, double> group_class_frequency(const SizeGroup& group,
                                                 const Corpus& corpus, Label label,
                                                 const FrequencyOptions& options) {
    const int in_group = count_label(group, corpus, label);
    if (in_group == 0)
        throw EmptyClassInGroup("group " + std::to_string(group.index_k) +
                                " has no " + std::string(to_string(label)) +
                                " members");
    const int denominator =
        options.global_class_counts ? count_label(corpus, label) : in_group;

    std::map<OpcodeId, double> freq;
    for (std::size_t row : group.member_rows) {
        const Sample& s = corpus.samples[row];
        if (s.label != label) continue;
        for (const auto& [opcode, count] : s.counts) {
            const double f = options.raw_counts
                                 ? static_cast<double>(count)
                                 : static_cast<double>(count) /
                                       static_cast<double>(s.total_opcodes);
            freq[opcode] += f;
        }
    }
    for (auto& [opcode, value] : freq) value /= static_cast<double>(denominator);
    return freq;
}

std::map<OpcodeId, double> frequency_difference(const std::map<OpcodeId, double>& fb,
                                                const std::map<OpcodeId, double>& fm) {
    std::map<OpcodeId, double> diff;
    for (const auto& [opcode, value] : fb) diff[opcode] = value;
    for (const auto& [opcode, value] : fm) {
        auto it = diff.find(opcode);
        if (it == diff.end())
            diff[opcode] = std::abs(value);
        else
            it->second = std::abs(it->second - value);
    }
    for (auto& [opcode, value] : diff) value = std::abs(value);
    return diff;
}

GroupProfile build_group_profile(const SizeGroup& group, const Corpus& corpus,
                                 const FrequencyOptions& options) {
    GroupProfile profile;
    profile.group_k = group.index_k;
    profile.n_benign = count_label(group, corpus, Label::benign);
    profile.n_malware = count_label(group, corpus, Label::malware);
    profile.freq_benign = group_class_frequency(group, corpus, Label::benign, options);
    profile.freq_malware = group_class_frequency(group, corpus, Label::malware, options);
    profile.diff = frequency_difference(profile.freq_benign, profile.freq_malware);
    return profile;
}

std::vector<OpcodeId> select_group_features(const std::map<OpcodeId, double>& diff,
                                            const SelectionParams& params) {
    std::vector<std::pair<OpcodeId, double>> support;
    for (const auto& [opcode, value] : diff)
        if (value != 0.0) support.emplace_back(opcode, value);
    // largest difference first, ties toward the smaller id
    std::sort(support.begin(), support.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const auto quota = std::min<std::size_t>(static_cast<std::size_t>(params.min_per_group),
                                             support.size());
    std::vector<OpcodeId> selected;
    selected.reserve(quota);
    for (std::size_t i = 0; i < quota; ++i) selected.push_back(support[i].first);
    std::sort(selected.begin(), selected.end());
    return selected;
}

bool FeatureSet::contains(OpcodeId opcode) const {
    return std::binary_search(opcodes.begin(), opcodes.end(), opcode);
}

FeatureSet select_features(const Corpus& corpus, const std::vector<SizeGroup>& groups,
                           const SelectionParams& params,
                           const FrequencyOptions& options) {
    FeatureSet fs;
    bool any_eligible = false;
    for (const SizeGroup& group : groups) {
        if (count_label(group, corpus, Label::benign) == 0 ||
            count_label(group, corpus, Label::malware) == 0) {
            fs.skipped_groups.push_back(group.index_k);
            continue;
        }
        any_eligible = true;
        const auto profile = build_group_profile(group, corpus, options);
        for (OpcodeId opcode : select_group_features(profile.diff, params))
            fs.source_groups[opcode].push_back(group.index_k);
    }
    // an eligible group whose classes tie everywhere selects nothing; that is
    // an empty feature set, not a NoEligibleGroups failure
    if (!any_eligible)
        throw NoEligibleGroups("no size group holds samples of both classes");
    fs.opcodes.reserve(fs.source_groups.size());
    for (const auto& [opcode, from] : fs.source_groups) fs.opcodes.push_back(opcode);
    return fs;
}

std::vector<DominantEntry> dominant_report(const GroupProfile& profile,
                                           double threshold) {
    std::vector<DominantEntry> entries;
    for (const auto& [opcode, unused] : profile.diff) {
        DominantEntry e;
        e.opcode = opcode;
        if (auto it = profile.freq_benign.find(opcode); it != profile.freq_benign.end())
            e.freq_benign = it->second;
        if (auto it = profile.freq_malware.find(opcode); it != profile.freq_malware.end())
            e.freq_malware = it->second;
        e.signed_diff = e.freq_benign - e.freq_malware;
        if (std::abs(e.signed_diff) >= threshold ||
            std::max(e.freq_benign, e.freq_malware) >= threshold)
            entries.push_back(e);
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        const double da = std::abs(a.signed_diff), db = std::abs(b.signed_diff);
        if (da != db) return da > db;
        return a.opcode < b.opcode;
    });
    return entries;
}

FeatureVector vectorize(const Sample& sample, const FeatureSet& fs) {
    FeatureVector vec;
    vec.sample_id = sample.id;
    vec.label = sample.label;
    vec.values.reserve(fs.opcodes.size());
    for (OpcodeId opcode : fs.opcodes) vec.values.push_back(sample.frequency(opcode));
    return vec;
}

FeatureVector vectorize(const Sample& sample,
                        std::span<const std::string> mnemonics,
                        const Vocabulary& vocab) {
    FeatureVector vec;
    vec.sample_id = sample.id;
    vec.label = sample.label;
    vec.values.reserve(mnemonics.size());
    for (const auto& m : mnemonics) {
        auto id = vocab.find(m);
        vec.values.push_back(id ? sample.frequency(*id) : 0.0);
    }
    return vec;
}

std::uint64_t feature_fingerprint(std::span<const std::string> mnemonics) {
    // FNV-1a over "mnemonic\n"
    std::uint64_t hash = 0xcbf29ce484222325ull;
    auto mix = [&hash](char c) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ull;
    };
    for (const auto& m : mnemonics) {
        for (char c : m) mix(c);
        mix('\n');
    }
    return hash;
}

std::uint64_t feature_fingerprint(const FeatureSet& fs, const Vocabulary& vocab) {
    std::vector<std::string> mnemonics;
    mnemonics.reserve(fs.opcodes.size());
    for (OpcodeId opcode : fs.opcodes) mnemonics.push_back(vocab.mnemonic_of(opcode));
    return feature_fingerprint(mnemonics);
}

void save_feature_set(const FeatureSet& fs, const Vocabulary& vocab, std::ostream& out) {
    out << kFeaturesMagic << '\n';
    for (OpcodeId opcode : fs.opcodes) {
        out << vocab.mnemonic_of(opcode);
        if (auto it = fs.source_groups.find(opcode); it != fs.source_groups.end() &&
                                                     !it->second.empty()) {
            out << "\t# groups: ";
            for (std::size_t i = 0; i < it->second.size(); ++i) {
                if (i) out << ',';
                out << it->second[i];
            }
        }
        out << '\n';
    }
    if (!out) throw IoFailure("failed writing feature set");
}

LoadedFeatureSet load_feature_set(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kFeaturesMagic)
        throw FormatVersionMismatch("expected '" + std::string(kFeaturesMagic) +
                                    "', got '" + line + "'");
    LoadedFeatureSet fs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<int> groups;
        std::string_view view = line;
        if (auto hash = view.find('#'); hash != std::string_view::npos) {
            std::string_view comment = view.substr(hash + 1);
            view = view.substr(0, hash);
            if (auto colon = comment.find(':'); colon != std::string_view::npos) {
                comment = comment.substr(colon + 1);
                std::size_t start = 0;
                while (start < comment.size()) {
                    std::size_t comma = comment.find(',', start);
                    auto item = comment.substr(
                        start, comma == std::string_view::npos ? std::string_view::npos
                                                               : comma - start);
                    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
                    int k = 0;
                    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), k);
                    if (ec == std::errc{} && ptr == item.data() + item.size())
                        groups.push_back(k);
                    if (comma == std::string_view::npos) break;
                    start = comma + 1;
                }
            }
        }
        while (!view.empty() && (view.back() == ' ' || view.back() == '\t' ||
                                 view.back() == '\r'))
            view.remove_suffix(1);
        if (view.empty())
            throw MalformedRecord("feature line with no mnemonic: " + line);
        fs.mnemonics.emplace_back(view);
        fs.source_groups.push_back(std::move(groups));
    }
    return fs;
}

} // namespace opcode_sieve
