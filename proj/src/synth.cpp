#include "opcode_sieve/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>

#include "opcode_sieve/error.hpp"
#include "opcode_sieve/rng.hpp"

namespace opcode_sieve {
namespace {

// The planted ids split into a malware-favored head (weight 1+gap in the
// malware distribution) and a benign-favored tail (weight lowered so the
// tilt is zero-sum before normalization). Benign stays uniform.
struct PlantedSplit {
    int head = 0;  // ids [0, head) lean malware
    int tail = 0;  // ids [head, head+tail) lean benign
};

PlantedSplit split_of(const SynthSpec& spec) {
    const int head = (spec.signal_opcodes + 1) / 2;
    return {head, spec.signal_opcodes - head};
}

void validate(const SynthSpec& spec) {
    if (spec.n_malware < 1 || spec.n_benign < 1)
        throw InvalidSpec("synth: need at least one sample per class");
    if (spec.vocab_size < 1)
        throw InvalidSpec("synth: vocab_size must be positive");
    if (spec.signal_opcodes < 0 || spec.signal_opcodes > spec.vocab_size)
        throw InvalidSpec("synth: signal_opcodes must lie in [0, vocab_size]");
    if (spec.signal_gap < 0)
        throw InvalidSpec("synth: signal_gap must be non-negative");
    if (spec.size_lo > spec.size_hi)
        throw InvalidSpec("synth: size_lo exceeds size_hi");
    if (spec.ops_lo < 1 || spec.ops_lo > spec.ops_hi)
        throw InvalidSpec("synth: need 1 <= ops_lo <= ops_hi");
    const auto [head, tail] = split_of(spec);
    if (tail > 0 && spec.signal_gap * head / tail >= 1.0)
        throw InvalidSpec("synth: signal_gap too large, tail weight would vanish");
}

std::vector<double> normalized(std::vector<double> weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= sum;
    return weights;
}

std::vector<double> cdf_of(const std::vector<double>& p) {
    std::vector<double> cdf(p.size());
    std::partial_sum(p.begin(), p.end(), cdf.begin());
    cdf.back() = 1.0;  // absorb float drift so every draw lands in range
    return cdf;
}

} // namespace

std::vector<OpcodeId> planted_opcodes(const SynthSpec& spec) {
    validate(spec);
    std::vector<OpcodeId> ids(static_cast<std::size_t>(spec.signal_opcodes));
    std::iota(ids.begin(), ids.end(), OpcodeId{0});
    return ids;
}

std::pair<std::vector<double>, std::vector<double>> class_distributions(
    const SynthSpec& spec) {
    validate(spec);
    const auto n = static_cast<std::size_t>(spec.vocab_size);
    std::vector<double> malware(n, 1.0), benign(n, 1.0);
    const auto [head, tail] = split_of(spec);
    for (int i = 0; i < head; ++i)
        malware[static_cast<std::size_t>(i)] = 1.0 + spec.signal_gap;
    for (int i = head; i < head + tail; ++i)
        malware[static_cast<std::size_t>(i)] = 1.0 - spec.signal_gap * head / tail;
    return {normalized(std::move(malware)), normalized(std::move(benign))};
}

Corpus synth_corpus(const SynthSpec& spec) {
    validate(spec);
    const auto [malware_dist, benign_dist] = class_distributions(spec);
    const std::vector<double> malware_cdf = cdf_of(malware_dist);
    const std::vector<double> benign_cdf = cdf_of(benign_dist);

    Corpus corpus;
    for (int v = 0; v < spec.vocab_size; ++v)
        corpus.vocabulary.intern("op" + std::to_string(v));

    std::uint64_t ordinal = 0;  // per-sample streams derived from one seed
    auto emit = [&](Label label, int count, const std::vector<double>& cdf) {
        for (int i = 0; i < count; ++i, ++ordinal) {
            Rng rng(derive_seed(spec.seed, ordinal));
            Sample sample;
            char name[16];
            std::snprintf(name, sizeof name, "%c%05d",
                          label == Label::malware ? 'm' : 'b', i);
            sample.id = name;
            sample.label = label;
            sample.size_bytes =
                spec.size_lo + rng.bounded(spec.size_hi - spec.size_lo + 1);
            const int n_ops =
                spec.ops_lo + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(
                                  spec.ops_hi - spec.ops_lo + 1)));
            for (int k = 0; k < n_ops; ++k) {
                const double u = rng.real01();
                const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
                const auto idx = std::min<std::size_t>(
                    cdf.size() - 1,
                    static_cast<std::size_t>(it - cdf.begin()));
                ++sample.counts[static_cast<OpcodeId>(idx)];
            }
            sample.total_opcodes = static_cast<std::uint64_t>(n_ops);
            corpus.samples.push_back(std::move(sample));
        }
    };
    emit(Label::malware, spec.n_malware, malware_cdf);
    emit(Label::benign, spec.n_benign, benign_cdf);
    return corpus;
}

} // namespace opcode_sieve
