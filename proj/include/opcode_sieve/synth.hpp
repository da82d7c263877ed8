#pragma once

// Seeded synthetic corpus generator: two class-conditional opcode
// distributions that differ on a small planted subset by a controllable gap.

#include <cstdint>
#include <utility>
#include <vector>

#include "opcode_sieve/corpus.hpp"

namespace opcode_sieve {

struct SynthSpec {
    std::uint64_t seed = 0;
    int n_malware = 200;
    int n_benign = 200;
    int vocab_size = 40;
    int signal_opcodes = 10;   // how many ids carry class signal
    double signal_gap = 0.3;   // 0 = identical class distributions
    std::uint64_t size_lo = 1024;  // file sizes drawn uniformly from [lo, hi]
    std::uint64_t size_hi = 51200;
    int ops_lo = 1000;         // opcodes drawn per sample, uniform [lo, hi]
    int ops_hi = 4000;
};

/// The ids the generator tilts; selection should rediscover these.
std::vector<OpcodeId> planted_opcodes(const SynthSpec& spec);

/// (malware, benign) categorical distributions over the vocabulary, each
/// summing to 1. Exposed so tests can check the planted tilt directly.
std::pair<std::vector<double>, std::vector<double>> class_distributions(
    const SynthSpec& spec);

/// A pure function of `spec`: same spec, same corpus, bit for bit.
/// Throws InvalidSpec on inconsistent fields.
Corpus synth_corpus(const SynthSpec& spec);

} // namespace opcode_sieve
