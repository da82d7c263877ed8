#include <doctest.h>

#include <numeric>
#include <sstream>

#include "opcode_sieve/error.hpp"
#include "opcode_sieve/features.hpp"
#include "opcode_sieve/grouping.hpp"
#include "opcode_sieve/synth.hpp"

using namespace opcode_sieve;

namespace {

std::string serialized(const Corpus& corpus) {
    std::stringstream buf;
    save_corpus(corpus, buf);
    return buf.str();
}

SynthSpec small_spec() {
    SynthSpec spec;
    spec.seed = 99;
    spec.n_malware = 30;
    spec.n_benign = 25;
    spec.vocab_size = 16;
    spec.signal_opcodes = 6;
    spec.signal_gap = 0.4;
    spec.size_lo = 2000;
    spec.size_hi = 9000;
    spec.ops_lo = 50;
    spec.ops_hi = 120;
    return spec;
}

} // namespace

TEST_CASE("synth_corpus: pure function of the spec") {
    const SynthSpec spec = small_spec();
    const std::string a = serialized(synth_corpus(spec));
    const std::string b = serialized(synth_corpus(spec));
    CHECK(a == b);

    SynthSpec reseeded = spec;
    reseeded.seed = 100;
    CHECK(serialized(synth_corpus(reseeded)) != a);
}

TEST_CASE("synth_corpus: structure and ranges") {
    const SynthSpec spec = small_spec();
    const Corpus corpus = synth_corpus(spec);
    REQUIRE(corpus.samples.size() == 55);
    CHECK(corpus.vocabulary.size() == 16);
    CHECK(corpus.vocabulary.mnemonic_of(0) == "op0");
    CHECK(corpus.vocabulary.mnemonic_of(15) == "op15");

    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        const Sample& s = corpus.samples[i];
        const bool malware_block = i < 30;
        CHECK(s.label == (malware_block ? Label::malware : Label::benign));
        const std::size_t within = malware_block ? i : i - 30;
        char expect[32];
        std::snprintf(expect, sizeof expect, "%c%05zu", malware_block ? 'm' : 'b',
                      within);
        CHECK(s.id == expect);

        CHECK(s.size_bytes >= 2000);
        CHECK(s.size_bytes <= 9000);
        CHECK(s.total_opcodes >= 50);
        CHECK(s.total_opcodes <= 120);
        std::uint64_t total = 0;
        for (const auto& [id, count] : s.counts) {
            CHECK(id < 16);
            CHECK(count > 0);
            total += count;
        }
        CHECK(total == s.total_opcodes);
    }
}

TEST_CASE("planted_opcodes: the first signal_opcodes ids") {
    CHECK(planted_opcodes(small_spec()) ==
          std::vector<OpcodeId>{0, 1, 2, 3, 4, 5});
    SynthSpec none = small_spec();
    none.signal_opcodes = 0;
    CHECK(planted_opcodes(none).empty());
}

TEST_CASE("class_distributions: normalized with a zero-sum planted tilt") {
    const SynthSpec spec = small_spec();  // head 3, tail 3, gap 0.4
    const auto [malware, benign] = class_distributions(spec);
    REQUIRE(malware.size() == 16);
    REQUIRE(benign.size() == 16);

    const double uniform = 1.0 / 16;
    CHECK(std::accumulate(malware.begin(), malware.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::accumulate(benign.begin(), benign.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    for (double p : benign) CHECK(p == doctest::Approx(uniform).epsilon(1e-12));

    // head ids lean malware, tail ids lean benign, the rest stay uniform
    for (int i = 0; i < 3; ++i)
        CHECK(malware[static_cast<std::size_t>(i)] > uniform + 1e-6);
    for (int i = 3; i < 6; ++i)
        CHECK(malware[static_cast<std::size_t>(i)] < uniform - 1e-6);
    for (int i = 6; i < 16; ++i)
        CHECK(malware[static_cast<std::size_t>(i)] ==
              doctest::Approx(uniform).epsilon(1e-9));
}

TEST_CASE("class_distributions: zero gap erases the signal") {
    SynthSpec spec = small_spec();
    spec.signal_gap = 0.0;
    const auto [malware, benign] = class_distributions(spec);
    CHECK(malware == benign);
}

TEST_CASE("synth_corpus: planted tilt shows up in measured frequencies") {
    SynthSpec spec;
    spec.seed = 7;
    spec.n_malware = 120;
    spec.n_benign = 120;
    spec.vocab_size = 10;
    spec.signal_opcodes = 4;  // head {0,1}, tail {2,3}
    spec.signal_gap = 0.6;
    const Corpus corpus = synth_corpus(spec);

    // one big group: make every sample share a bucket
    const auto part =
        partition(corpus, {.bucket_bytes = 1 << 20, .group_count = 1});
    REQUIRE(part.groups.size() == 1);
    const auto fm = group_class_frequency(part.groups[0], corpus, Label::malware);
    const auto fb = group_class_frequency(part.groups[0], corpus, Label::benign);
    for (OpcodeId id : {OpcodeId{0}, OpcodeId{1}}) CHECK(fm.at(id) > fb.at(id));
    for (OpcodeId id : {OpcodeId{2}, OpcodeId{3}}) CHECK(fm.at(id) < fb.at(id));
}

TEST_CASE("synth_corpus: invalid specs rejected") {
    auto expect_invalid = [](auto mutate) {
        SynthSpec spec = small_spec();
        mutate(spec);
        CHECK_THROWS_AS(synth_corpus(spec), InvalidSpec);
    };
    expect_invalid([](SynthSpec& s) { s.n_malware = 0; });
    expect_invalid([](SynthSpec& s) { s.n_benign = 0; });
    expect_invalid([](SynthSpec& s) { s.vocab_size = 0; });
    expect_invalid([](SynthSpec& s) { s.signal_opcodes = -1; });
    expect_invalid([](SynthSpec& s) { s.signal_opcodes = s.vocab_size + 1; });
    expect_invalid([](SynthSpec& s) { s.signal_gap = -0.1; });
    expect_invalid([](SynthSpec& s) { s.size_lo = s.size_hi + 1; });
    expect_invalid([](SynthSpec& s) { s.ops_lo = 0; });
    expect_invalid([](SynthSpec& s) { s.ops_lo = s.ops_hi + 1; });
    // head 2, tail 1: gap of 0.5 would zero out the tail weight
    expect_invalid([](SynthSpec& s) {
        s.signal_opcodes = 3;
        s.signal_gap = 0.5;
    });
}

TEST_CASE("synth_corpus: near-limit gap still valid") {
    SynthSpec spec = small_spec();
    spec.signal_opcodes = 3;  // head 2, tail 1
    spec.signal_gap = 0.49;   // 0.49 * 2 / 1 = 0.98 < 1
    CHECK_NOTHROW(synth_corpus(spec));
}

TEST_CASE("synth_corpus: gap zero corpora carry no class signal in the spec") {
    SynthSpec spec = small_spec();
    spec.signal_gap = 0.0;
    spec.signal_opcodes = 0;
    const Corpus corpus = synth_corpus(spec);
    CHECK(corpus.samples.size() == 55);
    CHECK(planted_opcodes(spec).empty());
}
