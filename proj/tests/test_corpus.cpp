#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "opcode_sieve/corpus.hpp"
#include "opcode_sieve/error.hpp"
#include "opcode_sieve/rng.hpp"
#include "oracles.hpp"

using namespace opcode_sieve;

namespace {

const std::filesystem::path kFixtures = OS_FIXTURE_DIR;

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Twelve instruction-format lines, one of them "(bad)".
const char* kTwelveLines =
    "  401000:\t55                   \tpush   %rbp\n"
    "  401001:\t48 89 e5             \tmov    %rsp,%rbp\n"
    "  401004:\t31 c0                \txor    %eax,%eax\n"
    "  401006:\t90                   \tnop\n"
    "  401007:\te8 14 00 00 00       \tcall   401020 <f>\n"
    "  40100c:\t83 c0 01             \tadd    $0x1,%eax\n"
    "  40100f:\tff                   \t(bad)\n"
    "  401010:\t48 85 c0             \ttest   %rax,%rax\n"
    "  401013:\t74 05                \tje     40101a <g>\n"
    "  401015:\t5d                   \tpop    %rbp\n"
    "  401016:\tc3                   \tret\n"
    "  401017:\tf3 0f 1e fa          \tendbr64\n";

} // namespace

TEST_CASE("parse_disassembly: single instruction line") {
    auto ops = parse_disassembly("  4010a0:\t55                   \tpush   %ebp");
    CHECK(ops == std::vector<std::string>{"push"});
}

TEST_CASE("parse_disassembly: twelve-line listing skips the (bad) line") {
    auto ops = parse_disassembly(kTwelveLines);
    CHECK(ops == std::vector<std::string>{"push", "mov", "xor", "nop", "call", "add",
                                          "test", "je", "pop", "ret", "endbr64"});
}

TEST_CASE("parse_disassembly: empty input gives an empty list") {
    CHECK(parse_disassembly("").empty());
}

TEST_CASE("parse_disassembly: non-empty input with zero instructions throws") {
    CHECK_THROWS_AS(parse_disassembly("hello: file format elf64-x86-64\n"),
                    MalformedListing);
    CHECK_THROWS_AS(parse_disassembly("0000000000401000 <_start>:\n\n"),
                    MalformedListing);
}

TEST_CASE("parse_disassembly: directive mnemonics and continuations are skipped") {
    const char* text =
        "  401000:\t90                   \tnop\n"
        "  401001:\t00 11 22             \t.byte 0x90\n"  // '.'-prefixed: skip
        "  401004:\t00 00 00\n"                            // byte-only: skip
        "  401007:\tc3                   \tret\n";
    CHECK(parse_disassembly(text) == std::vector<std::string>{"nop", "ret"});
}

TEST_CASE("parse_disassembly: golden fixture sequence") {
    auto ops = parse_disassembly(slurp(kFixtures / "hello.dis"));
    const std::vector<std::string> expected{
        "endbr64", "sub", "mov", "test", "je",   "call", "add", "ret",
        "xor",     "mov", "pop", "mov",  "jmp",  "cs",   "xchg", "push",
        "mov",     "mov", "call", "lock", "pop", "ret",  "cs",  "nop"};
    CHECK(ops == expected);
}

TEST_CASE("parse_ops: case folding and comments") {
    CHECK(parse_ops("push mov MOV # tail") ==
          std::vector<std::string>{"push", "mov", "mov"});
    CHECK(parse_ops("# only comment").empty());
    CHECK(parse_ops("add\nsub\tadd") == std::vector<std::string>{"add", "sub", "add"});
}

TEST_CASE("parse_ops after render_ops is the identity on token lists") {
    Rng rng(2024);
    const std::vector<std::string> pool{"push", "mov", "add", "xor", "call", "ret"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> tokens;
        const auto n = rng.bounded(40);
        for (std::uint64_t i = 0; i < n; ++i)
            tokens.push_back(pool[rng.bounded(pool.size())]);
        CHECK(parse_ops(render_ops(tokens)) == tokens);
    }
}

TEST_CASE("intern: dense first-seen ids, idempotent") {
    Vocabulary vocab;
    CHECK(vocab.intern("push") == 0);
    CHECK(vocab.intern("mov") == 1);
    CHECK(vocab.intern("push") == 0);
    CHECK(vocab.size() == 2);
}

TEST_CASE("intern: empty mnemonic rejected") {
    Vocabulary vocab;
    CHECK_THROWS_AS(vocab.intern(""), EmptyMnemonic);
}

TEST_CASE("intern: case folds to lowercase") {
    Vocabulary vocab;
    CHECK(vocab.intern("MOV") == vocab.intern("mov"));
    CHECK(vocab.mnemonic_of(0) == "mov");
    CHECK(vocab.find("Mov") == OpcodeId{0});
}

TEST_CASE("intern: 26 distinct mnemonics get ids 0..25 in first-seen order") {
    Vocabulary vocab;
    std::vector<std::string> order;
    for (char c = 'a'; c <= 'z'; ++c) order.push_back(std::string("op_") + c);
    // interleave: every name interned several times in a scrambled pattern
    Rng rng(7);
    std::vector<std::string> first_seen;
    for (int i = 0; i < 500; ++i) {
        const auto& name = order[rng.bounded(order.size())];
        const auto before = vocab.size();
        const auto id = vocab.intern(name);
        if (vocab.size() > before) first_seen.push_back(name);
        CHECK(vocab.mnemonic_of(id) == name);        // bijection, one way
        CHECK(vocab.find(name) == id);               // and back
        CHECK(id < vocab.size());
    }
    for (const auto& name : order) vocab.intern(name);  // force completeness
    CHECK(vocab.size() == 26);
    for (std::size_t i = 0; i < first_seen.size(); ++i)
        CHECK(vocab.find(first_seen[i]) == static_cast<OpcodeId>(i));
}

TEST_CASE("build_sample: aggregates counts") {
    Vocabulary vocab;
    const std::vector<std::string> tokens{"push", "mov", "push"};
    Sample s = build_sample(vocab, "a", Label::benign, 100, tokens);
    CHECK(s.total_opcodes == 3);
    CHECK(s.counts.at(vocab.find("push").value()) == 2);
    CHECK(s.counts.at(vocab.find("mov").value()) == 1);
    CHECK(s.frequency(vocab.find("push").value()) == doctest::Approx(2.0 / 3).epsilon(1e-12));
}

TEST_CASE("build_sample: empty stream rejected") {
    Vocabulary vocab;
    CHECK_THROWS_AS(build_sample(vocab, "x", Label::malware, 10, {}),
                    EmptyOpcodeStream);
}

TEST_CASE("build_sample: 1000 random tokens match an independent tally") {
    Rng rng(99);
    std::vector<std::string> pool;
    for (int i = 0; i < 20; ++i) pool.push_back("op" + std::to_string(i));
    std::vector<std::string> tokens;
    for (int i = 0; i < 1000; ++i) tokens.push_back(pool[rng.bounded(pool.size())]);

    Vocabulary vocab;
    Sample s = build_sample(vocab, "big", Label::malware, 4096, tokens);
    CHECK(s.total_opcodes == 1000);

    std::uint64_t sum = 0;
    for (const auto& [id, c] : s.counts) sum += c;
    CHECK(sum == 1000);

    const auto expected = oracle::tally(tokens);
    CHECK(s.counts.size() == expected.size());
    for (const auto& [tok, c] : expected)
        CHECK(s.counts.at(vocab.find(tok).value()) == static_cast<std::uint32_t>(c));
}

TEST_CASE("sample frequencies sum to 1") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Vocabulary vocab;
        std::vector<std::string> tokens;
        const auto n = 1 + rng.bounded(300);
        for (std::uint64_t i = 0; i < n; ++i)
            tokens.push_back("op" + std::to_string(rng.bounded(15)));
        Sample s = build_sample(vocab, "t", Label::benign, 1, tokens);
        double sum = 0;
        for (const auto& [id, c] : s.counts) sum += s.frequency(id);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("corpus round-trip: empty") {
    Corpus corpus;
    std::stringstream buf;
    save_corpus(corpus, buf);
    CHECK(load_corpus(buf) == corpus);
}

TEST_CASE("corpus round-trip: three samples, vocabulary ids preserved") {
    Corpus corpus;
    const std::vector<std::string> a{"push", "mov", "push"};
    const std::vector<std::string> b{"xor", "xor", "ret", "mov"};
    const std::vector<std::string> c{"call"};
    corpus.samples.push_back(build_sample(corpus.vocabulary, "a", Label::benign, 100, a));
    corpus.samples.push_back(build_sample(corpus.vocabulary, "b", Label::malware, 6000, b));
    corpus.samples.push_back(build_sample(corpus.vocabulary, "c", Label::malware, 511999, c));

    std::stringstream buf;
    save_corpus(corpus, buf);
    const Corpus back = load_corpus(buf);
    CHECK(back == corpus);
    CHECK(back.vocabulary.find("push") == corpus.vocabulary.find("push"));

    // a second save of the loaded corpus is byte-identical
    std::stringstream again;
    save_corpus(back, again);
    std::stringstream reference;
    save_corpus(corpus, reference);
    CHECK(again.str() == reference.str());
}

TEST_CASE("corpus load: corrupted header rejected") {
    std::stringstream buf("opcode-sieve-corpus v9\n0\tpush\n");
    CHECK_THROWS_AS(load_corpus(buf), FormatVersionMismatch);
    std::stringstream empty("");
    CHECK_THROWS_AS(load_corpus(empty), FormatVersionMismatch);
}

TEST_CASE("corpus load: malformed records rejected") {
    auto attempt = [](const std::string& body) {
        std::stringstream buf("opcode-sieve-corpus v1\n" + body);
        return load_corpus(buf);
    };
    CHECK_THROWS_AS(attempt("0\tpush\na\tgoodware\t10\t0:1\n"), MalformedRecord);
    CHECK_THROWS_AS(attempt("0\tpush\na\tbenign\t10\t1:1\n"), MalformedRecord);  // id not in vocab
    CHECK_THROWS_AS(attempt("0\tpush\t\t\t\n"), MalformedRecord);                // field count
    CHECK_THROWS_AS(attempt("5\tpush\n"), MalformedRecord);                      // non-dense id
    CHECK_THROWS_AS(attempt("0\tpush\n1\tmov\na\tbenign\t10\t1:1,0:2\n"),
                    MalformedRecord);                                            // not ascending
    CHECK_THROWS_AS(attempt("0\tpush\na\tbenign\t10\t0:0\n"), MalformedRecord);  // zero count
    CHECK_THROWS_AS(attempt("0\tpush\na\tbenign\t10\t0:1\na\tbenign\t10\t0:1\n"),
                    MalformedRecord);                                            // duplicate id
}

TEST_CASE("ingest_manifest: fixture manifest with size fallback") {
    const Corpus corpus = ingest_manifest(kFixtures / "manifest.tsv");
    REQUIRE(corpus.samples.size() == 3);

    const Sample* hello = corpus.find("hello.dis");
    REQUIRE(hello != nullptr);
    CHECK(hello->label == Label::benign);
    CHECK(hello->size_bytes == 8192);       // explicit manifest size
    CHECK(hello->total_opcodes == 24);      // the golden sequence length

    const Sample* mal = corpus.find("malware_a.ops");
    REQUIRE(mal != nullptr);
    CHECK(mal->label == Label::malware);
    // no size column: falls back to the listing's on-disk size
    CHECK(mal->size_bytes ==
          std::filesystem::file_size(kFixtures / "malware_a.ops"));

    const Sample* ben = corpus.find("benign_a.ops");
    REQUIRE(ben != nullptr);
    CHECK(ben->size_bytes == 600);
}

TEST_CASE("ingest_manifest: missing listing surfaces as IoFailure") {
    const auto dir = std::filesystem::temp_directory_path() / "os_missing_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "manifest.tsv") << "ghost.dis\tbenign\t100\n";
    CHECK_THROWS_AS(ingest_manifest(dir / "manifest.tsv"), IoFailure);
    std::filesystem::remove_all(dir);
}
