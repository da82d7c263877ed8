#pragma once

// Disassembly ingestion: mnemonic extraction, opcode interning, labeled
// sample collections and their on-disk format.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "opcode_sieve/error.hpp"

namespace opcode_sieve {

using OpcodeId = std::uint32_t;

enum class Label : std::uint8_t { malware, benign };

std::string_view to_string(Label label);
Label label_from_string(std::string_view text);  // throws MalformedRecord

/// Bijective mnemonic <-> id map. Ids are dense, assigned in first-seen order.
class Vocabulary {
public:
    /// Returns the id for `mnemonic`, assigning the next dense id on first
    /// sight. Case-folds to lowercase. Throws EmptyMnemonic on "".
    OpcodeId intern(std::string_view mnemonic);

    std::optional<OpcodeId> find(std::string_view mnemonic) const;
    const std::string& mnemonic_of(OpcodeId id) const;  // throws Error if unassigned
    std::size_t size() const { return names_.size(); }

    bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, OpcodeId> index_;
};

/// One executable: label, original file size and its sparse opcode profile.
struct Sample {
    std::string id;
    Label label = Label::benign;
    std::uint64_t size_bytes = 0;
    std::map<OpcodeId, std::uint32_t> counts;
    std::uint64_t total_opcodes = 0;

    /// Per-file relative frequency; 0 for absent opcodes.
    double frequency(OpcodeId opcode) const;

    bool operator==(const Sample&) const = default;
};

struct Corpus {
    Vocabulary vocabulary;
    std::vector<Sample> samples;

    const Sample* find(std::string_view sample_id) const;

    bool operator==(const Corpus&) const = default;
};

/// Extracts mnemonics, in order, from an objdump -d style listing.
/// An instruction line is "<addr>: <hex byte>+ <mnemonic> [operands]"; the
/// mnemonic is the first token after the byte column. Lines whose mnemonic is
/// "(bad)" or starts with '.' are dropped, as is everything that is not an
/// instruction line (headers, symbol labels, byte-only continuations).
/// Throws MalformedListing when a non-empty listing yields no instructions.
std::vector<std::string> parse_disassembly(std::string_view text);

/// Pre-tokenized input: whitespace-separated mnemonics, '#' to end of line
/// is a comment. Lowercases. Empty result is fine.
std::vector<std::string> parse_ops(std::string_view text);

/// Inverse of parse_ops for comment-free streams: single-space join.
std::string render_ops(std::span<const std::string> mnemonics);

/// Aggregates a mnemonic stream into a Sample, extending `vocab` as needed.
/// Throws EmptyOpcodeStream when `mnemonics` is empty.
Sample build_sample(Vocabulary& vocab, std::string id, Label label,
                    std::uint64_t size_bytes, std::span<const std::string> mnemonics);

void save_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);

/// Builds a corpus from a manifest of listings, one record per line:
/// <path>\t<label>\t[size_bytes]. Paths resolve relative to the manifest.
/// Files ending in .ops go through parse_ops, everything else through
/// parse_disassembly. A missing size falls back to the listing's file size.
Corpus ingest_manifest(const std::filesystem::path& manifest_path);

} // namespace opcode_sieve
