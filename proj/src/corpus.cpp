#include "opcode_sieve/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace opcode_sieve {

namespace {

constexpr std::string_view kCorpusMagic = "opcode-sieve-corpus v1";

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_hex(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) || (c >= 'a' && c <= 'f');
    });
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' ||
                                   line[i] == '\r'))
            ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' &&
               line[i] != '\r')
            ++i;
        if (i > start) tokens.push_back(line.substr(start, i - start));
    }
    return tokens;
}

// Pulls the mnemonic out of one listing line, or nullopt if the line is not
// an instruction line. Lines are expected lowercase already (objdump output);
// case is folded later by interning anyway.
std::optional<std::string_view> instruction_mnemonic(std::string_view line) {
    const auto tokens = split_ws(line);
    if (tokens.size() < 2) return std::nullopt;
    // address column: hex digits with a trailing ':'
    std::string_view addr = tokens[0];
    if (addr.size() < 2 || addr.back() != ':') return std::nullopt;
    if (!is_hex(addr.substr(0, addr.size() - 1))) return std::nullopt;
    // byte column: at least one 2-digit hex pair, then the mnemonic
    std::size_t i = 1;
    while (i < tokens.size() && tokens[i].size() == 2 && is_hex(tokens[i])) ++i;
    if (i == 1) return std::nullopt;          // no byte column
    if (i == tokens.size()) return std::nullopt;  // byte-only continuation line
    return tokens[i];
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

} // namespace

std::string_view to_string(Label label) {
    return label == Label::malware ? "malware" : "benign";
}

Label label_from_string(std::string_view text) {
    if (text == "malware") return Label::malware;
    if (text == "benign") return Label::benign;
    throw MalformedRecord("unknown label: " + std::string(text));
}

OpcodeId Vocabulary::intern(std::string_view mnemonic) {
    if (mnemonic.empty()) throw EmptyMnemonic("cannot intern an empty mnemonic");
    std::string folded = lowercase(mnemonic);
    if (auto it = index_.find(folded); it != index_.end()) return it->second;
    const auto id = static_cast<OpcodeId>(names_.size());
    index_.emplace(folded, id);
    names_.push_back(std::move(folded));
    return id;
}

std::optional<OpcodeId> Vocabulary::find(std::string_view mnemonic) const {
    auto it = index_.find(lowercase(mnemonic));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::mnemonic_of(OpcodeId id) const {
    if (id >= names_.size())
        throw Error("opcode id " + std::to_string(id) + " is not assigned");
    return names_[id];
}

double Sample::frequency(OpcodeId opcode) const {
    auto it = counts.find(opcode);
    if (it == counts.end()) return 0.0;
    return static_cast<double>(it->second) / static_cast<double>(total_opcodes);
}

const Sample* Corpus::find(std::string_view sample_id) const {
    for (const auto& s : samples)
        if (s.id == sample_id) return &s;
    return nullptr;
}

std::vector<std::string> parse_disassembly(std::string_view text) {
    std::vector<std::string> mnemonics;
    bool any_content = false;
    for (std::string_view line : split_lines(text)) {
        if (!line.empty()) any_content = true;
        auto mnemonic = instruction_mnemonic(line);
        if (!mnemonic) continue;
        if (*mnemonic == "(bad)" || mnemonic->front() == '.') continue;
        mnemonics.push_back(lowercase(*mnemonic));
    }
    if (mnemonics.empty() && any_content)
        throw MalformedListing("no instruction lines found in a non-empty listing");
    return mnemonics;
}

std::vector<std::string> parse_ops(std::string_view text) {
    std::vector<std::string> mnemonics;
    for (std::string_view line : split_lines(text)) {
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        for (std::string_view token : split_ws(line))
            mnemonics.push_back(lowercase(token));
    }
    return mnemonics;
}

std::string render_ops(std::span<const std::string> mnemonics) {
    std::string out;
    for (std::size_t i = 0; i < mnemonics.size(); ++i) {
        if (i) out += ' ';
        out += mnemonics[i];
    }
    return out;
}

Sample build_sample(Vocabulary& vocab, std::string id, Label label,
                    std::uint64_t size_bytes, std::span<const std::string> mnemonics) {
    if (mnemonics.empty())
        throw EmptyOpcodeStream("sample '" + id + "' has no opcodes");
    Sample sample;
    sample.id = std::move(id);
    sample.label = label;
    sample.size_bytes = size_bytes;
    for (const auto& m : mnemonics) sample.counts[vocab.intern(m)]++;
    sample.total_opcodes = mnemonics.size();
    return sample;
}

void save_corpus(const Corpus& corpus, std::ostream& out) {
    out << kCorpusMagic << '\n';
    for (OpcodeId id = 0; id < corpus.vocabulary.size(); ++id)
        out << id << '\t' << corpus.vocabulary.mnemonic_of(id) << '\n';
    for (const auto& s : corpus.samples) {
        out << s.id << '\t' << to_string(s.label) << '\t' << s.size_bytes << '\t';
        bool first = true;
        for (const auto& [opcode, count] : s.counts) {
            if (!first) out << ',';
            out << opcode << ':' << count;
            first = false;
        }
        out << '\n';
    }
    if (!out) throw IoFailure("failed writing corpus");
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open for write: " + path.string());
    save_corpus(corpus, out);
}

namespace {

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw MalformedRecord("bad " + std::string(what) + ": " + std::string(text));
    return value;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

} // namespace

Corpus load_corpus(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCorpusMagic)
        throw FormatVersionMismatch("expected '" + std::string(kCorpusMagic) +
                                    "', got '" + line + "'");
    Corpus corpus;
    bool in_samples = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() == 2) {
            if (in_samples)
                throw MalformedRecord("vocabulary entry after sample records");
            const auto id = parse_u64(fields[0], "opcode id");
            if (id != corpus.vocabulary.size())
                throw MalformedRecord("non-dense vocabulary id: " + std::string(fields[0]));
            if (corpus.vocabulary.intern(fields[1]) != id)
                throw MalformedRecord("duplicate mnemonic: " + std::string(fields[1]));
        } else if (fields.size() == 4) {
            in_samples = true;
            Sample s;
            s.id = std::string(fields[0]);
            s.label = label_from_string(fields[1]);
            s.size_bytes = parse_u64(fields[2], "size_bytes");
            OpcodeId prev = 0;
            bool first = true;
            std::size_t start = 0;
            const std::string_view counts = fields[3];
            while (start < counts.size()) {
                std::size_t comma = counts.find(',', start);
                const auto entry = counts.substr(
                    start, comma == std::string_view::npos ? std::string_view::npos
                                                           : comma - start);
                const auto colon = entry.find(':');
                if (colon == std::string_view::npos)
                    throw MalformedRecord("bad count entry: " + std::string(entry));
                const auto opcode = static_cast<OpcodeId>(
                    parse_u64(entry.substr(0, colon), "opcode id"));
                const auto count = parse_u64(entry.substr(colon + 1), "count");
                if (count == 0) throw MalformedRecord("zero count for opcode");
                if (opcode >= corpus.vocabulary.size())
                    throw MalformedRecord("opcode id outside vocabulary");
                if (!first && opcode <= prev)
                    throw MalformedRecord("opcode ids not ascending");
                s.counts[opcode] = static_cast<std::uint32_t>(count);
                s.total_opcodes += count;
                prev = opcode;
                first = false;
                if (comma == std::string_view::npos) break;
                start = comma + 1;
            }
            if (s.counts.empty())
                throw MalformedRecord("sample '" + s.id + "' has no counts");
            if (corpus.find(s.id))
                throw MalformedRecord("duplicate sample id: " + s.id);
            corpus.samples.push_back(std::move(s));
        } else {
            throw MalformedRecord("unrecognized record: " + line);
        }
    }
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open for read: " + path.string());
    return load_corpus(in);
}

Corpus ingest_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoFailure("cannot open manifest: " + manifest_path.string());
    const auto base = manifest_path.parent_path();

    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_tabs(line);
        if (fields.size() < 2 || fields.size() > 3)
            throw MalformedRecord("manifest line " + std::to_string(line_no) +
                                  ": expected <path>\\t<label>[\\t<size_bytes>]");
        const auto path = base / std::string(fields[0]);
        const Label label = label_from_string(fields[1]);

        std::ifstream file(path);
        if (!file) throw IoFailure("cannot open listing: " + path.string());
        std::stringstream buf;
        buf << file.rdbuf();
        const std::string text = buf.str();

        std::uint64_t size_bytes;
        if (fields.size() == 3 && !fields[2].empty()) {
            size_bytes = parse_u64(fields[2], "size_bytes");
        } else {
            std::error_code ec;
            size_bytes = std::filesystem::file_size(path, ec);
            if (ec) throw IoFailure("cannot stat: " + path.string());
        }

        if (corpus.find(fields[0]))
            throw MalformedRecord("duplicate sample id: " + std::string(fields[0]));
        const auto mnemonics = path.extension() == ".ops" ? parse_ops(text)
                                                          : parse_disassembly(text);
        corpus.samples.push_back(build_sample(corpus.vocabulary,
                                              std::string(fields[0]), label,
                                              size_bytes, mnemonics));
    }
    return corpus;
}

} // namespace opcode_sieve
