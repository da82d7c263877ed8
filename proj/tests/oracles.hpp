#pragma once

// Independent brute-force reference implementations used to check the real
// pipeline. Everything here is written straight-line from first principles on
// plain std containers and raw token lists; it deliberately shares no code
// with src/. Keep it that way.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// A raw labeled sample: tokens as parsed, nothing interned.
struct RawSample {
    bool malware = false;
    std::uint64_t size_bytes = 0;
    std::vector<std::string> tokens;
};

// Plain token tally.
inline std::map<std::string, int> tally(const std::vector<std::string>& tokens) {
    std::map<std::string, int> counts;
    for (const auto& t : tokens) counts[t]++;
    return counts;
}

// Per-file relative frequency from the raw token list.
inline std::map<std::string, double> file_frequency(const std::vector<std::string>& tokens) {
    std::map<std::string, double> freq;
    const double total = static_cast<double>(tokens.size());
    for (const auto& [tok, c] : tally(tokens)) freq[tok] = c / total;
    return freq;
}

// Mean per-file frequency over a set of files (already filtered to one class).
inline std::map<std::string, double> mean_frequency(
    const std::vector<const RawSample*>& files) {
    std::map<std::string, double> sum;
    for (const auto* f : files)
        for (const auto& [tok, v] : file_frequency(f->tokens)) sum[tok] += v;
    for (auto& [tok, v] : sum) v /= static_cast<double>(files.size());
    return sum;
}

// Top-k selection by value with ties broken toward the smaller key; exact
// zeros never qualify. Full sort then slice.
template <typename Key>
inline std::vector<Key> top_k(const std::map<Key, double>& scores, int k) {
    std::vector<std::pair<Key, double>> nonzero;
    for (const auto& [key, v] : scores)
        if (v != 0.0) nonzero.emplace_back(key, v);
    std::sort(nonzero.begin(), nonzero.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(nonzero.size()) > k) nonzero.resize(static_cast<size_t>(k));
    std::vector<Key> keys;
    for (const auto& [key, v] : nonzero) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    return keys;
}

// The whole feature-selection pipeline, re-derived from raw samples:
// bucket by size, drop samples at or above the limit, per bucket take the
// mean per-file frequency of each class, rank |benign - malware| and keep the
// top min_per_group, union across buckets that hold both classes.
// Returns the union as a sorted set of mnemonics; `eligible` reports whether
// any bucket had both classes.
struct SelectionOracleResult {
    std::set<std::string> selected;
    bool eligible = false;
};

inline SelectionOracleResult select_features_bruteforce(
    const std::vector<RawSample>& samples,
    std::uint64_t bucket_bytes,
    int group_count,
    int min_per_group) {
    SelectionOracleResult result;
    const std::uint64_t limit = bucket_bytes * static_cast<std::uint64_t>(group_count);
    for (int k = 0; k < group_count; ++k) {
        std::vector<const RawSample*> benign, malware;
        for (const auto& s : samples) {
            if (s.size_bytes >= limit) continue;
            if (s.size_bytes / bucket_bytes != static_cast<std::uint64_t>(k)) continue;
            (s.malware ? malware : benign).push_back(&s);
        }
        if (benign.empty() || malware.empty()) continue;
        result.eligible = true;
        const auto fb = mean_frequency(benign);
        const auto fm = mean_frequency(malware);
        std::map<std::string, double> diff;
        for (const auto& [tok, v] : fb) diff[tok] = v;
        for (const auto& [tok, v] : fm) {
            auto it = diff.find(tok);
            if (it == diff.end())
                diff[tok] = v;
            else
                it->second = it->second > v ? it->second - v : v - it->second;
        }
        // keys only in fb keep their fb value, which is already |fb - 0|
        for (const auto& tok : top_k(diff, min_per_group)) result.selected.insert(tok);
    }
    return result;
}

// Fold bookkeeping check: every index appears exactly once across folds.
inline bool folds_partition(const std::vector<std::vector<std::size_t>>& folds,
                            std::size_t n) {
    std::vector<int> seen(n, 0);
    for (const auto& fold : folds)
        for (std::size_t idx : fold) {
            if (idx >= n) return false;
            seen[idx]++;
        }
    return std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
}

} // namespace oracle
