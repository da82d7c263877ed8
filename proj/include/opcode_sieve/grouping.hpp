#pragma once

// Fixed-width size bucketing: 100 buckets of 5 KB by default, samples at or
// above the last bucket are excluded from the pipeline.

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "opcode_sieve/corpus.hpp"

namespace opcode_sieve {

struct GroupingParams {
    std::uint64_t bucket_bytes = 5120;
    int group_count = 100;

    std::uint64_t max_bytes() const {
        return bucket_bytes * static_cast<std::uint64_t>(group_count);
    }
};

struct SizeGroup {
    int index_k = 0;
    std::uint64_t lo_bytes = 0;
    std::uint64_t hi_bytes = 0;  // exclusive
    std::vector<std::string> member_ids;
    std::vector<std::size_t> member_rows;  // indices into Corpus::samples
};

/// floor(size / bucket) for sizes below the limit; OutOfRange otherwise.
int assign_group(std::uint64_t size_bytes, const GroupingParams& params = {});

struct PartitionResult {
    std::vector<SizeGroup> groups;  // non-empty groups, ascending index_k
    std::vector<std::string> excluded_ids;
};

/// Splits the corpus into size groups. Every sample below the limit lands in
/// exactly one group; the rest are reported as excluded.
PartitionResult partition(const Corpus& corpus, const GroupingParams& params = {});

struct SizeHistogram {
    std::map<int, std::uint64_t> counts;  // bucket index -> sample count
    std::uint64_t excluded = 0;
};

SizeHistogram size_histogram(const Corpus& corpus,
                             std::optional<Label> class_filter = std::nullopt,
                             const GroupingParams& params = {});

} // namespace opcode_sieve
