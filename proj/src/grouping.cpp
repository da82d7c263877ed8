#include "opcode_sieve/grouping.hpp"

namespace opcode_sieve {

int assign_group(std::uint64_t size_bytes, const GroupingParams& params) {
    if (size_bytes >= params.max_bytes())
        throw OutOfRange("size " + std::to_string(size_bytes) + " is at or above " +
                         std::to_string(params.max_bytes()) + " bytes");
    return static_cast<int>(size_bytes / params.bucket_bytes);
}

PartitionResult partition(const Corpus& corpus, const GroupingParams& params) {
    std::map<int, SizeGroup> by_index;
    PartitionResult result;
    for (std::size_t row = 0; row < corpus.samples.size(); ++row) {
        const Sample& s = corpus.samples[row];
        if (s.size_bytes >= params.max_bytes()) {
            result.excluded_ids.push_back(s.id);
            continue;
        }
        const int k = assign_group(s.size_bytes, params);
        auto& group = by_index[k];
        if (group.member_ids.empty()) {
            group.index_k = k;
            group.lo_bytes = params.bucket_bytes * static_cast<std::uint64_t>(k);
            group.hi_bytes = group.lo_bytes + params.bucket_bytes;
        }
        group.member_ids.push_back(s.id);
        group.member_rows.push_back(row);
    }
    result.groups.reserve(by_index.size());
    for (auto& [k, group] : by_index) result.groups.push_back(std::move(group));
    return result;
}

SizeHistogram size_histogram(const Corpus& corpus,
                             std::optional<Label> class_filter,
                             const GroupingParams& params) {
    SizeHistogram histogram;
    for (const Sample& s : corpus.samples) {
        if (class_filter && s.label != *class_filter) continue;
        if (s.size_bytes >= params.max_bytes()) {
            histogram.excluded++;
            continue;
        }
        histogram.counts[assign_group(s.size_bytes, params)]++;
    }
    return histogram;
}

} // namespace opcode_sieve
