#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "reflectmon/flow.hpp"
#include "reflectmon/util.hpp"

namespace reflectmon {

// AS number meaning "no covering prefix": traffic from unannounced space
// still aggregates, under this sentinel.
inline constexpr uint32_t kUnmappedAs = 0;

// Longest-prefix-match table over IPv4, immutable after load. Refresh is a
// whole-table swap by the owner.
class PrefixTable {
public:
    // Each line is "<cidr> <asn>"; '#' starts a comment; duplicate CIDRs keep
    // the last entry; malformed lines are counted and skipped. An empty table
    // after load is a ConfigError.
    static PrefixTable load(std::istream& in, const std::string& name);
    static PrefixTable load_file(const std::string& path);

    // Build directly from entries (tests, simulator). Same dedup rule.
    static PrefixTable from_entries(const std::vector<std::pair<Cidr, uint32_t>>& entries);

    uint32_t lookup(uint32_t addr) const;

    // All prefixes whose winning entry carries `asn`, in ascending CIDR order.
    std::vector<Cidr> reverse(uint32_t asn) const;

    size_t size() const { return entry_count_; }
    uint64_t malformed_lines() const { return malformed_lines_; }
    int64_t load_timestamp() const { return load_timestamp_; }

private:
    struct Node {
        int32_t child[2] = {-1, -1};
        int32_t asn = -1;  // -1: no entry terminates here
    };

    void insert(const Cidr& prefix, uint32_t asn);
    static PrefixTable build(const std::map<Cidr, uint32_t>& deduped);

    std::vector<Node> nodes_;
    std::map<uint32_t, std::vector<Cidr>> reverse_;
    size_t entry_count_ = 0;
    uint64_t malformed_lines_ = 0;
    int64_t load_timestamp_ = 0;
};

AsFlow map_flow(const FlowRecord& record, const PrefixTable& table);

}  // namespace reflectmon
