#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reflectmon/flow.hpp"

namespace reflectmon::nf9 {

// Field type IDs from the v9 information model that the collector decodes.
constexpr uint16_t kFieldInBytes = 1;
constexpr uint16_t kFieldInPkts = 2;
constexpr uint16_t kFieldProtocol = 4;
constexpr uint16_t kFieldL4SrcPort = 7;
constexpr uint16_t kFieldIpv4SrcAddr = 8;
constexpr uint16_t kFieldL4DstPort = 11;
constexpr uint16_t kFieldIpv4DstAddr = 12;
constexpr uint16_t kFieldIpv6SrcAddr = 27;
constexpr uint16_t kFieldIpv6DstAddr = 28;

constexpr uint16_t kTemplateFlowsetId = 0;
constexpr uint16_t kOptionsFlowsetId = 1;
constexpr uint16_t kMinDataFlowsetId = 256;
constexpr size_t kHeaderSize = 20;

struct TemplateField {
    uint16_t type = 0;
    uint16_t length = 0;
    bool operator==(const TemplateField&) const = default;
};

/// Per-exporter template store. A data record is only decoded once a template
/// with its id has been seen from the same exporter source_id.
struct TemplateCache {
    using Key = std::pair<uint32_t, uint16_t>;  // (source_id, template_id)
    std::map<Key, std::vector<TemplateField>> templates;
    std::map<Key, int64_t> last_refresh;  // export time of the latest template record

    size_t size() const { return templates.size(); }
};

struct ParseCounters {
    uint64_t datagrams = 0;
    uint64_t malformed_datagrams = 0;  // short header, wrong version, truncated flowset
    uint64_t flowsets = 0;
    uint64_t templates_learned = 0;
    uint64_t options_flowsets_skipped = 0;
    uint64_t records_decoded = 0;
    uint64_t records_unknown_template = 0;  // data seen before its template
    uint64_t records_invalid = 0;           // missing IPv4 fields or bytes < packets
    uint64_t ipv6_fields_seen = 0;
};

struct ParseResult {
    std::vector<FlowRecord> records;
    bool ok = true;        // false when the datagram was dropped as malformed
    std::string error;     // reason when !ok
};

/// Decodes one complete NetFlow v9 UDP payload. Template flowsets update the
/// cache; data flowsets decode against it. Never throws on wire input: any
/// byte sequence yields records plus counter increments, or ok=false.
ParseResult parse_netflow_v9(std::span<const uint8_t> datagram, TemplateCache& cache,
                             ParseCounters& counters);

}  // namespace reflectmon::nf9
