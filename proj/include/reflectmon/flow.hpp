#pragma once

#include <cstdint>

#include "reflectmon/util.hpp"

namespace reflectmon {

/// One parsed network flow. `packets`/`bytes` are the raw exporter values;
/// `adj_packets`/`adj_bytes` carry the sampling-adjusted counts that all
/// downstream volume math uses (equal to the raw values until apply_sampling).
struct FlowRecord {
    int64_t timestamp = 0;  // export-header unix seconds
    uint32_t src_ip = 0;    // host byte order
    uint16_t src_port = 0;
    uint32_t dst_ip = 0;
    uint16_t dst_port = 0;
    uint8_t protocol = 0;  // IANA number, 17 = UDP
    uint64_t packets = 0;
    uint64_t bytes = 0;
    uint64_t adj_packets = 0;
    uint64_t adj_bytes = 0;

    bool operator==(const FlowRecord&) const = default;
};

struct SamplingConfig {
    uint32_t sampling_rate = 1;  // 1 = unsampled
};

/// Scales the raw counters by the collector's packet-sampling multiplier.
inline FlowRecord apply_sampling(FlowRecord record, const SamplingConfig& cfg) {
    record.adj_bytes = record.bytes * cfg.sampling_rate;
    record.adj_packets = record.packets * cfg.sampling_rate;
    return record;
}

/// Start of the fixed-length interval containing `timestamp`.
constexpr int64_t bucket_of(int64_t timestamp, int64_t delta_t) {
    int64_t q = timestamp / delta_t;
    if (timestamp % delta_t != 0 && timestamp < 0) --q;
    return q * delta_t;
}

/// A flow after AS mapping: addresses replaced with origin AS numbers.
/// Unmapped addresses carry the AS 0 sentinel.
struct AsFlow {
    int64_t timestamp = 0;
    uint32_t src_as = 0;
    uint16_t src_port = 0;
    uint32_t dst_as = 0;
    uint16_t dst_port = 0;
    uint64_t packets = 0;
    uint64_t bytes = 0;  // sampling-adjusted

    bool operator==(const AsFlow&) const = default;
};

}  // namespace reflectmon
