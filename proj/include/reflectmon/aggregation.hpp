#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reflectmon/flow.hpp"

namespace reflectmon {

// One monitored UDP reflection service. The bandwidth-amplification range is
// informational (reporting); detection only uses the port.
struct MonitoredPort {
    uint16_t port = 0;
    std::string service;
    std::optional<std::pair<double, double>> baf;  // amplification factor range

    bool operator==(const MonitoredPort&) const = default;
};

// The set of UDP source ports worth watching for reflection traffic.
class MonitoredPortTable {
public:
    // The 15 built-in reflection services (DNS, NTP, CLDAP, CharGen,
    // Memcached, SunRPC, SSDP, SNMP, SRCDS, CallOfDuty, NETBIOS, RIP,
    // Quake, Steam, QOTD).
    static MonitoredPortTable defaults();

    // Override file: "port service baf" per line, where baf is a number,
    // "low-high", or "-" when unknown. '#' comments allowed. Duplicate ports
    // are a ConfigError, as is an empty table.
    static MonitoredPortTable load(std::istream& in, const std::string& name);
    static MonitoredPortTable load_file(const std::string& path);

    bool contains(uint16_t port) const { return ports_.count(port) != 0; }
    const std::vector<MonitoredPort>& rows() const { return rows_; }
    const MonitoredPort* find(uint16_t port) const;

private:
    static MonitoredPortTable from_rows(std::vector<MonitoredPort> rows,
                                        const std::string& name);

    std::vector<MonitoredPort> rows_;
    std::set<uint16_t> ports_;
};

// Keep only UDP flows sourced from a monitored reflection port.
inline bool filter_flow(const AsFlow& flow, const MonitoredPortTable& ports) {
    return ports.contains(flow.src_port);
}

struct SketchKey {
    uint16_t src_port = 0;
    uint32_t dst_as = 0;

    auto operator<=>(const SketchKey&) const = default;
};

// Per-interval traffic aggregate for one (srcPort, dstAS) key, with byte
// attribution per contributing source AS.
struct TrafficSketch {
    int64_t interval_start = 0;
    uint16_t src_port = 0;
    uint32_t dst_as = 0;
    uint64_t bytes = 0;
    std::map<uint32_t, uint64_t> per_src;  // srcAS -> bytes contributed

    SketchKey key() const { return SketchKey{src_port, dst_as}; }
};

struct AggregationConfig {
    int64_t delta_t_seconds = 60;
    int64_t late_grace_intervals = 1;  // closed-interval flows within this many
                                       // buckets of the cursor still fold
};

struct AggregationCounters {
    uint64_t flows_folded = 0;
    uint64_t flows_late_dropped = 0;
    uint64_t bytes_late_dropped = 0;
    uint64_t intervals_closed = 0;
    uint64_t zero_sketches_emitted = 0;
};

// Streaming (srcPort, dstAS) aggregator. Callers advance a time cursor (from
// flow timestamps or the wall clock); intervals more than `late_grace`
// buckets behind the cursor close and their sketches are emitted exactly
// once, in (interval, srcPort, dstAS) order. Silent intervals between
// emissions yield zero-sketches for `live_keys` so downstream models observe
// the silence.
class SketchStore {
public:
    explicit SketchStore(AggregationConfig cfg);

    // Fold one already-filtered flow into its bucket. Returns false (and
    // counts a late drop) when the flow's bucket has already closed.
    bool fold(const AsFlow& flow);

    // Close the single next pending interval if it lies at or before
    // `close_through` (no bound when empty). Returns whether one closed —
    // callers that need per-interval live-key refresh loop on this.
    bool close_next(std::optional<int64_t> close_through,
                    const std::set<SketchKey>& live_keys,
                    std::vector<TrafficSketch>& out);

    // Move the cursor to `timestamp`, closing every interval that fell out
    // of the grace window. Closed sketches are appended to `out`.
    void advance(int64_t timestamp, const std::set<SketchKey>& live_keys,
                 std::vector<TrafficSketch>& out);

    // End of stream: close all remaining open intervals (and the silent
    // gaps between them).
    void flush(const std::set<SketchKey>& live_keys, std::vector<TrafficSketch>& out);

    // Upper bound of what advance(timestamp) would close.
    int64_t close_through_for(int64_t timestamp) const;

    const AggregationCounters& counters() const { return counters_; }
    const AggregationConfig& config() const { return cfg_; }
    size_t open_sketch_count() const;
    std::optional<int64_t> last_closed() const { return last_closed_; }

private:
    void close_one(int64_t interval, const std::set<SketchKey>& live_keys,
                   std::vector<TrafficSketch>& out);

    AggregationConfig cfg_;
    std::map<int64_t, std::map<SketchKey, TrafficSketch>> open_;
    std::optional<int64_t> last_closed_;
    AggregationCounters counters_;
};

// Archive format: one sketch per line, per_src keyed by decimal AS strings.
std::string to_jsonl(const TrafficSketch& sketch);
TrafficSketch sketch_from_jsonl(const std::string& line, const std::string& where);
std::vector<TrafficSketch> read_sketch_file(const std::string& path);

}  // namespace reflectmon
