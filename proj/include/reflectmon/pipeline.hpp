#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "reflectmon/aggregation.hpp"
#include "reflectmon/asn_map.hpp"
#include "reflectmon/detection.hpp"
#include "reflectmon/flowspec_gen.hpp"
#include "reflectmon/netflow_v9.hpp"

namespace reflectmon {

// Minimal structured logger: JSON lines to stderr by default, terse
// human-readable lines under --quiet. Never writes to stdout (stdout may
// carry report output).
class Logger {
public:
    explicit Logger(bool quiet) : quiet_(quiet) {}

    void info(const std::string& event, const std::string& detail = "") const {
        emit("info", event, detail);
    }
    void warn(const std::string& event, const std::string& detail = "") const {
        emit("warn", event, detail);
    }
    void error(const std::string& event, const std::string& detail = "") const {
        emit("error", event, detail);
    }

private:
    void emit(const char* level, const std::string& event,
              const std::string& detail) const;
    bool quiet_;
};

struct PipelineConfig {
    std::string replay_path;   // exactly one of replay_path / listen_addr
    std::string listen_addr;   // "ip:port"
    std::string prefix_table_path;
    std::string monitored_ports_path;  // empty = built-in table
    std::string detector_config_path;  // optional key=value file
    DetectorConfig detector;
    AggregationConfig aggregation;
    SamplingConfig sampling;
    std::string out_dir;
    uint32_t top_n = 0;  // rule generation; 0 = all sources
    bool archive_sketches = false;
    bool quiet = false;
};

struct PipelineCounters {
    uint64_t flows_read = 0;
    uint64_t flows_non_udp = 0;
    uint64_t flows_not_monitored = 0;
    uint64_t flows_kept = 0;
    uint64_t unmapped_src = 0;
    uint64_t unmapped_dst = 0;
    uint64_t alerts = 0;
    uint64_t anomaly_logs = 0;
    uint64_t sessions_completed = 0;
    uint64_t sessions_truncated = 0;
    uint64_t rules_emitted = 0;
    uint64_t rules_withdrawn = 0;
    uint64_t rule_warnings = 0;
};

// The streaming core shared by replay and live ingestion: sampling, AS
// mapping, port filter, interval aggregation, detection, rule lifecycle,
// output files (alerts.jsonl, anomalies.jsonl, sessions.jsonl, rules.jsonl,
// rules.txt, counters.json, optional sketches.jsonl) under out_dir.
class Pipeline {
public:
    Pipeline(const PipelineConfig& cfg, const Logger& log);
    ~Pipeline();

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    void process_flow(const FlowRecord& raw);
    // Closes intervals that fell behind `timestamp` (replay cursor or wall
    // clock) and feeds the detector.
    void advance_time(int64_t timestamp);
    // End of stream: drain everything, finalize truncated sessions, write
    // rules and counters.
    void finish();

    const PipelineCounters& counters() const { return counters_; }
    const AggregationCounters& aggregation_counters() const {
        return store_.counters();
    }
    const PrefixTable& prefix_table() const { return *table_; }
    const MonitoredPortTable& monitored_ports() const { return ports_; }

    // Live mode: include these parser counters in counters.json.
    void set_netflow_counters(const nf9::ParseCounters* counters) {
        netflow_counters_ = counters;
    }
    void write_counters_file() const;

private:
    void drain(std::optional<int64_t> close_through);
    void handle_sketch(const TrafficSketch& sketch);
    void write_rules_files();

    PipelineConfig cfg_;
    const Logger& log_;
    std::unique_ptr<PrefixTable> table_;
    MonitoredPortTable ports_;
    SketchStore store_;
    Detector detector_;
    RuleStore rules_;
    PipelineCounters counters_;
    std::optional<int64_t> last_advance_bucket_;
    const nf9::ParseCounters* netflow_counters_ = nullptr;
    struct Sinks;
    std::unique_ptr<Sinks> sinks_;
    bool finished_ = false;
};

// Full run (replay or live per cfg). Returns the process exit code: 0 on
// success; ConfigError/IoError escape to the caller for 1/2 mapping.
int run_pipeline(const PipelineConfig& cfg, const Logger& log);

// Loads DetectorConfig (and delta_t) overrides from cfg.detector_config_path
// if set, then validates. Called by run_pipeline; exposed for the CLI.
void resolve_config(PipelineConfig& cfg);

}  // namespace reflectmon
