#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reflectmon/aggregation.hpp"

namespace reflectmon {

struct DetectorConfig {
    double alpha = 0.9;        // EWMA weight on the previous mean
    double theta = 3.0;        // std-dev multiplier in the score
    double tau = 0.5;          // anomaly threshold on the score
    double epsilon = 1e-6;     // division guard in the score
    double nu_bps = 5e6;       // minimum attack volume, bits/second
    double entropy_h = 0.4;    // normalized source-entropy threshold
    int64_t delta_t_seconds = 60;
    uint64_t warmup_intervals = 0;  // intervals to absorb before scoring a new key

    void validate() const;  // throws ConfigError on out-of-range values

    // Reads the keys alpha, theta, tau, epsilon, nu_bps, entropy_h,
    // warmup_intervals, delta_t_seconds (all optional, defaults above).
    static DetectorConfig from_kv(const std::map<std::string, std::string>& kv,
                                  const std::string& name);
};

// Per-key traffic baseline. While `frozen`, mu/var hold the last clean state
// and scoring measures against that snapshot.
struct EwmaModel {
    double mu = 0.0;   // bytes per interval
    double var = 0.0;  // (bytes per interval)^2
    bool frozen = false;
    int64_t frozen_since = 0;  // interval of the last clean update
    std::optional<int64_t> anomaly_start;
};

// One smoothing step: mu' = a*mu + (1-a)*b, var' = (1-a)*(var + a*(b-mu)^2),
// with mu the pre-update mean. Pure; caller enforces the not-frozen rule.
EwmaModel ewma_update(const EwmaModel& model, double b, const DetectorConfig& cfg);

struct DeviationScore {
    double delta = 0.0;  // in [0,1]
    double b = 0.0;
    double mu_snapshot = 0.0;
    double sigma_snapshot = 0.0;
};

// delta = max(0, (b - (mu + theta*sigma)) / (b + epsilon)) against the
// model's stored (last clean) state. Works on fresh or frozen models.
DeviationScore score(const EwmaModel& model, double b, const DetectorConfig& cfg);

// Shannon entropy of the nonzero byte shares, divided by log(n) so an even
// split over n >= 2 sources scores 1. One source (or none) scores 0.
double normalized_entropy(const std::map<uint32_t, uint64_t>& per_src);

inline double to_bps(uint64_t bytes, int64_t delta_t_seconds) {
    return static_cast<double>(bytes) * 8.0 / static_cast<double>(delta_t_seconds);
}

// Minimum-volume gate: pass iff the sketch's bits/second >= nu (inclusive).
bool volume_gate(const TrafficSketch& sketch, const DetectorConfig& cfg);

// Source-entropy gate: pass iff normalized entropy > h (strict).
std::pair<double, bool> entropy_gate(const TrafficSketch& sketch,
                                     const DetectorConfig& cfg);

struct SourceShare {
    uint32_t src_as = 0;
    uint64_t bytes = 0;

    bool operator==(const SourceShare&) const = default;
};

// An anomalous interval that passed both gates: reportable attack traffic.
struct DrdosAlert {
    int64_t interval = 0;
    uint32_t dst_as = 0;
    uint16_t src_port = 0;
    double volume_bps = 0.0;
    double delta = 0.0;
    double entropy = 0.0;
    // Descending by bytes, ties by ascending AS; sums to the sketch bytes.
    std::vector<SourceShare> source_breakdown;
    uint64_t session_id = 0;
};

enum class FailedGate { volume, entropy };

const char* to_string(FailedGate gate);

// An anomalous interval held back by exactly one gate.
struct AnomalyLog {
    int64_t interval = 0;
    uint32_t dst_as = 0;
    uint16_t src_port = 0;
    double volume_bps = 0.0;
    double delta = 0.0;
    double entropy = 0.0;
    FailedGate failed_gate = FailedGate::volume;
    uint64_t session_id = 0;
};

// Lifecycle summary of one contiguous anomalous span on one key.
struct SessionRecord {
    uint64_t session_id = 0;
    uint32_t dst_as = 0;
    uint16_t src_port = 0;
    int64_t start = 0;  // first anomalous interval
    int64_t end = 0;    // first clean interval; last anomalous one if truncated
    bool truncated = false;  // stream ended while the session was open
    double duration_minutes = 0.0;
    double peak_volume_bps = 0.0;  // max over member alerts; 0 if none passed gates
    uint64_t n_sources = 0;        // distinct source ASes across the span
    uint64_t n_alerts = 0;
    uint64_t n_anomaly_logs = 0;
    std::optional<uint64_t> multi_vector_group;  // set by correlate_multivector
};

struct StepEvents {
    std::optional<DrdosAlert> alert;
    std::optional<AnomalyLog> anomaly_log;
    std::optional<SessionRecord> session_end;
};

// Streaming anomaly detector: one EwmaModel per sketch key, freeze semantics,
// gates, session lifecycle. Feed every closed sketch (including zero
// sketches) in interval order per key.
class Detector {
public:
    explicit Detector(DetectorConfig cfg);

    StepEvents step(const TrafficSketch& sketch);

    // End of stream: close open sessions as truncated, in key order.
    std::vector<SessionRecord> flush();

    // Keys holding a model; the aggregation layer pads these with zero
    // sketches on silent intervals.
    std::set<SketchKey> live_keys() const;

    const EwmaModel* model(SketchKey key) const;  // nullptr if never seen
    const DetectorConfig& config() const { return cfg_; }

private:
    struct ActiveSession {
        uint64_t id = 0;
        int64_t start = 0;
        int64_t last_anomalous = 0;
        double peak_bps = 0.0;
        std::set<uint32_t> sources;
        uint64_t n_alerts = 0;
        uint64_t n_logs = 0;
    };
    struct KeyState {
        EwmaModel model;
        uint64_t intervals_seen = 0;
        std::optional<int64_t> last_interval;
        std::optional<ActiveSession> session;
    };

    SessionRecord finalize(const SketchKey& key, const ActiveSession& session,
                           int64_t end, bool truncated) const;

    DetectorConfig cfg_;
    std::map<SketchKey, KeyState> keys_;
    uint64_t next_session_id_ = 1;
};

// Post-hoc grouping: sessions sharing a destination AS whose [start, end]
// ranges overlap (transitively) form one group. Groups of at least two get
// ids 1..k in first-appearance order; singletons keep no group. Returns the
// number of groups formed.
uint64_t correlate_multivector(std::vector<SessionRecord>& sessions);

// JSONL renderings with a fixed key order (deterministic output files).
std::string to_jsonl(const DrdosAlert& alert);
std::string to_jsonl(const AnomalyLog& log);
std::string to_jsonl(const SessionRecord& session);

// Inverse of to_jsonl(SessionRecord) for the offline tools.
SessionRecord session_from_jsonl(const std::string& line, const std::string& where);
std::vector<SessionRecord> read_session_file(const std::string& path);

// Inverse of to_jsonl(DrdosAlert) for gen-rules.
DrdosAlert alert_from_jsonl(const std::string& line, const std::string& where);
std::vector<DrdosAlert> read_alert_file(const std::string& path);

}  // namespace reflectmon
