#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "reflectmon/aggregation.hpp"
#include "reflectmon/detection.hpp"

namespace reflectmon {

struct CdfPoint {
    double value = 0.0;
    double fraction = 0.0;  // fraction of samples <= value
};

// Empirical CDF: one point per distinct value, non-decreasing, ending at 1.
std::vector<CdfPoint> empirical_cdf(std::vector<double> values);

struct Quartiles {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

// Linear-interpolation quantiles (the common "type 7" rule). Empty input
// yields all zeros.
Quartiles quartiles_of(std::vector<double> values);

// Everything the measurement figures need, computed from the session log.
struct AttackStats {
    uint64_t n_sessions = 0;
    std::vector<double> durations_sorted;  // minutes
    std::vector<double> peaks_sorted;      // bps
    std::vector<CdfPoint> duration_cdf;
    std::vector<CdfPoint> peak_cdf;
    Quartiles duration_quartiles;
    Quartiles peak_quartiles;
    std::map<uint16_t, uint64_t> per_port_counts;
    std::map<uint16_t, Quartiles> per_port_peak;  // boxplot data per port
    std::map<uint64_t, uint64_t> source_count_histogram;  // n_sources -> sessions
    Quartiles source_count_quartiles;
    std::map<uint64_t, uint64_t> multi_vector_group_sizes;  // size -> groups
    uint64_t n_multi_vector_groups = 0;

    // Fraction of sessions strictly shorter than `minutes`.
    double fraction_duration_under(double minutes) const;
};

// Sessions are copied because multi-vector grouping is (re)computed here.
AttackStats compute_stats(std::vector<SessionRecord> sessions);

std::string stats_to_json(const AttackStats& stats);

// Daily per-source traffic toward one (dstAS, port) key, attack intervals
// excluded. Days are days-since-epoch; cells are bytes (rendered as MBytes).
struct TrafficMatrix {
    uint32_t dst_as = 0;
    uint16_t port = 0;
    std::vector<int64_t> days;       // ascending
    std::vector<uint32_t> src_ases;  // ascending
    std::map<std::pair<uint32_t, int64_t>, uint64_t> cell_bytes;
    uint64_t included_bytes = 0;
    uint64_t excluded_bytes = 0;

    std::string to_csv() const;  // header "src_as,YYYY-MM-DD,..."; cells MBytes
};

// `src_sample` empty selects every source AS seen for the key in range
// (attack-only sources appear as all-zero rows). Days absent from the
// archive but inside [from_day, to_day] are a ConfigError naming them.
TrafficMatrix traffic_matrix(const std::vector<TrafficSketch>& archive,
                             const std::vector<SessionRecord>& sessions,
                             uint32_t dst_as, uint16_t port, int64_t from_day,
                             int64_t to_day, const std::vector<uint32_t>& src_sample);

}  // namespace reflectmon
