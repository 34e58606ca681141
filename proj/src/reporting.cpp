#include "reflectmon/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reflectmon/util.hpp"

namespace reflectmon {

std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
    std::vector<CdfPoint> cdf;
    if (values.empty()) {
        return cdf;
    }
    std::sort(values.begin(), values.end());
    double n = static_cast<double>(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        bool last_of_value = i + 1 == values.size() || values[i + 1] != values[i];
        if (last_of_value) {
            cdf.push_back(CdfPoint{values[i], static_cast<double>(i + 1) / n});
        }
    }
    return cdf;
}

Quartiles quartiles_of(std::vector<double> values) {
    Quartiles q;
    if (values.empty()) {
        return q;
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double p) {
        double h = p * static_cast<double>(values.size() - 1);
        size_t lo = static_cast<size_t>(h);
        double frac = h - static_cast<double>(lo);
        if (lo + 1 < values.size()) {
            return values[lo] + frac * (values[lo + 1] - values[lo]);
        }
        return values[lo];
    };
    q.min = values.front();
    q.q1 = quantile(0.25);
    q.median = quantile(0.5);
    q.q3 = quantile(0.75);
    q.max = values.back();
    return q;
}

double AttackStats::fraction_duration_under(double minutes) const {
    if (durations_sorted.empty()) {
        return 0.0;
    }
    auto it = std::lower_bound(durations_sorted.begin(), durations_sorted.end(), minutes);
    return static_cast<double>(it - durations_sorted.begin()) /
           static_cast<double>(durations_sorted.size());
}

AttackStats compute_stats(std::vector<SessionRecord> sessions) {
    AttackStats stats;
    stats.n_sessions = sessions.size();
    if (sessions.empty()) {
        return stats;
    }

    std::map<uint16_t, std::vector<double>> per_port_peaks;
    std::vector<double> source_counts;
    for (const auto& session : sessions) {
        stats.durations_sorted.push_back(session.duration_minutes);
        stats.peaks_sorted.push_back(session.peak_volume_bps);
        ++stats.per_port_counts[session.src_port];
        per_port_peaks[session.src_port].push_back(session.peak_volume_bps);
        ++stats.source_count_histogram[session.n_sources];
        source_counts.push_back(static_cast<double>(session.n_sources));
    }
    std::sort(stats.durations_sorted.begin(), stats.durations_sorted.end());
    std::sort(stats.peaks_sorted.begin(), stats.peaks_sorted.end());
    stats.duration_cdf = empirical_cdf(stats.durations_sorted);
    stats.peak_cdf = empirical_cdf(stats.peaks_sorted);
    stats.duration_quartiles = quartiles_of(stats.durations_sorted);
    stats.peak_quartiles = quartiles_of(stats.peaks_sorted);
    for (auto& [port, peaks] : per_port_peaks) {
        stats.per_port_peak[port] = quartiles_of(std::move(peaks));
    }
    stats.source_count_quartiles = quartiles_of(std::move(source_counts));

    stats.n_multi_vector_groups = correlate_multivector(sessions);
    std::map<uint64_t, uint64_t> group_members;  // group id -> member count
    for (const auto& session : sessions) {
        if (session.multi_vector_group) {
            ++group_members[*session.multi_vector_group];
        }
    }
    for (const auto& [group, members] : group_members) {
        ++stats.multi_vector_group_sizes[members];
    }
    return stats;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json quartiles_json(const Quartiles& q) {
    return ordered_json{{"min", q.min},
                        {"q1", q.q1},
                        {"median", q.median},
                        {"q3", q.q3},
                        {"max", q.max}};
}

ordered_json cdf_json(const std::vector<CdfPoint>& cdf) {
    ordered_json arr = ordered_json::array();
    for (const auto& point : cdf) {
        arr.push_back(ordered_json{{"value", point.value}, {"fraction", point.fraction}});
    }
    return arr;
}

}  // namespace

std::string stats_to_json(const AttackStats& stats) {
    ordered_json obj;
    obj["n_sessions"] = stats.n_sessions;
    obj["duration_minutes"] = ordered_json{
        {"quartiles", quartiles_json(stats.duration_quartiles)},
        {"cdf", cdf_json(stats.duration_cdf)}};
    obj["peak_volume_bps"] = ordered_json{
        {"quartiles", quartiles_json(stats.peak_quartiles)},
        {"cdf", cdf_json(stats.peak_cdf)}};
    ordered_json per_port = ordered_json::array();
    for (const auto& [port, count] : stats.per_port_counts) {
        ordered_json entry;
        entry["port"] = port;
        entry["n_sessions"] = count;
        entry["peak_bps_quartiles"] = quartiles_json(stats.per_port_peak.at(port));
        per_port.push_back(std::move(entry));
    }
    obj["per_port"] = std::move(per_port);
    ordered_json source_hist = ordered_json::array();
    for (const auto& [n_sources, count] : stats.source_count_histogram) {
        source_hist.push_back(
            ordered_json{{"n_sources", n_sources}, {"n_sessions", count}});
    }
    obj["source_counts"] = ordered_json{
        {"quartiles", quartiles_json(stats.source_count_quartiles)},
        {"histogram", std::move(source_hist)}};
    ordered_json group_sizes = ordered_json::array();
    for (const auto& [size, count] : stats.multi_vector_group_sizes) {
        group_sizes.push_back(ordered_json{{"size", size}, {"n_groups", count}});
    }
    obj["multi_vector"] = ordered_json{{"n_groups", stats.n_multi_vector_groups},
                                       {"group_sizes", std::move(group_sizes)}};
    return obj.dump(2);
}

namespace {

constexpr int64_t kSecondsPerDay = 86400;

bool interval_excluded(int64_t t, uint16_t port, uint32_t dst_as,
                       const std::vector<SessionRecord>& sessions) {
    for (const auto& session : sessions) {
        if (session.src_port != port || session.dst_as != dst_as) {
            continue;
        }
        bool inside = session.truncated ? (t >= session.start && t <= session.end)
                                        : (t >= session.start && t < session.end);
        if (inside) {
            return true;
        }
    }
    return false;
}

}  // namespace

TrafficMatrix traffic_matrix(const std::vector<TrafficSketch>& archive,
                             const std::vector<SessionRecord>& sessions,
                             uint32_t dst_as, uint16_t port, int64_t from_day,
                             int64_t to_day, const std::vector<uint32_t>& src_sample) {
    if (to_day < from_day) {
        throw ConfigError("matrix day range is empty (to < from)");
    }
    std::set<int64_t> archive_days;
    for (const auto& sketch : archive) {
        archive_days.insert(sketch.interval_start / kSecondsPerDay);
    }
    std::string missing;
    for (int64_t day = from_day; day <= to_day; ++day) {
        if (!archive_days.count(day)) {
            if (!missing.empty()) {
                missing += ", ";
            }
            missing += format_day(day);
        }
    }
    if (!missing.empty()) {
        throw ConfigError("sketch archive does not cover: " + missing);
    }

    TrafficMatrix matrix;
    matrix.dst_as = dst_as;
    matrix.port = port;
    for (int64_t day = from_day; day <= to_day; ++day) {
        matrix.days.push_back(day);
    }

    std::set<uint32_t> sources(src_sample.begin(), src_sample.end());
    bool collect_sources = sources.empty();
    for (const auto& sketch : archive) {
        if (sketch.src_port != port || sketch.dst_as != dst_as) {
            continue;
        }
        int64_t day = sketch.interval_start / kSecondsPerDay;
        if (day < from_day || day > to_day) {
            continue;
        }
        if (collect_sources) {
            for (const auto& [src_as, bytes] : sketch.per_src) {
                if (bytes > 0) {
                    sources.insert(src_as);
                }
            }
        }
        if (interval_excluded(sketch.interval_start, port, dst_as, sessions)) {
            matrix.excluded_bytes += sketch.bytes;
            continue;
        }
        matrix.included_bytes += sketch.bytes;
        for (const auto& [src_as, bytes] : sketch.per_src) {
            if (bytes > 0 && (collect_sources || sources.count(src_as))) {
                matrix.cell_bytes[{src_as, day}] += bytes;
            }
        }
    }
    matrix.src_ases.assign(sources.begin(), sources.end());
    return matrix;
}

std::string TrafficMatrix::to_csv() const {
    std::ostringstream out;
    out << "src_as";
    for (int64_t day : days) {
        out << ',' << format_day(day);
    }
    out << '\n';
    out << std::fixed << std::setprecision(6);
    for (uint32_t src_as : src_ases) {
        out << src_as;
        for (int64_t day : days) {
            auto it = cell_bytes.find({src_as, day});
            double mbytes =
                it == cell_bytes.end() ? 0.0 : static_cast<double>(it->second) / 1e6;
            out << ',' << mbytes;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace reflectmon
