#include "reflectmon/detection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reflectmon/util.hpp"

namespace reflectmon {

namespace {

double parse_double_kv(const std::map<std::string, std::string>& kv, const char* key,
                       double fallback, const std::string& name) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        return fallback;
    }
    const std::string& text = it->second;
    double v = 0;
    auto [next, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || next != text.data() + text.size()) {
        throw ConfigError(name + ": key \"" + key + "\" is not a number: " + text);
    }
    return v;
}

int64_t parse_int_kv(const std::map<std::string, std::string>& kv, const char* key,
                     int64_t fallback, const std::string& name) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        return fallback;
    }
    const std::string& text = it->second;
    int64_t v = 0;
    auto [next, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || next != text.data() + text.size()) {
        throw ConfigError(name + ": key \"" + key + "\" is not an integer: " + text);
    }
    return v;
}

}  // namespace

void DetectorConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must be in (0,1)");
    }
    if (!(theta > 0.0)) {
        throw ConfigError("theta must be positive");
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ConfigError("tau must be in (0,1)");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    if (!(nu_bps > 0.0)) {
        throw ConfigError("nu_bps must be positive");
    }
    if (!(entropy_h >= 0.0 && entropy_h < 1.0)) {
        throw ConfigError("entropy_h must be in [0,1)");
    }
    if (delta_t_seconds <= 0) {
        throw ConfigError("delta_t_seconds must be positive");
    }
}

DetectorConfig DetectorConfig::from_kv(const std::map<std::string, std::string>& kv,
                                       const std::string& name) {
    DetectorConfig cfg;
    cfg.alpha = parse_double_kv(kv, "alpha", cfg.alpha, name);
    cfg.theta = parse_double_kv(kv, "theta", cfg.theta, name);
    cfg.tau = parse_double_kv(kv, "tau", cfg.tau, name);
    cfg.epsilon = parse_double_kv(kv, "epsilon", cfg.epsilon, name);
    cfg.nu_bps = parse_double_kv(kv, "nu_bps", cfg.nu_bps, name);
    cfg.entropy_h = parse_double_kv(kv, "entropy_h", cfg.entropy_h, name);
    cfg.delta_t_seconds =
        parse_int_kv(kv, "delta_t_seconds", cfg.delta_t_seconds, name);
    int64_t warmup = parse_int_kv(
        kv, "warmup_intervals", static_cast<int64_t>(cfg.warmup_intervals), name);
    if (warmup < 0) {
        throw ConfigError(name + ": warmup_intervals must be non-negative");
    }
    cfg.warmup_intervals = static_cast<uint64_t>(warmup);
    cfg.validate();
    return cfg;
}

EwmaModel ewma_update(const EwmaModel& model, double b, const DetectorConfig& cfg) {
    EwmaModel out = model;
    double diff = b - model.mu;
    out.mu = cfg.alpha * model.mu + (1.0 - cfg.alpha) * b;
    out.var = (1.0 - cfg.alpha) * (model.var + cfg.alpha * diff * diff);
    return out;
}

DeviationScore score(const EwmaModel& model, double b, const DetectorConfig& cfg) {
    DeviationScore s;
    s.b = b;
    s.mu_snapshot = model.mu;
    s.sigma_snapshot = std::sqrt(model.var);
    double excess = b - (model.mu + cfg.theta * s.sigma_snapshot);
    s.delta = excess > 0.0 ? excess / (b + cfg.epsilon) : 0.0;
    return s;
}

double normalized_entropy(const std::map<uint32_t, uint64_t>& per_src) {
    double total = 0.0;
    size_t n = 0;
    for (const auto& [as, bytes] : per_src) {
        if (bytes > 0) {
            total += static_cast<double>(bytes);
            ++n;
        }
    }
    if (n <= 1 || total <= 0.0) {
        return 0.0;
    }
    double h = 0.0;
    for (const auto& [as, bytes] : per_src) {
        if (bytes == 0) {
            continue;
        }
        double p = static_cast<double>(bytes) / total;
        h -= p * std::log(p);
    }
    // Exactly uniform shares can land a hair above 1 in floating point.
    return std::min(1.0, h / std::log(static_cast<double>(n)));
}

bool volume_gate(const TrafficSketch& sketch, const DetectorConfig& cfg) {
    return to_bps(sketch.bytes, cfg.delta_t_seconds) >= cfg.nu_bps;
}

std::pair<double, bool> entropy_gate(const TrafficSketch& sketch,
                                     const DetectorConfig& cfg) {
    double h = normalized_entropy(sketch.per_src);
    return {h, h > cfg.entropy_h};
}

const char* to_string(FailedGate gate) {
    return gate == FailedGate::volume ? "volume" : "entropy";
}

Detector::Detector(DetectorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

StepEvents Detector::step(const TrafficSketch& sketch) {
    KeyState& st = keys_[sketch.key()];
    if (st.last_interval && sketch.interval_start <= *st.last_interval) {
        throw ContractViolation(
            "sketch intervals out of order for port " +
            std::to_string(sketch.src_port) + " dstAS " +
            std::to_string(sketch.dst_as) + ": " +
            std::to_string(sketch.interval_start) + " after " +
            std::to_string(*st.last_interval));
    }
    st.last_interval = sketch.interval_start;

    StepEvents events;
    double b = static_cast<double>(sketch.bytes);

    if (st.intervals_seen < cfg_.warmup_intervals) {
        ++st.intervals_seen;
        st.model = ewma_update(st.model, b, cfg_);
        st.model.frozen_since = sketch.interval_start;
        return events;
    }
    ++st.intervals_seen;

    DeviationScore sc = score(st.model, b, cfg_);
    bool anomalous = sc.delta > cfg_.tau;

    if (anomalous) {
        if (!st.model.frozen) {
            st.model.frozen = true;
            st.model.anomaly_start = sketch.interval_start;
            ActiveSession session;
            session.id = next_session_id_++;
            session.start = sketch.interval_start;
            st.session = session;
        }
        ActiveSession& session = *st.session;
        session.last_anomalous = sketch.interval_start;
        for (const auto& [src_as, bytes] : sketch.per_src) {
            if (bytes > 0) {
                session.sources.insert(src_as);
            }
        }
        double bps = to_bps(sketch.bytes, cfg_.delta_t_seconds);
        auto [entropy, entropy_pass] = entropy_gate(sketch, cfg_);
        if (!volume_gate(sketch, cfg_)) {
            // Volume is checked first; an interval failing both gates is
            // logged once, as a volume failure.
            AnomalyLog log;
            log.interval = sketch.interval_start;
            log.dst_as = sketch.dst_as;
            log.src_port = sketch.src_port;
            log.volume_bps = bps;
            log.delta = sc.delta;
            log.entropy = entropy;
            log.failed_gate = FailedGate::volume;
            log.session_id = session.id;
            events.anomaly_log = std::move(log);
            ++session.n_logs;
        } else if (!entropy_pass) {
            AnomalyLog log;
            log.interval = sketch.interval_start;
            log.dst_as = sketch.dst_as;
            log.src_port = sketch.src_port;
            log.volume_bps = bps;
            log.delta = sc.delta;
            log.entropy = entropy;
            log.failed_gate = FailedGate::entropy;
            log.session_id = session.id;
            events.anomaly_log = std::move(log);
            ++session.n_logs;
        } else {
            DrdosAlert alert;
            alert.interval = sketch.interval_start;
            alert.dst_as = sketch.dst_as;
            alert.src_port = sketch.src_port;
            alert.volume_bps = bps;
            alert.delta = sc.delta;
            alert.entropy = entropy;
            alert.session_id = session.id;
            alert.source_breakdown.reserve(sketch.per_src.size());
            for (const auto& [src_as, bytes] : sketch.per_src) {
                if (bytes > 0) {
                    alert.source_breakdown.push_back(SourceShare{src_as, bytes});
                }
            }
            std::stable_sort(alert.source_breakdown.begin(),
                             alert.source_breakdown.end(),
                             [](const SourceShare& a, const SourceShare& b) {
                                 if (a.bytes != b.bytes) return a.bytes > b.bytes;
                                 return a.src_as < b.src_as;
                             });
            session.peak_bps = std::max(session.peak_bps, bps);
            ++session.n_alerts;
            events.alert = std::move(alert);
        }
    } else {
        if (st.model.frozen) {
            st.model.frozen = false;
            st.model.anomaly_start.reset();
            // The measurement that ends the anomaly is clean; it feeds the
            // model again.
            st.model = ewma_update(st.model, b, cfg_);
            st.model.frozen_since = sketch.interval_start;
            events.session_end =
                finalize(sketch.key(), *st.session, sketch.interval_start, false);
            st.session.reset();
        } else {
            st.model = ewma_update(st.model, b, cfg_);
            st.model.frozen_since = sketch.interval_start;
        }
    }
    return events;
}

SessionRecord Detector::finalize(const SketchKey& key, const ActiveSession& session,
                                 int64_t end, bool truncated) const {
    SessionRecord rec;
    rec.session_id = session.id;
    rec.dst_as = key.dst_as;
    rec.src_port = key.src_port;
    rec.start = session.start;
    rec.end = end;
    rec.truncated = truncated;
    int64_t span_seconds =
        truncated ? end + cfg_.delta_t_seconds - session.start : end - session.start;
    rec.duration_minutes = static_cast<double>(span_seconds) / 60.0;
    rec.peak_volume_bps = session.peak_bps;
    rec.n_sources = session.sources.size();
    rec.n_alerts = session.n_alerts;
    rec.n_anomaly_logs = session.n_logs;
    return rec;
}

std::vector<SessionRecord> Detector::flush() {
    std::vector<SessionRecord> out;
    for (auto& [key, st] : keys_) {
        if (st.session) {
            out.push_back(finalize(key, *st.session, st.session->last_anomalous, true));
            st.session.reset();
        }
    }
    return out;
}

std::set<SketchKey> Detector::live_keys() const {
    std::set<SketchKey> keys;
    for (const auto& [key, st] : keys_) {
        keys.insert(key);
    }
    return keys;
}

const EwmaModel* Detector::model(SketchKey key) const {
    auto it = keys_.find(key);
    return it == keys_.end() ? nullptr : &it->second.model;
}

uint64_t correlate_multivector(std::vector<SessionRecord>& sessions) {
    size_t n = sessions.size();
    std::vector<size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    auto unite = [&](size_t a, size_t b) { parent[find(a)] = find(b); };

    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            if (sessions[i].dst_as != sessions[j].dst_as) {
                continue;
            }
            bool overlap = sessions[i].start <= sessions[j].end &&
                           sessions[j].start <= sessions[i].end;
            if (overlap) {
                unite(i, j);
            }
        }
    }

    std::map<size_t, uint64_t> component_size;
    for (size_t i = 0; i < n; ++i) {
        ++component_size[find(i)];
    }
    std::map<size_t, uint64_t> group_of_root;
    uint64_t next_group = 1;
    for (size_t i = 0; i < n; ++i) {
        size_t root = find(i);
        if (component_size[root] < 2) {
            sessions[i].multi_vector_group.reset();
            continue;
        }
        auto [it, inserted] = group_of_root.try_emplace(root, next_group);
        if (inserted) {
            ++next_group;
        }
        sessions[i].multi_vector_group = it->second;
    }
    return next_group - 1;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json breakdown_json(const std::vector<SourceShare>& breakdown) {
    ordered_json arr = ordered_json::array();
    for (const auto& share : breakdown) {
        arr.push_back(ordered_json{{"src_as", share.src_as}, {"bytes", share.bytes}});
    }
    return arr;
}

}  // namespace

std::string to_jsonl(const DrdosAlert& alert) {
    ordered_json obj{{"interval", alert.interval},
                     {"dst_as", alert.dst_as},
                     {"src_port", alert.src_port},
                     {"volume_bps", alert.volume_bps},
                     {"delta", alert.delta},
                     {"entropy", alert.entropy},
                     {"source_breakdown", breakdown_json(alert.source_breakdown)},
                     {"session_id", alert.session_id}};
    return obj.dump();
}

std::string to_jsonl(const AnomalyLog& log) {
    ordered_json obj{{"interval", log.interval},
                     {"dst_as", log.dst_as},
                     {"src_port", log.src_port},
                     {"volume_bps", log.volume_bps},
                     {"delta", log.delta},
                     {"entropy", log.entropy},
                     {"failed_gate", to_string(log.failed_gate)},
                     {"session_id", log.session_id}};
    return obj.dump();
}

std::string to_jsonl(const SessionRecord& session) {
    ordered_json obj{{"session_id", session.session_id},
                     {"dst_as", session.dst_as},
                     {"src_port", session.src_port},
                     {"start", session.start},
                     {"end", session.end},
                     {"truncated", session.truncated},
                     {"duration_minutes", session.duration_minutes},
                     {"peak_volume_bps", session.peak_volume_bps},
                     {"n_sources", session.n_sources},
                     {"n_alerts", session.n_alerts},
                     {"n_anomaly_logs", session.n_anomaly_logs}};
    if (session.multi_vector_group) {
        obj["multi_vector_group"] = *session.multi_vector_group;
    }
    return obj.dump();
}

namespace {

nlohmann::json parse_object(const std::string& line, const std::string& where) {
    auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw ConfigError(where + ": not a JSON object");
    }
    return obj;
}

template <typename T>
T get_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ConfigError(where + ": missing key \"" + key + "\"");
    }
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + ": key \"" + key + "\" has the wrong type");
    }
}

}  // namespace

SessionRecord session_from_jsonl(const std::string& line, const std::string& where) {
    auto obj = parse_object(line, where);
    SessionRecord rec;
    rec.session_id = get_field<uint64_t>(obj, "session_id", where);
    rec.dst_as = get_field<uint32_t>(obj, "dst_as", where);
    rec.src_port = get_field<uint16_t>(obj, "src_port", where);
    rec.start = get_field<int64_t>(obj, "start", where);
    rec.end = get_field<int64_t>(obj, "end", where);
    rec.truncated = get_field<bool>(obj, "truncated", where);
    rec.duration_minutes = get_field<double>(obj, "duration_minutes", where);
    rec.peak_volume_bps = get_field<double>(obj, "peak_volume_bps", where);
    rec.n_sources = get_field<uint64_t>(obj, "n_sources", where);
    rec.n_alerts = get_field<uint64_t>(obj, "n_alerts", where);
    rec.n_anomaly_logs = get_field<uint64_t>(obj, "n_anomaly_logs", where);
    if (obj.contains("multi_vector_group") && !obj["multi_vector_group"].is_null()) {
        rec.multi_vector_group = get_field<uint64_t>(obj, "multi_vector_group", where);
    }
    return rec;
}

std::vector<SessionRecord> read_session_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open session log: " + path);
    }
    std::vector<SessionRecord> sessions;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        sessions.push_back(session_from_jsonl(line, path + ":" + std::to_string(lineno)));
    }
    return sessions;
}

DrdosAlert alert_from_jsonl(const std::string& line, const std::string& where) {
    auto obj = parse_object(line, where);
    DrdosAlert alert;
    alert.interval = get_field<int64_t>(obj, "interval", where);
    alert.dst_as = get_field<uint32_t>(obj, "dst_as", where);
    alert.src_port = get_field<uint16_t>(obj, "src_port", where);
    alert.volume_bps = get_field<double>(obj, "volume_bps", where);
    alert.delta = get_field<double>(obj, "delta", where);
    alert.entropy = get_field<double>(obj, "entropy", where);
    alert.session_id = get_field<uint64_t>(obj, "session_id", where);
    auto it = obj.find("source_breakdown");
    if (it == obj.end() || !it->is_array()) {
        throw ConfigError(where + ": missing or invalid \"source_breakdown\"");
    }
    for (const auto& entry : *it) {
        SourceShare share;
        share.src_as = get_field<uint32_t>(entry, "src_as", where);
        share.bytes = get_field<uint64_t>(entry, "bytes", where);
        alert.source_breakdown.push_back(share);
    }
    return alert;
}

std::vector<DrdosAlert> read_alert_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open alert log: " + path);
    }
    std::vector<DrdosAlert> alerts;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        alerts.push_back(alert_from_jsonl(line, path + ":" + std::to_string(lineno)));
    }
    return alerts;
}

}  // namespace reflectmon
