#include "reflectmon/aggregation.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reflectmon/util.hpp"

namespace reflectmon {

MonitoredPortTable MonitoredPortTable::defaults() {
    auto range = [](double lo, double hi) { return std::make_pair(lo, hi); };
    auto single = [](double v) { return std::make_pair(v, v); };
    std::vector<MonitoredPort> rows = {
        {53, "DNS", range(28, 54)},
        {123, "NTP", single(556.9)},
        {389, "CLDAP", range(56, 70)},
        {19, "CharGen", single(358.8)},
        {11211, "Memcached", range(10000, 51000)},
        {111, "SunRPC", range(7, 28)},
        {1900, "SSDP", single(30.8)},
        {161, "SNMP", single(6.3)},
        {27005, "SRCDS", std::nullopt},
        {20800, "CallOfDuty", std::nullopt},
        {137, "NETBIOS", single(3.8)},
        {520, "RIP", single(131.24)},
        {27960, "Quake", single(63.9)},
        {29015, "Steam", single(5.5)},
        {17, "QOTD", single(140.3)},
    };
    return from_rows(std::move(rows), "<defaults>");
}

MonitoredPortTable MonitoredPortTable::from_rows(std::vector<MonitoredPort> rows,
                                                 const std::string& name) {
    MonitoredPortTable table;
    for (const auto& row : rows) {
        if (!table.ports_.insert(row.port).second) {
            throw ConfigError("monitored-port table " + name + ": duplicate port " +
                              std::to_string(row.port));
        }
    }
    if (rows.empty()) {
        throw ConfigError("monitored-port table " + name + " is empty");
    }
    table.rows_ = std::move(rows);
    return table;
}

namespace {

std::optional<double> parse_double(std::string_view text) {
    double v = 0;
    auto [next, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || next != text.data() + text.size()) {
        return std::nullopt;
    }
    return v;
}

}  // namespace

MonitoredPortTable MonitoredPortTable::load(std::istream& in, const std::string& name) {
    std::vector<MonitoredPort> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream fields(line);
        uint32_t port = 0;
        std::string service, baf_text;
        if (!(fields >> port)) {
            continue;  // blank line
        }
        const std::string where = name + ":" + std::to_string(lineno);
        if (port > 65535) {
            throw ConfigError(where + ": port out of range");
        }
        if (!(fields >> service >> baf_text)) {
            throw ConfigError(where + ": expected \"port service baf\"");
        }
        MonitoredPort row;
        row.port = static_cast<uint16_t>(port);
        row.service = service;
        if (baf_text != "-") {
            auto dash = baf_text.find('-', 1);  // allow leading digit only
            std::optional<double> lo, hi;
            if (dash == std::string::npos) {
                lo = hi = parse_double(baf_text);
            } else {
                lo = parse_double(baf_text.substr(0, dash));
                hi = parse_double(baf_text.substr(dash + 1));
            }
            if (!lo || !hi) {
                throw ConfigError(where + ": bad amplification factor \"" + baf_text +
                                  "\"");
            }
            row.baf = std::make_pair(*lo, *hi);
        }
        rows.push_back(std::move(row));
    }
    return from_rows(std::move(rows), name);
}

MonitoredPortTable MonitoredPortTable::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open monitored-port file: " + path);
    }
    return load(in, path);
}

const MonitoredPort* MonitoredPortTable::find(uint16_t port) const {
    for (const auto& row : rows_) {
        if (row.port == port) {
            return &row;
        }
    }
    return nullptr;
}

SketchStore::SketchStore(AggregationConfig cfg) : cfg_(cfg) {
    if (cfg_.delta_t_seconds <= 0) {
        throw ConfigError("delta_t_seconds must be positive");
    }
    if (cfg_.late_grace_intervals < 0) {
        throw ConfigError("late_grace_intervals must be non-negative");
    }
}

bool SketchStore::fold(const AsFlow& flow) {
    int64_t bucket = bucket_of(flow.timestamp, cfg_.delta_t_seconds);
    if (last_closed_ && bucket <= *last_closed_) {
        ++counters_.flows_late_dropped;
        counters_.bytes_late_dropped += flow.bytes;
        return false;
    }
    auto& sketch = open_[bucket][SketchKey{flow.src_port, flow.dst_as}];
    if (sketch.bytes == 0 && sketch.per_src.empty()) {
        sketch.interval_start = bucket;
        sketch.src_port = flow.src_port;
        sketch.dst_as = flow.dst_as;
    }
    sketch.bytes += flow.bytes;
    sketch.per_src[flow.src_as] += flow.bytes;
    ++counters_.flows_folded;
    return true;
}

int64_t SketchStore::close_through_for(int64_t timestamp) const {
    int64_t cursor = bucket_of(timestamp, cfg_.delta_t_seconds);
    return cursor - (cfg_.late_grace_intervals + 1) * cfg_.delta_t_seconds;
}

bool SketchStore::close_next(std::optional<int64_t> close_through,
                             const std::set<SketchKey>& live_keys,
                             std::vector<TrafficSketch>& out) {
    int64_t next;
    if (last_closed_) {
        next = *last_closed_ + cfg_.delta_t_seconds;
    } else if (!open_.empty()) {
        next = open_.begin()->first;
    } else {
        return false;  // no reference point yet; nothing can be closed
    }
    if (close_through) {
        if (next > *close_through) {
            return false;
        }
    } else {
        // Flush mode: run through the newest open bucket, then stop.
        if (open_.empty() || next > open_.rbegin()->first) {
            return false;
        }
    }
    close_one(next, live_keys, out);
    return true;
}

void SketchStore::advance(int64_t timestamp, const std::set<SketchKey>& live_keys,
                          std::vector<TrafficSketch>& out) {
    int64_t close_through = close_through_for(timestamp);
    while (close_next(close_through, live_keys, out)) {
    }
}

void SketchStore::flush(const std::set<SketchKey>& live_keys,
                        std::vector<TrafficSketch>& out) {
    while (close_next(std::nullopt, live_keys, out)) {
    }
}

void SketchStore::close_one(int64_t interval, const std::set<SketchKey>& live_keys,
                            std::vector<TrafficSketch>& out) {
    auto it = open_.find(interval);
    std::map<SketchKey, TrafficSketch> sketches;
    if (it != open_.end()) {
        sketches = std::move(it->second);
        open_.erase(it);
    }
    for (const auto& key : live_keys) {
        if (sketches.find(key) == sketches.end()) {
            TrafficSketch zero;
            zero.interval_start = interval;
            zero.src_port = key.src_port;
            zero.dst_as = key.dst_as;
            sketches.emplace(key, std::move(zero));
            ++counters_.zero_sketches_emitted;
        }
    }
    for (auto& [key, sketch] : sketches) {
        out.push_back(std::move(sketch));
    }
    last_closed_ = interval;
    ++counters_.intervals_closed;
}

size_t SketchStore::open_sketch_count() const {
    size_t n = 0;
    for (const auto& [bucket, sketches] : open_) {
        n += sketches.size();
    }
    return n;
}

std::string to_jsonl(const TrafficSketch& sketch) {
    using ordered_json = nlohmann::ordered_json;
    ordered_json per_src;
    for (const auto& [src_as, bytes] : sketch.per_src) {
        per_src[std::to_string(src_as)] = bytes;
    }
    ordered_json obj{{"interval", sketch.interval_start},
                     {"src_port", sketch.src_port},
                     {"dst_as", sketch.dst_as},
                     {"bytes", sketch.bytes},
                     {"per_src", std::move(per_src)}};
    return obj.dump();
}

TrafficSketch sketch_from_jsonl(const std::string& line, const std::string& where) {
    auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw ConfigError(where + ": not a JSON object");
    }
    TrafficSketch sketch;
    try {
        sketch.interval_start = obj.at("interval").get<int64_t>();
        sketch.src_port = obj.at("src_port").get<uint16_t>();
        sketch.dst_as = obj.at("dst_as").get<uint32_t>();
        sketch.bytes = obj.at("bytes").get<uint64_t>();
        for (const auto& [key, value] : obj.at("per_src").items()) {
            sketch.per_src[static_cast<uint32_t>(std::stoul(key))] =
                value.get<uint64_t>();
        }
    } catch (const std::exception&) {
        throw ConfigError(where + ": malformed sketch record");
    }
    return sketch;
}

std::vector<TrafficSketch> read_sketch_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open sketch archive: " + path);
    }
    std::vector<TrafficSketch> sketches;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        sketches.push_back(sketch_from_jsonl(line, path + ":" + std::to_string(lineno)));
    }
    return sketches;
}

}  // namespace reflectmon
