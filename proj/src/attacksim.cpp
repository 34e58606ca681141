#include "reflectmon/attacksim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace reflectmon {

using nlohmann::json;

void Scenario::validate() const {
    if (duration_intervals <= 0) {
        throw ConfigError("scenario: duration_intervals must be positive");
    }
    if (delta_t_seconds <= 0) {
        throw ConfigError("scenario: delta_t_seconds must be positive");
    }
    if (start_time < 0) {
        throw ConfigError("scenario: start_time must be non-negative");
    }
    for (const auto& entry : baseline) {
        if (entry.src_ases.empty()) {
            throw ConfigError("scenario: baseline entry with no source ASes");
        }
        if (entry.mean_bytes < 0) {
            throw ConfigError("scenario: baseline mean_bytes must be non-negative");
        }
        if (entry.jitter < 0 || entry.jitter >= 1) {
            throw ConfigError("scenario: baseline jitter must be in [0,1)");
        }
    }
    for (const auto& attack : attacks) {
        if (attack.ports.empty()) {
            throw ConfigError("scenario: attack with no ports");
        }
        if (attack.end_interval <= attack.start_interval) {
            throw ConfigError("scenario: attack end_interval must exceed start_interval");
        }
        if (attack.total_bps <= 0) {
            throw ConfigError("scenario: attack total_bps must be positive");
        }
        if (attack.n_sources < 1) {
            throw ConfigError("scenario: attack n_sources must be at least 1");
        }
        if (attack.share == ShareDistribution::zipf && attack.zipf_s <= 0) {
            throw ConfigError("scenario: zipf_s must be positive");
        }
    }
}

namespace {

template <typename T>
T json_get(const json& obj, const char* key, const std::string& name) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ConfigError(name + ": missing key \"" + key + "\"");
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(name + ": key \"" + key + "\" has the wrong type");
    }
}

template <typename T>
T json_get_or(const json& obj, const char* key, T fallback, const std::string& name) {
    if (!obj.contains(key)) {
        return fallback;
    }
    return json_get<T>(obj, key, name);
}

}  // namespace

Scenario Scenario::from_json_text(const std::string& text, const std::string& name) {
    json obj = json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw ConfigError(name + ": not a JSON object");
    }
    Scenario scenario;
    scenario.seed = json_get<uint64_t>(obj, "seed", name);
    scenario.duration_intervals = json_get<int64_t>(obj, "duration_intervals", name);
    scenario.delta_t_seconds =
        json_get_or<int64_t>(obj, "delta_t_seconds", scenario.delta_t_seconds, name);
    scenario.start_time =
        json_get_or<int64_t>(obj, "start_time", scenario.start_time, name);
    if (obj.contains("baseline")) {
        if (!obj["baseline"].is_array()) {
            throw ConfigError(name + ": \"baseline\" must be an array");
        }
        for (const auto& entry : obj["baseline"]) {
            BaselineSpec spec;
            spec.src_ases = json_get<std::vector<uint32_t>>(entry, "src_ases", name);
            spec.dst_as = json_get<uint32_t>(entry, "dst_as", name);
            spec.port = json_get<uint16_t>(entry, "port", name);
            spec.mean_bytes = json_get<double>(entry, "mean_bytes", name);
            spec.jitter = json_get_or<double>(entry, "jitter", 0.0, name);
            scenario.baseline.push_back(std::move(spec));
        }
    }
    if (obj.contains("attacks")) {
        if (!obj["attacks"].is_array()) {
            throw ConfigError(name + ": \"attacks\" must be an array");
        }
        for (const auto& entry : obj["attacks"]) {
            AttackSpec spec;
            spec.dst_as = json_get<uint32_t>(entry, "dst_as", name);
            spec.ports = json_get<std::vector<uint16_t>>(entry, "ports", name);
            spec.start_interval = json_get<int64_t>(entry, "start_interval", name);
            spec.end_interval = json_get<int64_t>(entry, "end_interval", name);
            spec.total_bps = json_get<double>(entry, "total_bps", name);
            spec.n_sources = json_get<uint32_t>(entry, "n_sources", name);
            spec.source_as_base =
                json_get_or<uint32_t>(entry, "source_as_base", spec.source_as_base, name);
            auto share = json_get_or<std::string>(entry, "share", "uniform", name);
            if (share == "uniform") {
                spec.share = ShareDistribution::uniform;
            } else if (share == "zipf") {
                spec.share = ShareDistribution::zipf;
            } else {
                throw ConfigError(name + ": unknown share \"" + share + "\"");
            }
            spec.zipf_s = json_get_or<double>(entry, "zipf_s", spec.zipf_s, name);
            auto ramp = json_get_or<std::string>(entry, "ramp", "step", name);
            if (ramp == "step") {
                spec.ramp = AttackRamp::step;
            } else if (ramp == "linear") {
                spec.ramp = AttackRamp::linear;
            } else {
                throw ConfigError(name + ": unknown ramp \"" + ramp + "\"");
            }
            scenario.attacks.push_back(std::move(spec));
        }
    }
    scenario.validate();
    return scenario;
}

Scenario Scenario::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open scenario file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str(), path);
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::mt19937_64 interval_rng(uint64_t seed, int64_t interval_index) {
    uint64_t mixed = splitmix64(seed ^ splitmix64(static_cast<uint64_t>(interval_index)));
    return std::mt19937_64(mixed);
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<uint64_t> attack_share_bytes(double total_bytes, uint32_t n_sources,
                                         ShareDistribution share, double zipf_s) {
    std::vector<uint64_t> shares(n_sources, 0);
    if (total_bytes <= 0 || n_sources == 0) {
        return shares;
    }
    if (share == ShareDistribution::uniform) {
        auto each = static_cast<uint64_t>(total_bytes / n_sources);
        std::fill(shares.begin(), shares.end(), each);
        return shares;
    }
    double weight_sum = 0.0;
    std::vector<double> weights(n_sources);
    for (uint32_t i = 0; i < n_sources; ++i) {
        weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), zipf_s);
        weight_sum += weights[i];
    }
    for (uint32_t i = 0; i < n_sources; ++i) {
        shares[i] = static_cast<uint64_t>(total_bytes * weights[i] / weight_sum);
    }
    return shares;
}

namespace {

// AS -> /24 assignment in first-appearance order across the scenario.
std::map<uint32_t, uint32_t> as_slot_map(const Scenario& scenario) {
    std::map<uint32_t, uint32_t> slot;
    uint32_t next = 0;
    auto assign = [&](uint32_t as) {
        if (slot.emplace(as, next).second) {
            ++next;
        }
    };
    for (const auto& entry : scenario.baseline) {
        for (uint32_t as : entry.src_ases) {
            assign(as);
        }
        assign(entry.dst_as);
    }
    for (const auto& attack : scenario.attacks) {
        assign(attack.dst_as);
        for (uint32_t i = 0; i < attack.n_sources; ++i) {
            assign(attack.source_as_base + i);
        }
    }
    if (next > 65536) {
        throw ConfigError("scenario references more than 65536 distinct ASes");
    }
    return slot;
}

uint32_t slot_network(uint32_t slot) {
    // 10.(slot/256).(slot%256).0/24
    return (10u << 24) | ((slot / 256) << 16) | ((slot % 256) << 8);
}

uint32_t host_in_slot(uint32_t slot, std::mt19937_64& rng) {
    return slot_network(slot) | (1 + static_cast<uint32_t>(rng() % 254));
}

uint16_t ephemeral_port(std::mt19937_64& rng) {
    return static_cast<uint16_t>(1024 + rng() % (65536 - 1024));
}

}  // namespace

std::vector<std::pair<Cidr, uint32_t>> scenario_prefix_entries(const Scenario& scenario) {
    auto slots = as_slot_map(scenario);
    std::vector<std::pair<Cidr, uint32_t>> entries;
    entries.reserve(slots.size());
    // Emit in slot (first-appearance) order so the file is stable.
    std::vector<std::pair<uint32_t, uint32_t>> ordered(slots.begin(), slots.end());
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    for (const auto& [as, slot] : ordered) {
        entries.emplace_back(Cidr::make(slot_network(slot), 24), as);
    }
    return entries;
}

void write_prefix_table_file(const std::string& path,
                             const std::vector<std::pair<Cidr, uint32_t>>& entries) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    for (const auto& [prefix, as] : entries) {
        out << prefix.to_string() << ' ' << as << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

GenerateResult generate(const Scenario& scenario, const MonitoredPortTable* ports) {
    scenario.validate();
    GenerateResult result;
    if (ports) {
        for (const auto& attack : scenario.attacks) {
            for (uint16_t port : attack.ports) {
                if (!ports->contains(port)) {
                    result.warnings.push_back(
                        "attack port " + std::to_string(port) +
                        " is not monitored; the detector will not see this attack");
                }
            }
        }
    }
    auto slots = as_slot_map(scenario);
    auto slot_of = [&](uint32_t as) { return slots.at(as); };

    for (int64_t i = 0; i < scenario.duration_intervals; ++i) {
        auto rng = interval_rng(scenario.seed, i);
        int64_t t = scenario.start_time + i * scenario.delta_t_seconds;
        for (const auto& entry : scenario.baseline) {
            for (uint32_t src_as : entry.src_ases) {
                double factor = 1.0;
                if (entry.jitter > 0) {
                    factor = 1.0 - entry.jitter + 2.0 * entry.jitter * uniform01(rng);
                }
                auto bytes = static_cast<uint64_t>(
                    std::llround(entry.mean_bytes * factor));
                if (bytes == 0) {
                    continue;
                }
                FlowRecord rec;
                rec.timestamp = t;
                rec.src_ip = host_in_slot(slot_of(src_as), rng);
                rec.src_port = entry.port;
                rec.dst_ip = host_in_slot(slot_of(entry.dst_as), rng);
                rec.dst_port = ephemeral_port(rng);
                rec.protocol = 17;
                rec.bytes = bytes;
                rec.packets = std::max<uint64_t>(1, bytes / 1000);
                rec.adj_bytes = rec.bytes;
                rec.adj_packets = rec.packets;
                result.flows.push_back(rec);
            }
        }
        for (const auto& attack : scenario.attacks) {
            if (i < attack.start_interval || i >= attack.end_interval) {
                continue;
            }
            double factor = 1.0;
            if (attack.ramp == AttackRamp::linear) {
                factor = static_cast<double>(i - attack.start_interval + 1) /
                         static_cast<double>(attack.end_interval - attack.start_interval);
            }
            double total_bytes = attack.total_bps *
                                 static_cast<double>(scenario.delta_t_seconds) / 8.0 *
                                 factor;
            auto shares = attack_share_bytes(total_bytes, attack.n_sources,
                                             attack.share, attack.zipf_s);
            for (uint16_t port : attack.ports) {
                for (uint32_t s = 0; s < attack.n_sources; ++s) {
                    uint64_t bytes = shares[s];
                    if (bytes == 0) {
                        continue;
                    }
                    uint32_t src_as = attack.source_as_base + s;
                    FlowRecord rec;
                    rec.timestamp = t;
                    rec.src_ip = host_in_slot(slot_of(src_as), rng);
                    rec.src_port = port;
                    rec.dst_ip = host_in_slot(slot_of(attack.dst_as), rng);
                    rec.dst_port = ephemeral_port(rng);
                    rec.protocol = 17;
                    rec.bytes = bytes;
                    rec.packets = std::max<uint64_t>(1, bytes / 1000);
                    rec.adj_bytes = rec.bytes;
                    rec.adj_packets = rec.packets;
                    result.flows.push_back(rec);
                }
            }
        }
    }
    return result;
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    put_u32(out, static_cast<uint32_t>(v >> 32));
    put_u32(out, static_cast<uint32_t>(v));
}

// type/length pairs, in record order.
constexpr std::pair<uint16_t, uint16_t> kTemplateLayout[] = {
    {8, 4},   // IPv4 source address
    {7, 2},   // L4 source port
    {12, 4},  // IPv4 destination address
    {11, 2},  // L4 destination port
    {4, 1},   // protocol
    {2, 8},   // packet count
    {1, 8},   // byte count
};

void append_template_flowset(std::vector<uint8_t>& out, uint16_t template_id) {
    size_t start = out.size();
    put_u16(out, 0);  // template flowset id
    put_u16(out, 0);  // length patched below
    put_u16(out, template_id);
    put_u16(out, static_cast<uint16_t>(std::size(kTemplateLayout)));
    for (const auto& [type, length] : kTemplateLayout) {
        put_u16(out, type);
        put_u16(out, length);
    }
    uint16_t len = static_cast<uint16_t>(out.size() - start);
    out[start + 2] = static_cast<uint8_t>(len >> 8);
    out[start + 3] = static_cast<uint8_t>(len);
}

void append_data_flowset(std::vector<uint8_t>& out, uint16_t template_id,
                         const FlowRecord* records, size_t count) {
    size_t start = out.size();
    put_u16(out, template_id);
    put_u16(out, 0);  // length patched below
    for (size_t i = 0; i < count; ++i) {
        const FlowRecord& rec = records[i];
        put_u32(out, rec.src_ip);
        put_u16(out, rec.src_port);
        put_u32(out, rec.dst_ip);
        put_u16(out, rec.dst_port);
        out.push_back(rec.protocol);
        put_u64(out, rec.packets);
        put_u64(out, rec.bytes);
    }
    while ((out.size() - start) % 4 != 0) {
        out.push_back(0);  // pad to a 4-byte boundary
    }
    uint16_t len = static_cast<uint16_t>(out.size() - start);
    out[start + 2] = static_cast<uint8_t>(len >> 8);
    out[start + 3] = static_cast<uint8_t>(len);
}

}  // namespace

std::vector<std::vector<uint8_t>> encode_netflow_v9(
    const std::vector<FlowRecord>& flows, const NetflowEncodeOptions& options) {
    // Group by export timestamp; datagrams go out in time order.
    std::map<int64_t, std::vector<FlowRecord>> by_ts;
    for (const auto& rec : flows) {
        by_ts[rec.timestamp].push_back(rec);
    }
    std::vector<std::vector<uint8_t>> datagrams;
    uint32_t sequence = 0;
    size_t since_template = options.template_refresh_datagrams;  // force on first
    for (const auto& [ts, group] : by_ts) {
        for (size_t offset = 0; offset < group.size();
             offset += options.max_records_per_datagram) {
            size_t count =
                std::min(options.max_records_per_datagram, group.size() - offset);
            bool with_template = since_template >= options.template_refresh_datagrams;
            std::vector<uint8_t> datagram;
            put_u16(datagram, 9);  // version
            put_u16(datagram, static_cast<uint16_t>(count + (with_template ? 1 : 0)));
            put_u32(datagram, static_cast<uint32_t>(sequence * 1000));  // sysUptime ms
            put_u32(datagram, static_cast<uint32_t>(ts));
            put_u32(datagram, sequence);
            put_u32(datagram, options.source_id);
            if (with_template) {
                append_template_flowset(datagram, options.template_id);
                since_template = 0;
            }
            append_data_flowset(datagram, options.template_id, group.data() + offset,
                                count);
            ++sequence;
            ++since_template;
            datagrams.push_back(std::move(datagram));
        }
    }
    return datagrams;
}

}  // namespace reflectmon
