#include "reflectmon/replay.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reflectmon/util.hpp"

namespace reflectmon {

namespace {

using nlohmann::json;

uint64_t require_u64(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ConfigError(where + ": missing key \"" + key + "\"");
    }
    bool ok = it->is_number_unsigned() ||
              (it->is_number_integer() && it->get<int64_t>() >= 0);
    if (!ok) {
        throw ConfigError(where + ": key \"" + key + "\" must be a non-negative integer");
    }
    return it->get<uint64_t>();
}

uint32_t require_ip(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ConfigError(where + ": missing key \"" + key + "\"");
    }
    if (!it->is_string()) {
        throw ConfigError(where + ": key \"" + key + "\" must be a dotted-quad string");
    }
    auto text = it->get<std::string>();
    auto ip = parse_ipv4(text);
    if (!ip) {
        throw ConfigError(where + ": key \"" + key + "\" is not an IPv4 address: " + text);
    }
    return *ip;
}

uint16_t require_port(const json& obj, const char* key, const std::string& where) {
    uint64_t v = require_u64(obj, key, where);
    if (v > 65535) {
        throw ConfigError(where + ": key \"" + key + "\" out of port range: " +
                          std::to_string(v));
    }
    return static_cast<uint16_t>(v);
}

}  // namespace

FlowRecord parse_flow_line(const std::string& line, const std::string& where) {
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw ConfigError(where + ": not a JSON object");
    }
    auto ts_it = obj.find("ts");
    if (ts_it == obj.end()) {
        throw ConfigError(where + ": missing key \"ts\"");
    }
    if (!ts_it->is_number_integer()) {
        throw ConfigError(where + ": key \"ts\" must be an integer");
    }
    int64_t ts = ts_it->get<int64_t>();
    if (ts < 0) {
        throw ConfigError(where + ": negative timestamp " + std::to_string(ts));
    }

    FlowRecord rec;
    rec.timestamp = ts;
    rec.src_ip = require_ip(obj, "src_ip", where);
    rec.src_port = require_port(obj, "src_port", where);
    rec.dst_ip = require_ip(obj, "dst_ip", where);
    rec.dst_port = require_port(obj, "dst_port", where);
    uint64_t proto = require_u64(obj, "proto", where);
    if (proto > 255) {
        throw ConfigError(where + ": key \"proto\" out of range: " + std::to_string(proto));
    }
    rec.protocol = static_cast<uint8_t>(proto);
    rec.packets = require_u64(obj, "packets", where);
    rec.bytes = require_u64(obj, "bytes", where);
    rec.adj_packets = rec.packets;
    rec.adj_bytes = rec.bytes;
    return rec;
}

std::string format_flow_line(const FlowRecord& rec) {
    // Hand-rolled for stable key order (diff-able output).
    std::ostringstream out;
    out << "{\"ts\":" << rec.timestamp
        << ",\"src_ip\":\"" << format_ipv4(rec.src_ip) << '"'
        << ",\"src_port\":" << rec.src_port
        << ",\"dst_ip\":\"" << format_ipv4(rec.dst_ip) << '"'
        << ",\"dst_port\":" << rec.dst_port
        << ",\"proto\":" << static_cast<unsigned>(rec.protocol)
        << ",\"packets\":" << rec.packets
        << ",\"bytes\":" << rec.bytes << '}';
    return out.str();
}

std::vector<FlowRecord> read_replay_stream(std::istream& in, const std::string& name) {
    std::vector<FlowRecord> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        records.push_back(parse_flow_line(line, name + ":" + std::to_string(lineno)));
    }
    return records;
}

std::vector<FlowRecord> read_replay_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open replay file: " + path);
    }
    return read_replay_stream(in, path);
}

void write_replay_file(const std::string& path, const std::vector<FlowRecord>& records) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    for (const auto& rec : records) {
        out << format_flow_line(rec) << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

}  // namespace reflectmon
