#include "reflectmon/asn_map.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace reflectmon {

void PrefixTable::insert(const Cidr& prefix, uint32_t asn) {
    int32_t cur = 0;
    for (int depth = 0; depth < prefix.len; ++depth) {
        int bit = (prefix.addr >> (31 - depth)) & 1;
        if (nodes_[cur].child[bit] < 0) {
            nodes_[cur].child[bit] = static_cast<int32_t>(nodes_.size());
            nodes_.emplace_back();
        }
        cur = nodes_[cur].child[bit];
    }
    nodes_[cur].asn = static_cast<int32_t>(asn);
}

PrefixTable PrefixTable::build(const std::map<Cidr, uint32_t>& deduped) {
    PrefixTable table;
    table.nodes_.emplace_back();  // root
    for (const auto& [prefix, asn] : deduped) {
        table.insert(prefix, asn);
        table.reverse_[asn].push_back(prefix);
    }
    table.entry_count_ = deduped.size();
    table.load_timestamp_ = std::chrono::duration_cast<std::chrono::seconds>(
                                std::chrono::system_clock::now().time_since_epoch())
                                .count();
    return table;
}

PrefixTable PrefixTable::load(std::istream& in, const std::string& name) {
    std::map<Cidr, uint32_t> deduped;
    uint64_t malformed = 0;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream fields(line);
        std::string cidr_text;
        if (!(fields >> cidr_text)) {
            continue;  // blank or comment-only
        }
        uint64_t asn = 0;
        std::string extra;
        if (!(fields >> asn) || asn > 0xFFFFFFFFull || (fields >> extra)) {
            ++malformed;
            continue;
        }
        auto prefix = Cidr::parse(cidr_text);
        if (!prefix) {
            ++malformed;
            continue;
        }
        deduped[*prefix] = static_cast<uint32_t>(asn);
    }
    if (deduped.empty()) {
        throw ConfigError("prefix table " + name + " is empty after load (" +
                          std::to_string(malformed) + " malformed lines)");
    }
    PrefixTable table = build(deduped);
    table.malformed_lines_ = malformed;
    return table;
}

PrefixTable PrefixTable::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open prefix table: " + path);
    }
    return load(in, path);
}

PrefixTable PrefixTable::from_entries(
    const std::vector<std::pair<Cidr, uint32_t>>& entries) {
    std::map<Cidr, uint32_t> deduped;
    for (const auto& [prefix, asn] : entries) {
        deduped[prefix] = asn;
    }
    if (deduped.empty()) {
        throw ConfigError("prefix table is empty");
    }
    return build(deduped);
}

uint32_t PrefixTable::lookup(uint32_t addr) const {
    int32_t cur = 0;
    int32_t best = nodes_[0].asn;
    for (int depth = 0; depth < 32; ++depth) {
        int bit = (addr >> (31 - depth)) & 1;
        cur = nodes_[cur].child[bit];
        if (cur < 0) {
            break;
        }
        if (nodes_[cur].asn >= 0) {
            best = nodes_[cur].asn;
        }
    }
    return best >= 0 ? static_cast<uint32_t>(best) : kUnmappedAs;
}

std::vector<Cidr> PrefixTable::reverse(uint32_t asn) const {
    auto it = reverse_.find(asn);
    if (it == reverse_.end()) {
        return {};
    }
    return it->second;
}

AsFlow map_flow(const FlowRecord& record, const PrefixTable& table) {
    AsFlow flow;
    flow.timestamp = record.timestamp;
    flow.src_as = table.lookup(record.src_ip);
    flow.src_port = record.src_port;
    flow.dst_as = table.lookup(record.dst_ip);
    flow.dst_port = record.dst_port;
    flow.packets = record.adj_packets;
    flow.bytes = record.adj_bytes;
    return flow;
}

}  // namespace reflectmon
