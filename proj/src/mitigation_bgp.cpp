#include "reflectmon/mitigation_bgp.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace reflectmon {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool touches_victim(const Cidr& announced, const std::vector<Cidr>& victim_prefixes) {
    // Equal, more-specific, or covering announcements all count: blackhole
    // announcements are often more-specifics of the victim prefix.
    for (const auto& victim : victim_prefixes) {
        if (victim.contains(announced) || announced.contains(victim)) {
            return true;
        }
    }
    return false;
}

}  // namespace

BgpUpdate bgp_update_from_jsonl(const std::string& line, const std::string& where) {
    auto obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw ConfigError(where + ": not a JSON object");
    }
    BgpUpdate update;
    if (!obj.contains("ts") || !obj["ts"].is_number_integer()) {
        throw ConfigError(where + ": missing or invalid \"ts\"");
    }
    update.ts = obj["ts"].get<int64_t>();
    if (!obj.contains("kind") || !obj["kind"].is_string()) {
        throw ConfigError(where + ": missing or invalid \"kind\"");
    }
    auto kind = obj["kind"].get<std::string>();
    if (kind == "announce") {
        update.kind = BgpKind::announce;
    } else if (kind == "withdraw") {
        update.kind = BgpKind::withdraw;
    } else {
        throw ConfigError(where + ": unknown kind \"" + kind + "\"");
    }
    if (!obj.contains("prefix") || !obj["prefix"].is_string()) {
        throw ConfigError(where + ": missing or invalid \"prefix\"");
    }
    auto prefix = Cidr::parse(obj["prefix"].get<std::string>());
    if (!prefix) {
        throw ConfigError(where + ": bad prefix \"" +
                          obj["prefix"].get<std::string>() + "\"");
    }
    update.prefix = *prefix;
    if (update.kind == BgpKind::announce) {
        if (!obj.contains("origin_as") || !obj["origin_as"].is_number()) {
            throw ConfigError(where + ": announce without \"origin_as\"");
        }
        update.origin_as = obj["origin_as"].get<uint32_t>();
        if (obj.contains("next_hop") && obj["next_hop"].is_string()) {
            auto hop = parse_ipv4(obj["next_hop"].get<std::string>());
            if (!hop) {
                throw ConfigError(where + ": bad next_hop \"" +
                                  obj["next_hop"].get<std::string>() + "\"");
            }
            update.next_hop = *hop;
        }
        if (obj.contains("communities")) {
            if (!obj["communities"].is_array()) {
                throw ConfigError(where + ": \"communities\" must be an array");
            }
            for (const auto& entry : obj["communities"]) {
                if (!entry.is_string()) {
                    throw ConfigError(where + ": community entries must be strings");
                }
                auto text = entry.get<std::string>();
                auto colon = text.find(':');
                if (colon == std::string::npos) {
                    throw ConfigError(where + ": community \"" + text +
                                      "\" is not \"asn:value\"");
                }
                try {
                    uint32_t asn =
                        static_cast<uint32_t>(std::stoul(text.substr(0, colon)));
                    uint32_t value =
                        static_cast<uint32_t>(std::stoul(text.substr(colon + 1)));
                    update.communities.emplace_back(asn, value);
                } catch (const std::exception&) {
                    throw ConfigError(where + ": bad community \"" + text + "\"");
                }
            }
        }
    }
    return update;
}

std::string to_jsonl(const BgpUpdate& update) {
    ordered_json obj;
    obj["ts"] = update.ts;
    obj["kind"] = update.kind == BgpKind::announce ? "announce" : "withdraw";
    obj["prefix"] = update.prefix.to_string();
    if (update.kind == BgpKind::announce) {
        obj["origin_as"] = update.origin_as.value_or(0);
        if (update.next_hop) {
            obj["next_hop"] = format_ipv4(*update.next_hop);
        }
        ordered_json communities = ordered_json::array();
        for (const auto& [asn, value] : update.communities) {
            communities.push_back(std::to_string(asn) + ":" + std::to_string(value));
        }
        obj["communities"] = communities;
    }
    return obj.dump();
}

std::vector<BgpUpdate> read_bgp_update_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open BGP update log: " + path);
    }
    std::vector<BgpUpdate> updates;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        updates.push_back(bgp_update_from_jsonl(line, path + ":" + std::to_string(lineno)));
    }
    std::stable_sort(updates.begin(), updates.end(),
                     [](const BgpUpdate& a, const BgpUpdate& b) { return a.ts < b.ts; });
    return updates;
}

AnalysisWindow window_for_session(const SessionRecord& session,
                                  const MitigationConfig& cfg) {
    return AnalysisWindow{session.start - cfg.pre_margin_seconds,
                          session.end + cfg.post_margin_seconds};
}

const char* to_string(FindingKind kind) {
    switch (kind) {
        case FindingKind::blackhole_nexthop:
            return "blackhole_nexthop";
        case FindingKind::blackhole_community:
            return "blackhole_community";
        case FindingKind::reroute:
            return "reroute";
    }
    return "unknown";
}

uint32_t blackhole_next_hop() {
    return *parse_ipv4("192.0.2.1");
}

std::vector<MitigationFinding> detect_blackholing(
    const std::vector<BgpUpdate>& updates, const std::vector<Cidr>& victim_prefixes,
    const AnalysisWindow& window, uint64_t session_id) {
    std::vector<MitigationFinding> findings;
    for (const auto& update : updates) {
        if (update.kind != BgpKind::announce || !window.contains(update.ts) ||
            !touches_victim(update.prefix, victim_prefixes)) {
            continue;
        }
        if (update.next_hop && *update.next_hop == blackhole_next_hop()) {
            MitigationFinding finding;
            finding.kind = FindingKind::blackhole_nexthop;
            finding.session_id = session_id;
            finding.prefix = update.prefix;
            finding.evidence.push_back(update);
            findings.push_back(std::move(finding));
        }
        bool has_666 = std::any_of(
            update.communities.begin(), update.communities.end(),
            [](const auto& c) { return c.second == kBlackholeCommunityValue; });
        if (has_666) {
            MitigationFinding finding;
            finding.kind = FindingKind::blackhole_community;
            finding.session_id = session_id;
            finding.prefix = update.prefix;
            finding.evidence.push_back(update);
            findings.push_back(std::move(finding));
        }
    }
    return findings;
}

std::vector<MitigationFinding> detect_reroute(
    const std::vector<BgpUpdate>& updates, uint32_t victim_as,
    const std::vector<Cidr>& victim_prefixes,
    const std::map<Cidr, uint32_t>& baseline_origins, const AnalysisWindow& window,
    uint64_t session_id, RerouteStats* stats) {
    std::vector<MitigationFinding> findings;
    std::map<std::pair<Cidr, uint32_t>, size_t> seen;  // (prefix, temp origin) -> idx
    for (size_t i = 0; i < updates.size(); ++i) {
        const auto& update = updates[i];
        if (update.kind != BgpKind::announce || !window.contains(update.ts) ||
            !update.origin_as || !touches_victim(update.prefix, victim_prefixes)) {
            continue;
        }
        auto baseline = baseline_origins.find(update.prefix);
        if (baseline == baseline_origins.end()) {
            if (*update.origin_as != victim_as && stats) {
                ++stats->unresolvable_prefixes;
            }
            continue;
        }
        uint32_t previous = baseline->second;
        uint32_t temporary = *update.origin_as;
        if (temporary == previous || temporary == victim_as) {
            continue;
        }
        auto key = std::make_pair(update.prefix, temporary);
        if (seen.count(key)) {
            continue;
        }
        MitigationFinding finding;
        finding.kind = FindingKind::reroute;
        finding.session_id = session_id;
        finding.prefix = update.prefix;
        finding.previous_origin = previous;
        finding.temporary_origin = temporary;
        finding.evidence.push_back(update);
        for (size_t j = i + 1; j < updates.size(); ++j) {
            const auto& later = updates[j];
            if (later.kind == BgpKind::announce && later.prefix == update.prefix &&
                later.origin_as && *later.origin_as == previous) {
                finding.revert_seen = true;
                finding.revert_time = later.ts;
                finding.evidence.push_back(later);
                break;
            }
        }
        seen.emplace(key, findings.size());
        findings.push_back(std::move(finding));
    }
    return findings;
}

std::map<Cidr, uint32_t> derive_baseline_origins(
    const std::vector<BgpUpdate>& updates, const std::vector<Cidr>& victim_prefixes,
    int64_t before_ts) {
    std::map<Cidr, uint32_t> baseline;
    for (const auto& update : updates) {
        if (update.kind == BgpKind::announce && update.ts < before_ts &&
            update.origin_as && touches_victim(update.prefix, victim_prefixes)) {
            baseline[update.prefix] = *update.origin_as;  // later updates win
        }
    }
    return baseline;
}

std::map<Cidr, uint32_t> load_baseline_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open baseline file: " + path);
    }
    std::map<Cidr, uint32_t> baseline;
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
            continue;
        }
        uint64_t asn = 0;
        if (!(fields >> asn) || asn > 0xFFFFFFFFull) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected \"prefix asn\"");
        }
        auto prefix = Cidr::parse(cidr_text);
        if (!prefix) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": bad prefix \"" +
                              cidr_text + "\"");
        }
        baseline[*prefix] = static_cast<uint32_t>(asn);
    }
    return baseline;
}

std::string to_jsonl(const MitigationFinding& finding) {
    ordered_json obj;
    obj["kind"] = to_string(finding.kind);
    obj["session_id"] = finding.session_id;
    obj["prefix"] = finding.prefix.to_string();
    if (finding.kind == FindingKind::reroute) {
        obj["previous_origin"] = finding.previous_origin.value_or(0);
        obj["temporary_origin"] = finding.temporary_origin.value_or(0);
        obj["revert_seen"] = finding.revert_seen;
        if (finding.revert_time) {
            obj["revert_time"] = *finding.revert_time;
        }
    }
    ordered_json evidence = ordered_json::array();
    for (const auto& update : finding.evidence) {
        evidence.push_back(ordered_json::parse(to_jsonl(update)));
    }
    obj["evidence"] = evidence;
    return obj.dump();
}

}  // namespace reflectmon
