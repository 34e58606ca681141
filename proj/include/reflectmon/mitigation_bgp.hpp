#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reflectmon/detection.hpp"
#include "reflectmon/util.hpp"

namespace reflectmon {

enum class BgpKind { announce, withdraw };

struct BgpUpdate {
    int64_t ts = 0;
    BgpKind kind = BgpKind::announce;
    Cidr prefix;
    std::optional<uint32_t> origin_as;  // announce only
    std::optional<uint32_t> next_hop;   // announce only, host-order IPv4
    std::vector<std::pair<uint32_t, uint32_t>> communities;  // (asn, value)

    bool operator==(const BgpUpdate&) const = default;
};

// JSONL keys: ts, kind, prefix, origin_as, next_hop, communities ("a:b" strings).
BgpUpdate bgp_update_from_jsonl(const std::string& line, const std::string& where);
std::string to_jsonl(const BgpUpdate& update);
// Loads and sorts by timestamp (stable), so analyses see time order.
std::vector<BgpUpdate> read_bgp_update_file(const std::string& path);

// Analysis span around one attack: [start - pre_margin, end + post_margin].
struct AnalysisWindow {
    int64_t start = 0;
    int64_t end = 0;

    bool contains(int64_t ts) const { return ts >= start && ts <= end; }
};

struct MitigationConfig {
    int64_t pre_margin_seconds = 600;    // 10 minutes before the attack
    int64_t post_margin_seconds = 3600;  // 1 hour after
};

AnalysisWindow window_for_session(const SessionRecord& session,
                                  const MitigationConfig& cfg);

enum class FindingKind { blackhole_nexthop, blackhole_community, reroute };

const char* to_string(FindingKind kind);

struct MitigationFinding {
    FindingKind kind = FindingKind::blackhole_nexthop;
    uint64_t session_id = 0;
    Cidr prefix;  // the announced prefix that triggered the finding
    std::vector<BgpUpdate> evidence;
    // Reroute only:
    std::optional<uint32_t> previous_origin;
    std::optional<uint32_t> temporary_origin;
    bool revert_seen = false;
    std::optional<int64_t> revert_time;
};

std::string to_jsonl(const MitigationFinding& finding);

// The conventional discard next-hop (192.0.2.1) and community value.
uint32_t blackhole_next_hop();
inline constexpr uint32_t kBlackholeCommunityValue = 666;

// One finding per in-window announce touching a victim prefix that carries
// the blackhole next-hop, and one per announce carrying a :666 community.
std::vector<MitigationFinding> detect_blackholing(
    const std::vector<BgpUpdate>& updates, const std::vector<Cidr>& victim_prefixes,
    const AnalysisWindow& window, uint64_t session_id);

struct RerouteStats {
    uint64_t unresolvable_prefixes = 0;  // in-window origin changes with no baseline
};

// Origin-change findings: an in-window announce whose origin differs from the
// per-prefix baseline, deduplicated per (prefix, temporary origin), with
// revert detection over the rest of the log. The victim's own AS is never
// reported as a temporary origin.
std::vector<MitigationFinding> detect_reroute(
    const std::vector<BgpUpdate>& updates, uint32_t victim_as,
    const std::vector<Cidr>& victim_prefixes,
    const std::map<Cidr, uint32_t>& baseline_origins, const AnalysisWindow& window,
    uint64_t session_id, RerouteStats* stats = nullptr);

// Baseline origin per prefix = last announce strictly before `before_ts`
// touching a victim prefix. An explicit baseline file ("prefix asn" lines)
// can replace this when pre-attack updates are not in the log.
std::map<Cidr, uint32_t> derive_baseline_origins(
    const std::vector<BgpUpdate>& updates, const std::vector<Cidr>& victim_prefixes,
    int64_t before_ts);
std::map<Cidr, uint32_t> load_baseline_file(const std::string& path);

}  // namespace reflectmon
