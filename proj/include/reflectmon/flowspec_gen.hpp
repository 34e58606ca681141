#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reflectmon/asn_map.hpp"
#include "reflectmon/detection.hpp"

namespace reflectmon {

// One discard rule: all UDP traffic from one source AS's prefixes, off the
// attack source port, toward the victim's prefixes.
struct FilterRule {
    enum class State { active, withdrawn };

    uint64_t rule_id = 0;
    uint32_t src_as = 0;
    std::vector<Cidr> src_prefixes;
    uint16_t src_port = 0;
    uint32_t dst_as = 0;
    std::vector<Cidr> dst_prefixes;
    uint64_t session_id = 0;
    State state = State::active;
    int64_t created_at = 0;    // interval of the alert that created the rule
    int64_t refreshed_at = 0;  // interval of the latest alert covering it
    std::optional<int64_t> withdrawn_at;
};

// A source AS that could not be translated into a rule (no known prefixes).
struct RuleWarning {
    uint64_t session_id = 0;
    uint32_t src_as = 0;
    uint16_t src_port = 0;
    uint32_t dst_as = 0;
    std::string reason;
};

// Rule lifecycle owner. Alerts add or refresh rules; session termination
// withdraws every rule of that session.
class RuleStore {
public:
    // top_n = 0 blocks every contributing source AS; otherwise only the
    // top_n contributors by bytes (ties broken by ascending AS number).
    explicit RuleStore(uint32_t top_n = 0) : top_n_(top_n) {}

    // Returns indices (into rules()) of rules created by this alert;
    // re-emitting for a continuing session refreshes timestamps instead.
    std::vector<size_t> apply_alert(const DrdosAlert& alert, const PrefixTable& table);

    // Flips the session's active rules to withdrawn. Unknown or already
    // withdrawn sessions are a no-op (a warning is recorded for unknown ones).
    std::vector<size_t> withdraw_session(uint64_t session_id, int64_t at);

    const std::vector<FilterRule>& rules() const { return rules_; }
    const std::vector<RuleWarning>& warnings() const { return warnings_; }
    uint32_t top_n() const { return top_n_; }

private:
    uint32_t top_n_;
    std::vector<FilterRule> rules_;
    // (session_id, src_as) -> index into rules_; one rule per pair.
    std::map<std::pair<uint64_t, uint32_t>, size_t> by_session_source_;
    std::set<uint64_t> known_sessions_;
    std::set<std::pair<uint64_t, uint32_t>> warned_;
    std::vector<RuleWarning> warnings_;
};

// "discard udp src <prefix> sport <p> dst <prefix>", one line per
// (src_prefix, dst_prefix) pair.
std::vector<std::string> render_rule_text(const FilterRule& rule);

std::string to_jsonl(const FilterRule& rule);
std::string to_jsonl(const RuleWarning& warning);

}  // namespace reflectmon
