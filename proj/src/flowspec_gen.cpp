#include "reflectmon/flowspec_gen.hpp"

#include <nlohmann/json.hpp>

namespace reflectmon {

std::vector<size_t> RuleStore::apply_alert(const DrdosAlert& alert,
                                           const PrefixTable& table) {
    std::vector<size_t> created;
    known_sessions_.insert(alert.session_id);
    std::vector<Cidr> dst_prefixes = table.reverse(alert.dst_as);

    size_t take = alert.source_breakdown.size();
    if (top_n_ > 0) {
        take = std::min<size_t>(take, top_n_);
    }
    for (size_t i = 0; i < take; ++i) {
        const SourceShare& share = alert.source_breakdown[i];
        auto key = std::make_pair(alert.session_id, share.src_as);
        auto existing = by_session_source_.find(key);
        if (existing != by_session_source_.end()) {
            rules_[existing->second].refreshed_at = alert.interval;
            continue;
        }
        std::vector<Cidr> src_prefixes =
            share.src_as == kUnmappedAs ? std::vector<Cidr>{}
                                        : table.reverse(share.src_as);
        if (src_prefixes.empty()) {
            if (warned_.insert(key).second) {
                RuleWarning warning;
                warning.session_id = alert.session_id;
                warning.src_as = share.src_as;
                warning.src_port = alert.src_port;
                warning.dst_as = alert.dst_as;
                warning.reason = share.src_as == kUnmappedAs
                                     ? "unmapped source (AS 0)"
                                     : "source AS has no known prefixes";
                warnings_.push_back(std::move(warning));
            }
            continue;
        }
        FilterRule rule;
        rule.rule_id = rules_.size() + 1;
        rule.src_as = share.src_as;
        rule.src_prefixes = std::move(src_prefixes);
        rule.src_port = alert.src_port;
        rule.dst_as = alert.dst_as;
        rule.dst_prefixes = dst_prefixes;
        rule.session_id = alert.session_id;
        rule.state = FilterRule::State::active;
        rule.created_at = alert.interval;
        rule.refreshed_at = alert.interval;
        by_session_source_.emplace(key, rules_.size());
        created.push_back(rules_.size());
        rules_.push_back(std::move(rule));
    }
    return created;
}

std::vector<size_t> RuleStore::withdraw_session(uint64_t session_id, int64_t at) {
    std::vector<size_t> withdrawn;
    if (!known_sessions_.count(session_id)) {
        RuleWarning warning;
        warning.session_id = session_id;
        warning.reason = "withdrawal for unknown session";
        warnings_.push_back(std::move(warning));
        return withdrawn;
    }
    for (size_t i = 0; i < rules_.size(); ++i) {
        FilterRule& rule = rules_[i];
        if (rule.session_id == session_id && rule.state == FilterRule::State::active) {
            rule.state = FilterRule::State::withdrawn;
            rule.withdrawn_at = at;
            withdrawn.push_back(i);
        }
    }
    return withdrawn;
}

std::vector<std::string> render_rule_text(const FilterRule& rule) {
    std::vector<std::string> lines;
    lines.reserve(rule.src_prefixes.size() * rule.dst_prefixes.size());
    for (const auto& src : rule.src_prefixes) {
        for (const auto& dst : rule.dst_prefixes) {
            lines.push_back("discard udp src " + src.to_string() + " sport " +
                            std::to_string(rule.src_port) + " dst " + dst.to_string());
        }
    }
    return lines;
}

std::string to_jsonl(const FilterRule& rule) {
    using ordered_json = nlohmann::ordered_json;
    ordered_json src = ordered_json::array();
    for (const auto& prefix : rule.src_prefixes) {
        src.push_back(prefix.to_string());
    }
    ordered_json dst = ordered_json::array();
    for (const auto& prefix : rule.dst_prefixes) {
        dst.push_back(prefix.to_string());
    }
    ordered_json obj;
    obj["rule_id"] = rule.rule_id;
    obj["action"] = "discard";
    obj["match"] = ordered_json{{"protocol", "udp"},
                                {"src_port", rule.src_port},
                                {"src_prefixes", src},
                                {"dst_prefixes", dst}};
    obj["src_as"] = rule.src_as;
    obj["dst_as"] = rule.dst_as;
    obj["session_id"] = rule.session_id;
    obj["state"] =
        rule.state == FilterRule::State::active ? "active" : "withdrawn";
    obj["created_at"] = rule.created_at;
    obj["refreshed_at"] = rule.refreshed_at;
    if (rule.withdrawn_at) {
        obj["withdrawn_at"] = *rule.withdrawn_at;
    }
    return obj.dump();
}

std::string to_jsonl(const RuleWarning& warning) {
    using ordered_json = nlohmann::ordered_json;
    ordered_json obj;
    obj["session_id"] = warning.session_id;
    obj["src_as"] = warning.src_as;
    obj["src_port"] = warning.src_port;
    obj["dst_as"] = warning.dst_as;
    obj["reason"] = warning.reason;
    return obj.dump();
}

}  // namespace reflectmon
