#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "reflectmon/mitigation_bgp.hpp"

using namespace reflectmon;

namespace {

Cidr cidr(const std::string& text) {
    auto parsed = Cidr::parse(text);
    REQUIRE(parsed);
    return *parsed;
}

BgpUpdate announce(int64_t ts, const std::string& prefix, uint32_t origin,
                   std::optional<std::string> next_hop = std::nullopt,
                   std::vector<std::pair<uint32_t, uint32_t>> communities = {}) {
    BgpUpdate u;
    u.ts = ts;
    u.kind = BgpKind::announce;
    u.prefix = cidr(prefix);
    u.origin_as = origin;
    if (next_hop) u.next_hop = *parse_ipv4(*next_hop);
    u.communities = std::move(communities);
    return u;
}

BgpUpdate withdraw(int64_t ts, const std::string& prefix) {
    BgpUpdate u;
    u.ts = ts;
    u.kind = BgpKind::withdraw;
    u.prefix = cidr(prefix);
    return u;
}

// The shared fixture log: a victim on 198.51.100.0/24 (AS 65001) that
// blackholes a more-specific, briefly hands the prefix to a scrubbing AS,
// then takes it back.
std::vector<BgpUpdate> fixture_updates() {
    return {
        announce(5000, "198.51.100.0/24", 65001),
        announce(9000, "198.51.100.0/24", 65001),
        announce(9500, "198.51.100.0/25", 65001, "192.0.2.1"),
        announce(10000, "198.51.100.0/24", 64999, std::nullopt, {{64500, 666}}),
        announce(10500, "198.51.100.0/24", 64999),
        announce(11000, "203.0.113.0/24", 64777, std::nullopt, {{1, 666}}),
        announce(11500, "198.51.100.128/25", 64222),
        announce(13000, "198.51.100.0/24", 65001),
        withdraw(14000, "198.51.100.0/25"),
        announce(20000, "198.51.100.0/24", 64111),
    };
}

SessionRecord fixture_session() {
    SessionRecord s;
    s.session_id = 7;
    s.dst_as = 65001;
    s.src_port = 389;
    s.start = 10000;
    s.end = 12000;
    return s;
}

}  // namespace

TEST_CASE("analysis window wraps the session with both margins") {
    auto w = window_for_session(fixture_session(), MitigationConfig{});
    CHECK(w.start == 9400);   // 10 minutes before
    CHECK(w.end == 15600);    // 1 hour after
    CHECK(w.contains(9400));  // inclusive on both ends
    CHECK(w.contains(15600));
    CHECK_FALSE(w.contains(9399));
    CHECK_FALSE(w.contains(15601));

    auto tight = window_for_session(fixture_session(), MitigationConfig{0, 0});
    CHECK(tight.start == 10000);
    CHECK(tight.end == 12000);
}

TEST_CASE("BGP updates round-trip through JSONL and load time-sorted") {
    auto a = announce(100, "198.51.100.0/24", 64999, "192.0.2.1",
                      {{64500, 666}, {64500, 100}});
    auto back = bgp_update_from_jsonl(to_jsonl(a), "t:1");
    CHECK(back == a);

    auto wd = withdraw(200, "198.51.100.0/25");
    CHECK(bgp_update_from_jsonl(to_jsonl(wd), "t:1") == wd);
    // Withdraw lines carry no announce attributes.
    CHECK(to_jsonl(wd).find("origin_as") == std::string::npos);

    CHECK_THROWS_AS(bgp_update_from_jsonl("{}", "t:1"), ConfigError);
    CHECK_THROWS_AS(bgp_update_from_jsonl(
                        R"({"ts":1,"kind":"noise","prefix":"10.0.0.0/8"})", "t:1"),
                    ConfigError);
    CHECK_THROWS_AS(bgp_update_from_jsonl(
                        R"({"ts":1,"kind":"announce","prefix":"10.0.0.0/40","origin_as":1})",
                        "t:1"),
                    ConfigError);
    CHECK_THROWS_AS(bgp_update_from_jsonl(
                        R"({"ts":1,"kind":"announce","prefix":"10.0.0.0/8"})", "t:1"),
                    ConfigError);
    CHECK_THROWS_AS(
        bgp_update_from_jsonl(
            R"({"ts":1,"kind":"announce","prefix":"10.0.0.0/8","origin_as":1,"communities":["666"]})",
            "t:1"),
        ConfigError);

    std::string dir = "/tmp/reflectmon_mit_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/updates.jsonl");
        out << to_jsonl(announce(300, "10.0.0.0/8", 3)) << "\n";
        out << to_jsonl(announce(100, "10.0.0.0/8", 1)) << "\n";
        out << "\n";  // blank lines are fine
        out << to_jsonl(announce(100, "192.0.2.0/24", 2)) << "\n";
    }
    auto updates = read_bgp_update_file(dir + "/updates.jsonl");
    REQUIRE(updates.size() == 3);
    CHECK(updates[0].ts == 100);
    CHECK(updates[0].prefix == cidr("10.0.0.0/8"));  // stable sort keeps file order
    CHECK(updates[1].ts == 100);
    CHECK(updates[1].prefix == cidr("192.0.2.0/24"));
    CHECK(updates[2].ts == 300);
    CHECK_THROWS_AS(read_bgp_update_file(dir + "/absent.jsonl"), IoError);
}

TEST_CASE("blackhole detection: discard next-hop and :666 communities") {
    auto updates = fixture_updates();
    auto window = window_for_session(fixture_session(), MitigationConfig{});
    std::vector<Cidr> victim = {cidr("198.51.100.0/24")};

    auto findings = detect_blackholing(updates, victim, window, 7);
    REQUIRE(findings.size() == 2);
    CHECK(findings[0].kind == FindingKind::blackhole_nexthop);
    CHECK(findings[0].prefix == cidr("198.51.100.0/25"));  // more-specific counts
    CHECK(findings[0].session_id == 7);
    REQUIRE(findings[0].evidence.size() == 1);
    CHECK(findings[0].evidence[0].ts == 9500);
    CHECK(findings[1].kind == FindingKind::blackhole_community);
    CHECK(findings[1].prefix == cidr("198.51.100.0/24"));
    CHECK(findings[1].evidence[0].ts == 10000);

    // A single announce carrying both signals yields two findings.
    std::vector<BgpUpdate> both = {
        announce(10000, "198.51.100.0/24", 65001, "192.0.2.1", {{65001, 666}})};
    auto two = detect_blackholing(both, victim, window, 7);
    REQUIRE(two.size() == 2);
    CHECK(two[0].kind == FindingKind::blackhole_nexthop);
    CHECK(two[1].kind == FindingKind::blackhole_community);

    // A covering announcement of the victim prefix counts too.
    std::vector<BgpUpdate> covering = {
        announce(10000, "198.51.0.0/16", 65001, "192.0.2.1")};
    CHECK(detect_blackholing(covering, victim, window, 7).size() == 1);

    // The community ASN half never matters; only the value 666 does.
    std::vector<BgpUpdate> wrong_half = {
        announce(10000, "198.51.100.0/24", 65001, std::nullopt, {{666, 123}})};
    CHECK(detect_blackholing(wrong_half, victim, window, 7).empty());
    std::vector<BgpUpdate> any_asn = {
        announce(10000, "198.51.100.0/24", 65001, std::nullopt, {{1, 666}})};
    CHECK(detect_blackholing(any_asn, victim, window, 7).size() == 1);

    // Shifting the window off the activity clears every finding.
    AnalysisWindow elsewhere{100000, 200000};
    CHECK(detect_blackholing(updates, victim, elsewhere, 7).empty());
}

TEST_CASE("reroute detection: origin handoff, dedup, revert, unresolvable") {
    auto updates = fixture_updates();
    auto window = window_for_session(fixture_session(), MitigationConfig{});
    std::vector<Cidr> victim = {cidr("198.51.100.0/24")};

    auto baseline = derive_baseline_origins(updates, victim, window.start);
    REQUIRE(baseline.size() == 1);
    CHECK(baseline.at(cidr("198.51.100.0/24")) == 65001);

    RerouteStats stats;
    auto findings =
        detect_reroute(updates, 65001, victim, baseline, window, 7, &stats);
    REQUIRE(findings.size() == 1);  // the 10500 repeat deduplicates
    const auto& f = findings[0];
    CHECK(f.kind == FindingKind::reroute);
    CHECK(f.session_id == 7);
    CHECK(f.prefix == cidr("198.51.100.0/24"));
    CHECK(f.previous_origin == 65001);
    CHECK(f.temporary_origin == 64999);
    CHECK(f.revert_seen);
    CHECK(f.revert_time == 13000);
    REQUIRE(f.evidence.size() == 2);  // handoff + revert announcements
    CHECK(f.evidence[0].ts == 10000);
    CHECK(f.evidence[1].ts == 13000);
    // 198.51.100.128/25 has no baseline entry and a foreign origin.
    CHECK(stats.unresolvable_prefixes == 1);

    // A different temporary origin is its own finding; never the victim AS.
    auto more = updates;
    more.push_back(announce(11800, "198.51.100.0/24", 64888));
    more.push_back(announce(11900, "198.51.100.0/24", 65001));  // victim: skipped
    std::stable_sort(more.begin(), more.end(),
                     [](const BgpUpdate& a, const BgpUpdate& b) { return a.ts < b.ts; });
    auto findings2 = detect_reroute(more, 65001, victim, baseline, window, 7);
    REQUIRE(findings2.size() == 2);
    CHECK(findings2[1].temporary_origin == 64888);
    CHECK(findings2[1].revert_seen);
    CHECK(findings2[1].revert_time == 11900);

    // Without a revert later in the log, the flag stays false.
    std::vector<BgpUpdate> no_revert = {announce(10000, "198.51.100.0/24", 64999)};
    auto open_ended = detect_reroute(no_revert, 65001, victim, baseline, window, 7);
    REQUIRE(open_ended.size() == 1);
    CHECK_FALSE(open_ended[0].revert_seen);
    CHECK_FALSE(open_ended[0].revert_time);

    // Window permutation control: nothing fires off-window.
    AnalysisWindow elsewhere{100000, 200000};
    RerouteStats quiet;
    CHECK(detect_reroute(updates, 65001, victim, baseline, elsewhere, 7, &quiet)
              .empty());
    CHECK(quiet.unresolvable_prefixes == 0);
}

TEST_CASE("baseline origin is the last announce strictly before the cutoff") {
    std::vector<Cidr> victim = {cidr("198.51.100.0/24")};
    std::vector<BgpUpdate> updates = {
        announce(100, "198.51.100.0/24", 111),
        announce(200, "198.51.100.0/24", 222),
        announce(300, "203.0.113.0/24", 333),  // unrelated prefix
    };
    CHECK(derive_baseline_origins(updates, victim, 201).at(
              cidr("198.51.100.0/24")) == 222);
    // Strictly before: an announce at the cutoff itself does not count.
    CHECK(derive_baseline_origins(updates, victim, 200).at(
              cidr("198.51.100.0/24")) == 111);
    CHECK(derive_baseline_origins(updates, victim, 100).empty());
}

TEST_CASE("explicit baseline files replace the derived origins") {
    std::string dir = "/tmp/reflectmon_mit_test";
    std::filesystem::create_directories(dir);
    std::string path = dir + "/baseline.txt";
    {
        std::ofstream out(path);
        out << "# prefix origin\n";
        out << "198.51.100.0/24 65001\n";
        out << "198.51.100.128/25 65001  # carved out\n";
        out << "\n";
    }
    auto baseline = load_baseline_file(path);
    REQUIRE(baseline.size() == 2);
    CHECK(baseline.at(cidr("198.51.100.0/24")) == 65001);
    CHECK(baseline.at(cidr("198.51.100.128/25")) == 65001);

    // With the /25 resolvable, the foreign announce becomes a finding.
    auto window = window_for_session(fixture_session(), MitigationConfig{});
    RerouteStats stats;
    auto findings = detect_reroute(fixture_updates(), 65001,
                                   {cidr("198.51.100.0/24")}, baseline, window, 7,
                                   &stats);
    REQUIRE(findings.size() == 2);
    CHECK(findings[1].prefix == cidr("198.51.100.128/25"));
    CHECK(findings[1].temporary_origin == 64222);
    CHECK(stats.unresolvable_prefixes == 0);

    {
        std::ofstream out(dir + "/bad.txt");
        out << "198.51.100.0/24 notanumber\n";
    }
    CHECK_THROWS_AS(load_baseline_file(dir + "/bad.txt"), ConfigError);
    CHECK_THROWS_AS(load_baseline_file(dir + "/nope.txt"), IoError);
}

TEST_CASE("mitigation findings serialize with kind-specific fields") {
    auto window = window_for_session(fixture_session(), MitigationConfig{});
    std::vector<Cidr> victim = {cidr("198.51.100.0/24")};
    auto updates = fixture_updates();
    auto baseline = derive_baseline_origins(updates, victim, window.start);
    auto reroutes = detect_reroute(updates, 65001, victim, baseline, window, 7);
    REQUIRE(reroutes.size() == 1);

    auto obj = nlohmann::json::parse(to_jsonl(reroutes[0]));
    CHECK(obj["kind"] == "reroute");
    CHECK(obj["session_id"] == 7);
    CHECK(obj["prefix"] == "198.51.100.0/24");
    CHECK(obj["previous_origin"] == 65001);
    CHECK(obj["temporary_origin"] == 64999);
    CHECK(obj["revert_seen"] == true);
    CHECK(obj["revert_time"] == 13000);
    REQUIRE(obj["evidence"].size() == 2);
    CHECK(obj["evidence"][0]["ts"] == 10000);

    auto blackholes = detect_blackholing(updates, victim, window, 7);
    auto bh = nlohmann::json::parse(to_jsonl(blackholes[0]));
    CHECK(bh["kind"] == "blackhole_nexthop");
    CHECK_FALSE(bh.contains("previous_origin"));
    CHECK(bh["evidence"][0]["next_hop"] == "192.0.2.1");
}
