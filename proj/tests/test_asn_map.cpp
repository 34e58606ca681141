#include <doctest.h>

#include <random>
#include <sstream>
#include <vector>

#include "reflectmon/asn_map.hpp"
#include "reflectmon/util.hpp"

using namespace reflectmon;

namespace {

PrefixTable table_of(const std::string& text) {
    std::istringstream in(text);
    return PrefixTable::load(in, "test-table");
}

}  // namespace

TEST_CASE("longest prefix wins") {
    auto table = table_of(
        "10.0.0.0/8 100\n"
        "10.1.0.0/16 200\n"
        "10.1.2.0/24 300\n"
        "192.0.2.1/32 400\n");
    CHECK(table.size() == 4);
    CHECK(table.lookup(*parse_ipv4("10.1.2.3")) == 300);
    CHECK(table.lookup(*parse_ipv4("10.1.3.1")) == 200);
    CHECK(table.lookup(*parse_ipv4("10.9.9.9")) == 100);
    CHECK(table.lookup(*parse_ipv4("192.0.2.1")) == 400);
    CHECK(table.lookup(*parse_ipv4("192.0.2.2")) == kUnmappedAs);
    CHECK(table.lookup(*parse_ipv4("11.0.0.1")) == kUnmappedAs);
}

TEST_CASE("default route catches everything") {
    auto table = table_of(
        "0.0.0.0/0 64512\n"
        "10.0.0.0/8 100\n");
    CHECK(table.lookup(*parse_ipv4("8.8.8.8")) == 64512);
    CHECK(table.lookup(*parse_ipv4("10.0.0.1")) == 100);
    CHECK(table.lookup(0) == 64512);
    CHECK(table.lookup(0xFFFFFFFFu) == 64512);
}

TEST_CASE("duplicate prefixes keep the last entry") {
    auto table = table_of(
        "10.0.0.0/8 100\n"
        "10.0.0.0/8 999\n");
    CHECK(table.size() == 1);
    CHECK(table.lookup(*parse_ipv4("10.5.5.5")) == 999);
    CHECK(table.reverse(100).empty());
    REQUIRE(table.reverse(999).size() == 1);
    CHECK(table.reverse(999)[0].to_string() == "10.0.0.0/8");
}

TEST_CASE("malformed lines are counted and skipped, comments ignored") {
    auto table = table_of(
        "# upstream snapshot\n"
        "10.0.0.0/8 100\n"
        "not-a-prefix 200\n"
        "10.1.0.0/16\n"
        "10.2.0.0/16 asn\n"
        "10.3.0.0/16 300 extra\n"
        "\n"
        "192.168.0.0/16 500  # trailing comment\n");
    CHECK(table.size() == 2);
    CHECK(table.malformed_lines() == 4);
    CHECK(table.lookup(*parse_ipv4("192.168.1.1")) == 500);
}

TEST_CASE("empty table is a configuration error") {
    CHECK_THROWS_AS(table_of(""), ConfigError);
    CHECK_THROWS_AS(table_of("# only comments\n"), ConfigError);
    CHECK_THROWS_AS(table_of("garbage line\n"), ConfigError);
    CHECK_THROWS_AS(PrefixTable::load_file("/nonexistent/prefixes.txt"), IoError);
}

TEST_CASE("reverse returns ascending prefixes of the winning entries") {
    auto table = table_of(
        "10.2.0.0/16 77\n"
        "10.1.0.0/16 77\n"
        "172.16.0.0/12 77\n"
        "10.3.0.0/16 88\n");
    auto prefixes = table.reverse(77);
    REQUIRE(prefixes.size() == 3);
    CHECK(prefixes[0].to_string() == "10.1.0.0/16");
    CHECK(prefixes[1].to_string() == "10.2.0.0/16");
    CHECK(prefixes[2].to_string() == "172.16.0.0/12");
    CHECK(table.reverse(12345).empty());
}

TEST_CASE("lookup agrees with a brute-force scan on random tables") {
    std::mt19937_64 rng(424242);
    std::vector<std::pair<Cidr, uint32_t>> entries;
    for (int i = 0; i < 250; ++i) {
        int len = 1 + int(rng() % 32);
        uint32_t addr = uint32_t(rng());
        entries.emplace_back(Cidr::make(addr, len), 1 + uint32_t(rng() % 5000));
    }
    // Deduplicate the way the table does: last entry wins.
    std::map<Cidr, uint32_t> dedup;
    for (const auto& [cidr, asn] : entries) dedup[cidr] = asn;

    auto table = PrefixTable::from_entries(entries);
    CHECK(table.size() == dedup.size());

    auto brute = [&](uint32_t ip) -> uint32_t {
        int best_len = -1;
        uint32_t best_asn = kUnmappedAs;
        for (const auto& [cidr, asn] : dedup) {
            if (cidr.contains(ip) && cidr.len > best_len) {
                best_len = cidr.len;
                best_asn = asn;
            }
        }
        return best_asn;
    };

    for (int i = 0; i < 20000; ++i) {
        uint32_t ip = uint32_t(rng());
        CAPTURE(format_ipv4(ip));
        REQUIRE(table.lookup(ip) == brute(ip));
    }
    // Probe prefix boundaries explicitly: first/last address of each entry.
    for (const auto& [cidr, asn] : dedup) {
        uint32_t first = cidr.addr;
        uint32_t last =
            cidr.len == 0 ? 0xFFFFFFFFu : cidr.addr | (0xFFFFFFFFu >> cidr.len);
        CAPTURE(cidr.to_string());
        REQUIRE(table.lookup(first) == brute(first));
        REQUIRE(table.lookup(last) == brute(last));
    }
}

TEST_CASE("map_flow swaps addresses for ASes and keeps adjusted counters") {
    auto table = table_of(
        "10.0.0.0/8 100\n"
        "198.51.100.0/24 200\n");
    FlowRecord rec;
    rec.timestamp = 1000;
    rec.src_ip = *parse_ipv4("10.1.2.3");
    rec.src_port = 123;
    rec.dst_ip = *parse_ipv4("198.51.100.50");
    rec.dst_port = 4444;
    rec.protocol = 17;
    rec.packets = 2;
    rec.bytes = 300;
    rec = apply_sampling(rec, SamplingConfig{10});

    AsFlow flow = map_flow(rec, table);
    CHECK(flow.timestamp == 1000);
    CHECK(flow.src_as == 100);
    CHECK(flow.dst_as == 200);
    CHECK(flow.src_port == 123);
    CHECK(flow.dst_port == 4444);
    CHECK(flow.packets == 20);   // sampling-adjusted
    CHECK(flow.bytes == 3000);

    rec.src_ip = *parse_ipv4("8.8.8.8");
    CHECK(map_flow(rec, table).src_as == kUnmappedAs);
}
