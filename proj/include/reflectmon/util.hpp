#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace reflectmon {

// Bad or missing configuration (unreadable table, invalid parameter). CLI exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runtime I/O failure (unwritable sink, socket error). CLI exit code 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller broke an API precondition, e.g. fed intervals out of order.
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

// Dotted-quad IPv4 <-> host-order u32.
std::optional<uint32_t> parse_ipv4(std::string_view text);
std::string format_ipv4(uint32_t addr);

// IPv4 CIDR prefix. `addr` is masked to `len` bits on construction via parse/make.
struct Cidr {
    uint32_t addr = 0;  // host byte order, low bits zeroed
    int len = 0;        // 0..32

    static std::optional<Cidr> parse(std::string_view text);
    static Cidr make(uint32_t addr, int len);

    bool contains(uint32_t ip) const;
    bool contains(const Cidr& other) const;  // other is equal or more specific
    std::string to_string() const;

    auto operator<=>(const Cidr&) const = default;
};

// "key = value" config file, '#' comments and blank lines ignored.
// Unknown keys are the caller's concern; values are raw strings.
std::map<std::string, std::string> load_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(std::string_view text);

// Days since epoch <-> "YYYY-MM-DD" (UTC, proleptic Gregorian).
std::string format_day(int64_t days_since_epoch);
std::optional<int64_t> parse_day(std::string_view yyyy_mm_dd);

}  // namespace reflectmon
