#include "reflectmon/util.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace reflectmon {

std::optional<uint32_t> parse_ipv4(std::string_view text) {
    uint32_t out = 0;
    int octets = 0;
    const char* p = text.data();
    const char* end = p + text.size();
    while (octets < 4) {
        unsigned value = 0;
        auto [next, ec] = std::from_chars(p, end, value);
        if (ec != std::errc{} || next == p || value > 255) return std::nullopt;
        out = (out << 8) | value;
        p = next;
        ++octets;
        if (octets < 4) {
            if (p == end || *p != '.') return std::nullopt;
            ++p;
        }
    }
    if (p != end) return std::nullopt;
    return out;
}

std::string format_ipv4(uint32_t addr) {
    std::string out;
    out.reserve(15);
    for (int shift = 24; shift >= 0; shift -= 8) {
        out += std::to_string((addr >> shift) & 0xff);
        if (shift > 0) out += '.';
    }
    return out;
}

static uint32_t mask_for(int len) {
    return len == 0 ? 0 : ~uint32_t{0} << (32 - len);
}

Cidr Cidr::make(uint32_t addr, int len) {
    return Cidr{addr & mask_for(len), len};
}

std::optional<Cidr> Cidr::parse(std::string_view text) {
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return std::nullopt;
    auto ip = parse_ipv4(text.substr(0, slash));
    if (!ip) return std::nullopt;
    int len = -1;
    auto tail = text.substr(slash + 1);
    auto [next, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), len);
    if (ec != std::errc{} || next != tail.data() + tail.size()) return std::nullopt;
    if (len < 0 || len > 32) return std::nullopt;
    return make(*ip, len);
}

bool Cidr::contains(uint32_t ip) const {
    return (ip & mask_for(len)) == addr;
}

bool Cidr::contains(const Cidr& other) const {
    return other.len >= len && contains(other.addr);
}

std::string Cidr::to_string() const {
    return format_ipv4(addr) + "/" + std::to_string(len);
}

static std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::map<std::string, std::string> parse_kv_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (!key.empty()) out[key] = value;
    }
    return out;
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_kv_text(buf.str());
}

// Civil-date conversion, Hinnant's algorithm.
std::string format_day(int64_t z) {
    z += 719468;
    int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    int64_t doe = z - era * 146097;
    int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    int64_t y = yoe + era * 400;
    int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    int64_t mp = (5 * doy + 2) / 153;
    int64_t d = doy - (153 * mp + 2) / 5 + 1;
    int64_t m = mp < 10 ? mp + 3 : mp - 9;
    if (m <= 2) ++y;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04lld-%02lld-%02lld", static_cast<long long>(y),
                  static_cast<long long>(m), static_cast<long long>(d));
    return buf;
}

std::optional<int64_t> parse_day(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int64_t y = 0, m = 0, d = 0;
    auto num = [](std::string_view part, int64_t& out) {
        auto [next, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
        return ec == std::errc{} && next == part.data() + part.size();
    };
    if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d)) return std::nullopt;
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    y -= m <= 2;
    int64_t era = (y >= 0 ? y : y - 399) / 400;
    int64_t yoe = y - era * 400;
    int64_t doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    int64_t days = era * 146097 + doe - 719468;
    // Reject days that only exist by overflow into the next month (Feb 30).
    if (format_day(days) != s) return std::nullopt;
    return days;
}

}  // namespace reflectmon
