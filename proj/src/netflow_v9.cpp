#include "reflectmon/netflow_v9.hpp"

namespace reflectmon::nf9 {

namespace {

// Bounds-checked big-endian cursor over the datagram.
class ByteReader {
public:
    explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

    size_t remaining() const { return data_.size() - pos_; }
    size_t pos() const { return pos_; }

    bool skip(size_t n) {
        if (remaining() < n) return false;
        pos_ += n;
        return true;
    }

    bool read_u16(uint16_t& out) {
        if (remaining() < 2) return false;
        out = static_cast<uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
        pos_ += 2;
        return true;
    }

    bool read_u32(uint32_t& out) {
        if (remaining() < 4) return false;
        out = uint32_t{data_[pos_]} << 24 | uint32_t{data_[pos_ + 1]} << 16 |
              uint32_t{data_[pos_ + 2]} << 8 | uint32_t{data_[pos_ + 3]};
        pos_ += 4;
        return true;
    }

    // Big-endian unsigned integer of 1..8 bytes.
    bool read_uint(size_t len, uint64_t& out) {
        if (len == 0 || len > 8 || remaining() < len) return false;
        out = 0;
        for (size_t i = 0; i < len; ++i) out = out << 8 | data_[pos_ + i];
        pos_ += len;
        return true;
    }

    std::span<const uint8_t> take(size_t n) {
        auto sub = data_.subspan(pos_, n);
        pos_ += n;
        return sub;
    }

private:
    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

ParseResult fail(ParseCounters& counters, std::string reason) {
    ++counters.malformed_datagrams;
    ParseResult r;
    r.ok = false;
    r.error = std::move(reason);
    return r;
}

// Total payload bytes one record of this template occupies.
size_t record_length(const std::vector<TemplateField>& fields) {
    size_t total = 0;
    for (const auto& f : fields) total += f.length;
    return total;
}

void parse_template_flowset(ByteReader body, uint32_t source_id, int64_t export_ts,
                            TemplateCache& cache, ParseCounters& counters) {
    // A template flowset may carry several templates back to back.
    uint16_t template_id = 0, field_count = 0;
    while (body.read_u16(template_id) && body.read_u16(field_count)) {
        if (body.remaining() < size_t{field_count} * 4) return;  // truncated template, drop rest
        std::vector<TemplateField> fields;
        fields.reserve(field_count);
        bool usable = field_count > 0;
        for (uint16_t i = 0; i < field_count; ++i) {
            TemplateField f;
            body.read_u16(f.type);
            body.read_u16(f.length);
            if (f.type == kFieldIpv6SrcAddr || f.type == kFieldIpv6DstAddr) ++counters.ipv6_fields_seen;
            fields.push_back(f);
        }
        // A zero-length record layout can never be decoded; refuse to cache it.
        if (record_length(fields) == 0) usable = false;
        if (usable) {
            TemplateCache::Key key{source_id, template_id};
            cache.templates[key] = std::move(fields);
            cache.last_refresh[key] = export_ts;
            ++counters.templates_learned;
        }
    }
}

// Decodes one data flowset; returns false when its template is unknown.
bool parse_data_flowset(ByteReader body, uint16_t flowset_id, uint32_t source_id, int64_t export_ts,
                        TemplateCache& cache, ParseCounters& counters, std::vector<FlowRecord>& out) {
    auto it = cache.templates.find({source_id, flowset_id});
    if (it == cache.templates.end()) return false;
    const auto& fields = it->second;
    const size_t rec_len = record_length(fields);
    while (body.remaining() >= rec_len) {
        FlowRecord rec;
        rec.timestamp = export_ts;
        bool have_src_ip = false, have_dst_ip = false, bad = false;
        for (const auto& f : fields) {
            uint64_t value = 0;
            switch (f.type) {
                case kFieldIpv4SrcAddr:
                    if (f.length == 4 && body.read_uint(4, value)) {
                        rec.src_ip = static_cast<uint32_t>(value);
                        have_src_ip = true;
                    } else {
                        body.skip(f.length);
                    }
                    break;
                case kFieldIpv4DstAddr:
                    if (f.length == 4 && body.read_uint(4, value)) {
                        rec.dst_ip = static_cast<uint32_t>(value);
                        have_dst_ip = true;
                    } else {
                        body.skip(f.length);
                    }
                    break;
                case kFieldInBytes:
                    if (f.length <= 8 && body.read_uint(f.length, value)) rec.bytes = value;
                    else { body.skip(f.length); bad = true; }
                    break;
                case kFieldInPkts:
                    if (f.length <= 8 && body.read_uint(f.length, value)) rec.packets = value;
                    else { body.skip(f.length); bad = true; }
                    break;
                case kFieldProtocol:
                    if (f.length <= 8 && body.read_uint(f.length, value)) rec.protocol = static_cast<uint8_t>(value);
                    else { body.skip(f.length); bad = true; }
                    break;
                case kFieldL4SrcPort:
                    if (f.length <= 8 && body.read_uint(f.length, value)) rec.src_port = static_cast<uint16_t>(value);
                    else { body.skip(f.length); bad = true; }
                    break;
                case kFieldL4DstPort:
                    if (f.length <= 8 && body.read_uint(f.length, value)) rec.dst_port = static_cast<uint16_t>(value);
                    else { body.skip(f.length); bad = true; }
                    break;
                default:
                    body.skip(f.length);  // field we do not use, including IPv6 addresses
                    break;
            }
        }
        if (bad || !have_src_ip || !have_dst_ip || (rec.packets > 0 && rec.bytes < rec.packets)) {
            ++counters.records_invalid;
            continue;
        }
        rec.adj_packets = rec.packets;
        rec.adj_bytes = rec.bytes;
        out.push_back(rec);
        ++counters.records_decoded;
    }
    // Anything shorter than one record at the tail is flowset padding.
    return true;
}

}  // namespace

ParseResult parse_netflow_v9(std::span<const uint8_t> datagram, TemplateCache& cache,
                             ParseCounters& counters) {
    ++counters.datagrams;
    ByteReader reader(datagram);

    uint16_t version = 0, count = 0;
    uint32_t sys_uptime = 0, unix_secs = 0, sequence = 0, source_id = 0;
    if (!reader.read_u16(version) || !reader.read_u16(count) || !reader.read_u32(sys_uptime) ||
        !reader.read_u32(unix_secs) || !reader.read_u32(sequence) || !reader.read_u32(source_id)) {
        return fail(counters, "short datagram: " + std::to_string(datagram.size()) + " bytes");
    }
    if (version != 9) {
        return fail(counters, "unsupported version " + std::to_string(version));
    }
    const auto export_ts = static_cast<int64_t>(unix_secs);

    ParseResult result;
    uint64_t templates_before = counters.templates_learned;
    uint64_t invalid_before = counters.records_invalid;
    uint64_t unknown_flowsets = 0;
    while (reader.remaining() >= 4) {
        uint16_t flowset_id = 0, flowset_len = 0;
        reader.read_u16(flowset_id);
        reader.read_u16(flowset_len);
        if (flowset_len < 4) {
            return fail(counters, "flowset with invalid length " + std::to_string(flowset_len));
        }
        size_t body_len = flowset_len - 4;
        if (reader.remaining() < body_len) {
            return fail(counters, "truncated flowset");
        }
        ByteReader body(reader.take(body_len));
        ++counters.flowsets;
        if (flowset_id == kTemplateFlowsetId) {
            parse_template_flowset(body, source_id, export_ts, cache, counters);
        } else if (flowset_id == kOptionsFlowsetId) {
            ++counters.options_flowsets_skipped;
        } else if (flowset_id >= kMinDataFlowsetId) {
            if (!parse_data_flowset(body, flowset_id, source_id, export_ts, cache, counters,
                                    result.records)) {
                ++unknown_flowsets;
            }
        }
        // ids 2..255 are reserved; skip them.
    }
    if (unknown_flowsets > 0) {
        // The undecodable records cannot be counted without their template;
        // fall back to the header count, which states how many records
        // (template + data) the exporter packed into this datagram.
        uint64_t accounted = result.records.size() +
                             (counters.records_invalid - invalid_before) +
                             (counters.templates_learned - templates_before);
        uint64_t estimate =
            count > accounted ? uint64_t{count} - accounted : unknown_flowsets;
        counters.records_unknown_template += estimate;
    }
    return result;
}

}  // namespace reflectmon::nf9
