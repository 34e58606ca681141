#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "reflectmon/aggregation.hpp"
#include "reflectmon/flow.hpp"
#include "reflectmon/util.hpp"

namespace reflectmon {

enum class ShareDistribution { uniform, zipf };
enum class AttackRamp { step, linear };

// Steady legitimate traffic: each source AS sends about mean_bytes per
// interval (multiplicative jitter in [1-j, 1+j]) to the destination.
struct BaselineSpec {
    std::vector<uint32_t> src_ases;
    uint32_t dst_as = 0;
    uint16_t port = 0;
    double mean_bytes = 0.0;
    double jitter = 0.0;
};

// One scripted reflection attack. total_bps is the per-port aggregate the
// (port, dstAS) key carries at peak; sources are source_as_base ..
// source_as_base + n_sources - 1 and split the volume per `share`.
struct AttackSpec {
    uint32_t dst_as = 0;
    std::vector<uint16_t> ports;
    int64_t start_interval = 0;  // inclusive
    int64_t end_interval = 0;    // exclusive
    double total_bps = 0.0;
    uint32_t n_sources = 1;
    uint32_t source_as_base = 60000;
    ShareDistribution share = ShareDistribution::uniform;
    double zipf_s = 2.0;  // used when share == zipf; weights proportional to 1/i^s
    AttackRamp ramp = AttackRamp::step;
};

struct Scenario {
    uint64_t seed = 0;
    int64_t duration_intervals = 0;
    int64_t delta_t_seconds = 60;
    int64_t start_time = 0;  // epoch seconds of interval 0
    std::vector<BaselineSpec> baseline;
    std::vector<AttackSpec> attacks;

    void validate() const;  // throws ConfigError
    static Scenario from_json_text(const std::string& text, const std::string& name);
    static Scenario load_file(const std::string& path);
};

struct GenerateResult {
    std::vector<FlowRecord> flows;
    std::vector<std::string> warnings;
};

// Deterministic flow stream for the scenario: same seed and spec give a
// byte-identical stream. `ports` (when given) is only consulted to warn
// about attack ports the detector would never see.
GenerateResult generate(const Scenario& scenario,
                        const MonitoredPortTable* ports = nullptr);

// The address plan behind generated IPs: every AS the scenario mentions gets
// a /24 out of 10.0.0.0/8 in first-appearance order, so generated traffic
// maps back to the scenario's AS numbers through a PrefixTable built from
// these entries.
std::vector<std::pair<Cidr, uint32_t>> scenario_prefix_entries(const Scenario& scenario);
void write_prefix_table_file(const std::string& path,
                             const std::vector<std::pair<Cidr, uint32_t>>& entries);

// Byte split across sources: uniform gives floor(total/n) each (entropy
// exactly 1); zipf weights the i-th source by 1/i^s before flooring.
std::vector<uint64_t> attack_share_bytes(double total_bytes, uint32_t n_sources,
                                         ShareDistribution share, double zipf_s);

// Stateless mix for decorrelating per-interval generator streams.
uint64_t splitmix64(uint64_t x);
// Generator for interval i: identical across runs and independent of how
// many draws other intervals consumed.
std::mt19937_64 interval_rng(uint64_t seed, int64_t interval_index);
// Uniform double in [0,1) from the top 53 bits.
double uniform01(std::mt19937_64& rng);

struct NetflowEncodeOptions {
    size_t max_records_per_datagram = 30;
    size_t template_refresh_datagrams = 50;  // re-send template every N datagrams
    uint32_t source_id = 1;
    uint16_t template_id = 256;
};

// Encodes flows (grouped by timestamp, ascending) into NetFlow v9 datagrams;
// the template flowset leads the first datagram and is refreshed
// periodically. Complements parse_netflow_v9 for round-trip testing.
std::vector<std::vector<uint8_t>> encode_netflow_v9(
    const std::vector<FlowRecord>& flows, const NetflowEncodeOptions& options = {});

}  // namespace reflectmon
