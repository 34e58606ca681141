#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "reflectmon/detection.hpp"
#include "reflectmon/util.hpp"

using namespace reflectmon;

namespace {

TrafficSketch sk(int64_t interval, uint16_t port, uint32_t dst_as, uint64_t bytes,
                 std::map<uint32_t, uint64_t> per_src) {
    TrafficSketch s;
    s.interval_start = interval;
    s.src_port = port;
    s.dst_as = dst_as;
    s.bytes = bytes;
    s.per_src = std::move(per_src);
    return s;
}

// Uniform split of `bytes` over `n` sources, remainder to the lowest AS.
std::map<uint32_t, uint64_t> uniform_sources(uint64_t bytes, uint32_t n,
                                             uint32_t first_as = 100) {
    std::map<uint32_t, uint64_t> out;
    uint64_t share = bytes / n;
    for (uint32_t i = 0; i < n; ++i) out[first_as + i] = share;
    out[first_as] += bytes - share * n;
    return out;
}

}  // namespace

TEST_CASE("ewma smoothing follows the recurrence") {
    DetectorConfig cfg;
    EwmaModel m;
    m.mu = 100.0;
    m.var = 0.0;
    EwmaModel next = ewma_update(m, 200.0, cfg);
    // Bit-for-bit the one-line recurrence, and numerically the closed form.
    CHECK(next.mu == 0.9 * 100.0 + (1.0 - 0.9) * 200.0);
    CHECK(next.var == (1.0 - 0.9) * (0.0 + 0.9 * 100.0 * 100.0));
    CHECK(next.mu == doctest::Approx(110.0).epsilon(1e-12));
    CHECK(next.var == doctest::Approx(900.0).epsilon(1e-9));
    CHECK_FALSE(next.frozen);

    // Repeated updates with a constant input converge onto it.
    EwmaModel fixed;
    for (int i = 0; i < 400; ++i) fixed = ewma_update(fixed, 5e6, cfg);
    CHECK(fixed.mu == doctest::Approx(5e6).epsilon(1e-9));
    CHECK(fixed.var == doctest::Approx(0.0).scale(1e6));
}

TEST_CASE("deviation score matches hand-computed values") {
    DetectorConfig cfg;  // theta 3, epsilon 1e-6
    EwmaModel cold;      // mu 0, var 0

    CHECK(score(cold, 1e9, cfg).delta ==
          doctest::Approx(0.999999999999999).epsilon(1e-12));
    CHECK(score(cold, 1e6, cfg).delta ==
          doctest::Approx(0.999999999999).epsilon(1e-12));
    CHECK(score(cold, 0.0, cfg).delta == 0.0);

    EwmaModel settled;
    settled.mu = 1e6;
    settled.var = 0.0;
    auto sc = score(settled, 1.5e6, cfg);
    CHECK(sc.delta == doctest::Approx(0.3333333333331111).epsilon(1e-12));
    CHECK(sc.mu_snapshot == 1e6);
    CHECK(sc.sigma_snapshot == 0.0);
    CHECK(sc.b == 1.5e6);

    // Traffic below the control band scores exactly zero.
    CHECK(score(settled, 999999.0, cfg).delta == 0.0);
    settled.var = 1e10;  // sigma 1e5, band up to 1.3e6
    CHECK(score(settled, 1.2e6, cfg).delta == 0.0);
}

TEST_CASE("deviation score stays in [0, 1] and is scale covariant") {
    DetectorConfig cfg;
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 20000; ++i) {
        EwmaModel m;
        m.mu = unit(rng) * 1e9;
        m.var = unit(rng) * 1e18;
        double b = 1.0 + unit(rng) * 1e10;
        double d = score(m, b, cfg).delta;
        REQUIRE(d >= 0.0);
        REQUIRE(d <= 1.0);

        // Scaling traffic and baseline together leaves the score unchanged
        // (the epsilon guard is negligible at these magnitudes).
        EwmaModel scaled;
        scaled.mu = m.mu * 1024.0;
        scaled.var = m.var * 1024.0 * 1024.0;
        double d2 = score(scaled, b * 1024.0, cfg).delta;
        REQUIRE(d2 == doctest::Approx(d).epsilon(1e-9));
    }
}

TEST_CASE("normalized source entropy") {
    CHECK(normalized_entropy({{1, 90}, {2, 5}, {3, 5}}) ==
          doctest::Approx(0.3589962496465303).epsilon(1e-12));
    // Heavily skewed shares (1 : 1/16 : 1/81 scaled to integers).
    CHECK(normalized_entropy({{1, 1296}, {2, 81}, {3, 16}}) ==
          doctest::Approx(0.2583913466973524).epsilon(1e-12));

    // Exactly uniform shares score exactly 1, clamped against fp overshoot.
    std::map<uint32_t, uint64_t> uniform;
    for (uint32_t i = 0; i < 40; ++i) uniform[i + 1] = 10;
    CHECK(normalized_entropy(uniform) == 1.0);
    CHECK(normalized_entropy({{7, 3}, {9, 3}}) == 1.0);

    // Degenerate share sets score zero.
    CHECK(normalized_entropy({}) == 0.0);
    CHECK(normalized_entropy({{5, 1000}}) == 0.0);
    CHECK(normalized_entropy({{5, 0}, {6, 0}}) == 0.0);

    // Zero-byte entries are invisible.
    CHECK(normalized_entropy({{1, 50}, {2, 50}, {3, 0}}) == 1.0);
    CHECK(normalized_entropy({{1, 90}, {2, 5}, {3, 5}, {4, 0}}) ==
          normalized_entropy({{1, 90}, {2, 5}, {3, 5}}));
}

TEST_CASE("volume gate is inclusive, entropy gate is strict") {
    DetectorConfig cfg;  // nu 5e6 bps, h 0.4, delta_t 60
    // 37.5 MB over 60 s is exactly 5 Mbit/s.
    CHECK(to_bps(37'500'000, 60) == 5e6);
    CHECK(volume_gate(sk(0, 53, 1, 37'500'000, {}), cfg));
    CHECK_FALSE(volume_gate(sk(0, 53, 1, 37'499'999, {}), cfg));
    CHECK_FALSE(volume_gate(sk(0, 53, 1, 30'000'000, {}), cfg));

    auto two_even = sk(0, 53, 1, 100, {{1, 50}, {2, 50}});
    auto [h, pass] = entropy_gate(two_even, cfg);
    CHECK(h == 1.0);
    CHECK(pass);
    auto single = sk(0, 53, 1, 100, {{1, 100}});
    CHECK_FALSE(entropy_gate(single, cfg).second);

    // Strictness at the threshold: entropy exactly equal to h fails.
    DetectorConfig strict = cfg;
    strict.entropy_h = 1.0;
    CHECK_FALSE(entropy_gate(two_even, strict).second);
    strict.entropy_h = 0.9999;
    CHECK(entropy_gate(two_even, strict).second);
}

TEST_CASE("golden trace: baseline, freeze, alerts, clean recovery") {
    DetectorConfig cfg;
    cfg.warmup_intervals = 1;
    Detector det(cfg);
    const SketchKey key{389, 64500};

    // Ten quiet intervals at 1 MB each (the first absorbed as warmup).
    for (int i = 1; i <= 10; ++i) {
        auto ev = det.step(sk(i * 60, 389, 64500, 1'000'000, {{100, 1'000'000}}));
        CHECK_FALSE(ev.alert);
        CHECK_FALSE(ev.anomaly_log);
        CHECK_FALSE(ev.session_end);
    }
    const EwmaModel* m = det.model(key);
    REQUIRE(m);
    CHECK(m->mu == doctest::Approx(651321.5598999999).epsilon(1e-12));
    CHECK(m->var == doctest::Approx(15411125217.114428).epsilon(1e-12));
    CHECK(std::sqrt(m->var) ==
          doctest::Approx(124141.55314444244).epsilon(1e-12));
    CHECK_FALSE(m->frozen);
    double mu_clean = m->mu;
    double var_clean = m->var;

    // Three attack intervals at 100 MB from four even sources.
    for (int i = 11; i <= 13; ++i) {
        auto ev = det.step(sk(i * 60, 389, 64500, 100'000'000,
                              uniform_sources(100'000'000, 4)));
        REQUIRE(ev.alert);
        CHECK_FALSE(ev.anomaly_log);
        CHECK(ev.alert->delta ==
              doctest::Approx(0.9897625378066569).epsilon(1e-12));
        CHECK(ev.alert->volume_bps ==
              doctest::Approx(100'000'000 * 8.0 / 60.0).epsilon(1e-12));
        CHECK(ev.alert->entropy == 1.0);
        CHECK(ev.alert->session_id == 1);
        CHECK(ev.alert->interval == i * 60);
        REQUIRE(ev.alert->source_breakdown.size() == 4);
        CHECK(ev.alert->source_breakdown[0].bytes == 25'000'000);
        // The model is frozen on its last clean state, bit for bit.
        CHECK(det.model(key)->frozen);
        CHECK(det.model(key)->mu == mu_clean);
        CHECK(det.model(key)->var == var_clean);
    }

    // Quiet again: the session closes and the clean byte count feeds the model.
    auto ev = det.step(sk(14 * 60, 389, 64500, 1'000'000, {{100, 1'000'000}}));
    CHECK_FALSE(ev.alert);
    REQUIRE(ev.session_end);
    const SessionRecord& s = *ev.session_end;
    CHECK(s.session_id == 1);
    CHECK(s.dst_as == 64500);
    CHECK(s.src_port == 389);
    CHECK(s.start == 11 * 60);
    CHECK(s.end == 14 * 60);
    CHECK_FALSE(s.truncated);
    CHECK(s.duration_minutes == 3.0);
    CHECK(s.peak_volume_bps ==
          doctest::Approx(100'000'000 * 8.0 / 60.0).epsilon(1e-12));
    CHECK(s.n_sources == 4);
    CHECK(s.n_alerts == 3);
    CHECK(s.n_anomaly_logs == 0);

    m = det.model(key);
    CHECK_FALSE(m->frozen);
    CHECK(m->mu == doctest::Approx(686189.4039099999).epsilon(1e-12));
    CHECK(m->var == doctest::Approx(12483011434.862684).epsilon(1e-12));
    CHECK(det.flush().empty());
}

TEST_CASE("detector matches a reference state machine on random streams") {
    DetectorConfig cfg;
    cfg.warmup_intervals = 2;
    Detector det(cfg);

    // Reference: same rules, written as a direct transcription.
    struct Ref {
        EwmaModel model;
        uint64_t seen = 0;
        bool in_session = false;
        uint64_t next_id = 1, session_id = 0;
    } ref;
    enum class Kind { none, alert, log, session_end };

    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    uint64_t alerts = 0, logs = 0, ends = 0;
    for (int i = 0; i < 4000; ++i) {
        bool burst = unit(rng) < 0.15;
        uint64_t bytes = burst ? 40'000'000 + uint64_t(unit(rng) * 2e8)
                               : uint64_t(unit(rng) * 2'000'000);
        uint32_t nsrc = unit(rng) < 0.5 ? 1 : 8;
        auto sketch = sk(int64_t(i) * 60, 123, 64501, bytes,
                         bytes ? uniform_sources(bytes, nsrc)
                               : std::map<uint32_t, uint64_t>{});

        Kind expect = Kind::none;
        if (ref.seen < cfg.warmup_intervals) {
            ++ref.seen;
            ref.model = ewma_update(ref.model, double(bytes), cfg);
        } else {
            ++ref.seen;
            bool anomalous = score(ref.model, double(bytes), cfg).delta > cfg.tau;
            if (anomalous) {
                if (!ref.in_session) {
                    ref.in_session = true;
                    ref.model.frozen = true;
                    ref.session_id = ref.next_id++;
                }
                bool vol = to_bps(bytes, cfg.delta_t_seconds) >= cfg.nu_bps;
                bool ent = normalized_entropy(sketch.per_src) > cfg.entropy_h;
                expect = (vol && ent) ? Kind::alert : Kind::log;
            } else if (ref.in_session) {
                ref.in_session = false;
                ref.model.frozen = false;
                ref.model = ewma_update(ref.model, double(bytes), cfg);
                expect = Kind::session_end;
            } else {
                ref.model = ewma_update(ref.model, double(bytes), cfg);
            }
        }

        auto ev = det.step(sketch);
        Kind got = ev.alert         ? Kind::alert
                   : ev.anomaly_log ? Kind::log
                   : ev.session_end ? Kind::session_end
                                    : Kind::none;
        REQUIRE(got == expect);
        alerts += ev.alert.has_value();
        logs += ev.anomaly_log.has_value();
        ends += ev.session_end.has_value();
        if (ev.alert) REQUIRE(ev.alert->session_id == ref.session_id);
        if (ev.anomaly_log) REQUIRE(ev.anomaly_log->session_id == ref.session_id);

        const EwmaModel* m = det.model(SketchKey{123, 64501});
        REQUIRE(m);
        REQUIRE(m->mu == ref.model.mu);
        REQUIRE(m->var == ref.model.var);
        REQUIRE(m->frozen == ref.model.frozen);
    }
    // The stream regime makes all three event kinds appear.
    CHECK(alerts > 0);
    CHECK(logs > 0);
    CHECK(ends > 10);
}

TEST_CASE("warmup absorbs any traffic level without events") {
    DetectorConfig cfg;
    cfg.warmup_intervals = 3;
    Detector det(cfg);
    for (int i = 0; i < 3; ++i) {
        auto ev = det.step(sk(i * 60, 53, 1, 1'000'000'000,
                              uniform_sources(1'000'000'000, 4)));
        CHECK_FALSE(ev.alert);
        CHECK_FALSE(ev.anomaly_log);
    }
    // The level it absorbed is now baseline: same input is clean.
    auto ev = det.step(sk(180, 53, 1, 1'000'000'000, uniform_sources(1'000'000'000, 4)));
    CHECK_FALSE(ev.alert);
    CHECK_FALSE(ev.anomaly_log);

    // Without warmup, the very first sketch on a cold key is anomalous.
    DetectorConfig cold = DetectorConfig{};
    Detector det2(cold);
    auto first = det2.step(sk(0, 53, 1, 1'000'000'000, uniform_sources(1'000'000'000, 4)));
    CHECK(first.alert);
}

TEST_CASE("out-of-order sketches violate the feeding contract") {
    Detector det(DetectorConfig{});
    det.step(sk(120, 53, 1, 10, {{1, 10}}));
    CHECK_THROWS_AS(det.step(sk(120, 53, 1, 10, {{1, 10}})), ContractViolation);
    CHECK_THROWS_AS(det.step(sk(60, 53, 1, 10, {{1, 10}})), ContractViolation);
    // Other keys keep their own clocks.
    CHECK_NOTHROW(det.step(sk(60, 123, 1, 10, {{1, 10}})));
}

TEST_CASE("a zero sketch ends an open session") {
    Detector det(DetectorConfig{});
    auto ev = det.step(sk(0, 389, 9, 100'000'000, uniform_sources(100'000'000, 8)));
    REQUIRE(ev.alert);
    CHECK(det.live_keys() == std::set<SketchKey>{{389, 9}});

    auto end = det.step(sk(60, 389, 9, 0, {}));
    REQUIRE(end.session_end);
    CHECK(end.session_end->start == 0);
    CHECK(end.session_end->end == 60);
    CHECK(end.session_end->duration_minutes == 1.0);
    CHECK_FALSE(end.session_end->truncated);
    CHECK(end.session_end->n_sources == 8);
}

TEST_CASE("flush truncates open sessions in key order") {
    DetectorConfig cfg;
    Detector det(cfg);
    // Two keys in open sessions, one clean key.
    det.step(sk(0, 123, 7, 80'000'000, uniform_sources(80'000'000, 4)));
    det.step(sk(0, 53, 9, 90'000'000, uniform_sources(90'000'000, 4)));
    det.step(sk(60, 53, 9, 95'000'000, uniform_sources(95'000'000, 4)));
    det.step(sk(0, 19, 7, 0, {}));

    auto sessions = det.flush();
    REQUIRE(sessions.size() == 2);
    // SketchKey orders by port first: 53 before 123.
    CHECK(sessions[0].src_port == 53);
    CHECK(sessions[0].dst_as == 9);
    CHECK(sessions[0].truncated);
    CHECK(sessions[0].start == 0);
    CHECK(sessions[0].end == 60);  // last anomalous interval
    CHECK(sessions[0].duration_minutes == 2.0);  // (end + delta_t - start) / 60
    CHECK(sessions[0].n_alerts == 2);
    CHECK(sessions[1].src_port == 123);
    CHECK(sessions[1].duration_minutes == 1.0);
    CHECK(det.flush().empty());
}

TEST_CASE("alert breakdown sorts by bytes then AS and conserves the total") {
    Detector det(DetectorConfig{});
    auto ev = det.step(sk(0, 389, 5, 700'000'000,
                          {{5, 100'000'000},
                           {3, 300'000'000},
                           {9, 300'000'000},
                           {2, 0}}));
    REQUIRE(ev.alert);
    const auto& bd = ev.alert->source_breakdown;
    REQUIRE(bd.size() == 3);  // zero-byte source dropped
    CHECK(bd[0] == SourceShare{3, 300'000'000});  // tie broken by ascending AS
    CHECK(bd[1] == SourceShare{9, 300'000'000});
    CHECK(bd[2] == SourceShare{5, 100'000'000});
    uint64_t total = 0;
    for (const auto& share : bd) total += share.bytes;
    CHECK(total == 700'000'000);
}

TEST_CASE("gate failures log the anomaly, volume checked first") {
    Detector det(DetectorConfig{});
    // Anomalous but tiny and single-source: both gates fail -> volume log.
    auto ev = det.step(sk(0, 53, 4, 1'000'000, {{8, 1'000'000}}));
    CHECK_FALSE(ev.alert);
    REQUIRE(ev.anomaly_log);
    CHECK(ev.anomaly_log->failed_gate == FailedGate::volume);
    CHECK(ev.anomaly_log->entropy == 0.0);
    CHECK(ev.anomaly_log->session_id == 1);
    CHECK(std::string(to_string(FailedGate::volume)) == "volume");

    // Big enough but concentrated: entropy log, same session.
    auto ev2 = det.step(sk(60, 53, 4, 100'000'000, {{8, 100'000'000}}));
    REQUIRE(ev2.anomaly_log);
    CHECK(ev2.anomaly_log->failed_gate == FailedGate::entropy);
    CHECK(ev2.anomaly_log->session_id == 1);
    CHECK(std::string(to_string(FailedGate::entropy)) == "entropy");

    // Clean close: the session carries both logs and no alerts.
    auto ev3 = det.step(sk(120, 53, 4, 0, {}));
    REQUIRE(ev3.session_end);
    CHECK(ev3.session_end->n_anomaly_logs == 2);
    CHECK(ev3.session_end->n_alerts == 0);
    CHECK(ev3.session_end->peak_volume_bps == 0.0);
}

TEST_CASE("multi-vector correlation groups overlapping sessions per victim") {
    auto mk = [](uint64_t id, uint32_t dst, uint16_t port, int64_t start,
                 int64_t end) {
        SessionRecord s;
        s.session_id = id;
        s.dst_as = dst;
        s.src_port = port;
        s.start = start;
        s.end = end;
        return s;
    };
    std::vector<SessionRecord> sessions = {
        mk(1, 100, 53, 600, 900),
        mk(2, 100, 123, 900, 1200),   // touches #1 at 900
        mk(3, 200, 53, 600, 900),     // other victim
        mk(4, 100, 389, 2000, 3000),  // disjoint in time
        mk(5, 200, 123, 650, 700),    // inside #3
        mk(6, 100, 19, 1100, 1300),   // overlaps #2 only -> transitive with #1
    };
    CHECK(correlate_multivector(sessions) == 2);
    REQUIRE(sessions[0].multi_vector_group);
    CHECK(*sessions[0].multi_vector_group == 1);
    CHECK(*sessions[1].multi_vector_group == 1);
    CHECK(*sessions[5].multi_vector_group == 1);
    CHECK(*sessions[2].multi_vector_group == 2);
    CHECK(*sessions[4].multi_vector_group == 2);
    CHECK_FALSE(sessions[3].multi_vector_group);

    // All-disjoint control: no groups at all.
    std::vector<SessionRecord> lone = {mk(1, 100, 53, 0, 60),
                                       mk(2, 100, 123, 120, 180),
                                       mk(3, 300, 53, 0, 60)};
    CHECK(correlate_multivector(lone) == 0);
    for (const auto& s : lone) CHECK_FALSE(s.multi_vector_group);
}

TEST_CASE("session and alert records round-trip through JSONL") {
    SessionRecord s;
    s.session_id = 42;
    s.dst_as = 64500;
    s.src_port = 389;
    s.start = 660;
    s.end = 840;
    s.truncated = true;
    s.duration_minutes = 4.0;
    s.peak_volume_bps = 13333333.333333334;
    s.n_sources = 17;
    s.n_alerts = 3;
    s.n_anomaly_logs = 1;
    s.multi_vector_group = 2;

    auto back = session_from_jsonl(to_jsonl(s), "t:1");
    CHECK(back.session_id == s.session_id);
    CHECK(back.dst_as == s.dst_as);
    CHECK(back.src_port == s.src_port);
    CHECK(back.start == s.start);
    CHECK(back.end == s.end);
    CHECK(back.truncated == s.truncated);
    CHECK(back.duration_minutes == s.duration_minutes);
    CHECK(back.peak_volume_bps == s.peak_volume_bps);
    CHECK(back.n_sources == s.n_sources);
    CHECK(back.n_alerts == s.n_alerts);
    CHECK(back.n_anomaly_logs == s.n_anomaly_logs);
    CHECK(back.multi_vector_group == s.multi_vector_group);

    s.multi_vector_group.reset();
    CHECK_FALSE(session_from_jsonl(to_jsonl(s), "t:1").multi_vector_group);
    CHECK_THROWS_AS(session_from_jsonl("{\"session_id\": 1}", "t:1"), ConfigError);
    CHECK_THROWS_AS(session_from_jsonl("not json", "t:1"), ConfigError);

    DrdosAlert a;
    a.interval = 660;
    a.dst_as = 64500;
    a.src_port = 389;
    a.volume_bps = 13333333.333333334;
    a.delta = 0.9897625378066569;
    a.entropy = 1.0;
    a.source_breakdown = {{101, 25'000'000}, {102, 25'000'000}};
    a.session_id = 42;
    auto alert_back = alert_from_jsonl(to_jsonl(a), "t:1");
    CHECK(alert_back.interval == a.interval);
    CHECK(alert_back.dst_as == a.dst_as);
    CHECK(alert_back.src_port == a.src_port);
    CHECK(alert_back.volume_bps == a.volume_bps);
    CHECK(alert_back.delta == a.delta);
    CHECK(alert_back.entropy == a.entropy);
    CHECK(alert_back.source_breakdown == a.source_breakdown);
    CHECK(alert_back.session_id == a.session_id);

    // File-level readers attach line positions to errors.
    std::string dir = "/tmp/reflectmon_det_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/sessions.jsonl");
        out << to_jsonl(s) << "\n" << "broken\n";
    }
    try {
        read_session_file(dir + "/sessions.jsonl");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    CHECK_THROWS_AS(read_alert_file(dir + "/missing.jsonl"), IoError);
}
