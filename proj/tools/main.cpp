// reflectmon command line tool: detection pipeline (replay or live),
// synthetic trace generation, BGP mitigation analysis, filter-rule
// generation, and measurement reports. Exit codes: 0 success, 1 bad
// configuration or input, 2 I/O failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reflectmon/aggregation.hpp"
#include "reflectmon/asn_map.hpp"
#include "reflectmon/attacksim.hpp"
#include "reflectmon/detection.hpp"
#include "reflectmon/flowspec_gen.hpp"
#include "reflectmon/mitigation_bgp.hpp"
#include "reflectmon/pipeline.hpp"
#include "reflectmon/replay.hpp"
#include "reflectmon/reporting.hpp"
#include "reflectmon/util.hpp"

namespace {

using namespace reflectmon;

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    return out;
}

// Writes to `path`, or to stdout when the path is empty. Reports are the
// only thing ever printed to stdout; logs go to stderr.
void emit_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') {
            std::cout << '\n';
        }
        return;
    }
    auto out = open_output(path);
    out << text;
    if (!text.empty() && text.back() != '\n') {
        out << '\n';
    }
    if (!out.flush()) {
        throw IoError("short write: " + path);
    }
}

struct RunArgs {
    PipelineConfig cfg;
    std::string config_path;
    // Parameter overrides; only applied when the flag was given, so they
    // beat the config file.
    double alpha = 0.0, theta = 0.0, tau = 0.0, epsilon = 0.0;
    double nu_bps = 0.0, entropy_h = 0.0;
    int64_t delta_t = 0, warmup = 0, late_grace = 0;
    uint32_t sampling_rate = 0;
};

void add_run_command(CLI::App& app, RunArgs& args, int& rc) {
    auto* run = app.add_subcommand(
        "run", "Run the detection pipeline over a replay file or a live socket");
    run->add_option("--replay", args.cfg.replay_path,
                    "Flow records as JSON lines (one object per flow)");
    run->add_option("--listen", args.cfg.listen_addr,
                    "UDP listen address ip:port for NetFlow v9 export packets");
    run->add_option("--prefix-table", args.cfg.prefix_table_path,
                    "Prefix-to-AS table, 'cidr asn' per line")
        ->required();
    run->add_option("--monitored-ports", args.cfg.monitored_ports_path,
                    "Monitored UDP service ports, 'port service baf' per line "
                    "(default: built-in reflection service table)");
    run->add_option("--config", args.config_path,
                    "key=value parameter file (alpha, theta, tau, epsilon, "
                    "nu_bps, entropy_h, warmup_intervals, delta_t_seconds, "
                    "late_grace_intervals, sampling_rate)");
    run->add_option("--out-dir", args.cfg.out_dir,
                    "Directory for alerts.jsonl, anomalies.jsonl, "
                    "sessions.jsonl, rules.jsonl, rules.txt, counters.json")
        ->required();
    run->add_option("--sampling-rate", args.sampling_rate,
                    "Flow sampling rate N (counters scaled by N; default 1)");
    run->add_option("--top-n", args.cfg.top_n,
                    "Generate filter rules for the top N source ASes per alert "
                    "(0 = all contributing sources)");
    run->add_flag("--archive-sketches", args.cfg.archive_sketches,
                  "Also write every non-empty interval sketch to sketches.jsonl");
    run->add_flag("--quiet", args.cfg.quiet,
                  "Human-readable one-line logs instead of JSON");
    auto* alpha = run->add_option("--alpha", args.alpha, "EWMA weight on history");
    auto* theta = run->add_option("--theta", args.theta, "Std-dev multiplier");
    auto* tau = run->add_option("--tau", args.tau, "Anomaly score threshold");
    auto* epsilon = run->add_option("--epsilon", args.epsilon, "Score division guard");
    auto* nu = run->add_option("--nu-bps", args.nu_bps,
                               "Minimum attack volume, bits/second");
    auto* entropy = run->add_option("--entropy-h", args.entropy_h,
                                    "Normalized source-entropy threshold");
    auto* delta_t = run->add_option("--delta-t", args.delta_t,
                                    "Aggregation interval, seconds");
    auto* warmup = run->add_option("--warmup-intervals", args.warmup,
                                   "Intervals a new key absorbs before scoring");
    auto* grace = run->add_option("--late-grace", args.late_grace,
                                  "Intervals an interval stays open for late flows");

    run->callback([&args, &rc, alpha, theta, tau, epsilon, nu, entropy, delta_t,
                   warmup, grace]() {
        PipelineConfig cfg = args.cfg;
        cfg.detector_config_path = args.config_path;
        resolve_config(cfg);  // file over defaults, then validation
        cfg.detector_config_path.clear();
        if (*alpha) cfg.detector.alpha = args.alpha;
        if (*theta) cfg.detector.theta = args.theta;
        if (*tau) cfg.detector.tau = args.tau;
        if (*epsilon) cfg.detector.epsilon = args.epsilon;
        if (*nu) cfg.detector.nu_bps = args.nu_bps;
        if (*entropy) cfg.detector.entropy_h = args.entropy_h;
        if (*delta_t) cfg.detector.delta_t_seconds = args.delta_t;
        if (*warmup) cfg.detector.warmup_intervals = static_cast<uint64_t>(args.warmup);
        if (*grace) cfg.aggregation.late_grace_intervals = args.late_grace;
        if (args.sampling_rate != 0) cfg.sampling.sampling_rate = args.sampling_rate;
        Logger log(cfg.quiet);
        rc = run_pipeline(cfg, log);
    });
}

struct SimulateArgs {
    std::string scenario_path;
    std::string out_path;
    std::string netflow_path;
    std::string prefix_table_out;
    std::string monitored_ports_path;
    bool quiet = false;
};

// Datagram container: 4-byte big-endian payload length, then the payload,
// repeated. Each payload is one NetFlow v9 export packet.
void write_datagram_file(const std::string& path,
                         const std::vector<std::vector<uint8_t>>& datagrams) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    for (const auto& dgram : datagrams) {
        uint8_t len[4] = {static_cast<uint8_t>(dgram.size() >> 24),
                          static_cast<uint8_t>(dgram.size() >> 16),
                          static_cast<uint8_t>(dgram.size() >> 8),
                          static_cast<uint8_t>(dgram.size())};
        out.write(reinterpret_cast<const char*>(len), 4);
        out.write(reinterpret_cast<const char*>(dgram.data()),
                  static_cast<std::streamsize>(dgram.size()));
    }
    if (!out.flush()) {
        throw IoError("short write: " + path);
    }
}

void add_simulate_command(CLI::App& app, SimulateArgs& args) {
    auto* sim = app.add_subcommand(
        "simulate", "Generate a deterministic synthetic flow trace from a scenario");
    sim->add_option("--scenario", args.scenario_path, "Scenario JSON file")
        ->required();
    sim->add_option("--out", args.out_path, "Flow trace output (JSON lines)")
        ->required();
    sim->add_option("--netflow", args.netflow_path,
                    "Also encode the trace as NetFlow v9 datagrams "
                    "(length-prefixed binary file)");
    sim->add_option("--prefix-table-out", args.prefix_table_out,
                    "Write the scenario's address plan as a prefix table");
    sim->add_option("--monitored-ports", args.monitored_ports_path,
                    "Port table used to warn about unmonitored attack ports");
    sim->add_flag("--quiet", args.quiet, "Human-readable logs");

    sim->callback([&args]() {
        Logger log(args.quiet);
        Scenario scenario = Scenario::load_file(args.scenario_path);
        MonitoredPortTable ports =
            args.monitored_ports_path.empty()
                ? MonitoredPortTable::defaults()
                : MonitoredPortTable::load_file(args.monitored_ports_path);
        GenerateResult result = generate(scenario, &ports);
        for (const auto& warning : result.warnings) {
            log.warn("scenario", warning);
        }
        write_replay_file(args.out_path, result.flows);
        log.info("flows_written",
                 std::to_string(result.flows.size()) + " -> " + args.out_path);
        if (!args.prefix_table_out.empty()) {
            write_prefix_table_file(args.prefix_table_out,
                                    scenario_prefix_entries(scenario));
            log.info("prefix_table_written", args.prefix_table_out);
        }
        if (!args.netflow_path.empty()) {
            auto datagrams = encode_netflow_v9(result.flows);
            write_datagram_file(args.netflow_path, datagrams);
            log.info("netflow_written", std::to_string(datagrams.size()) +
                                            " datagrams -> " + args.netflow_path);
        }
    });
}

struct MitigationArgs {
    std::string updates_path;
    std::string sessions_path;
    std::string prefix_table_path;
    std::string baseline_path;
    std::string out_path;
    int64_t pre_margin = 600;
    int64_t post_margin = 3600;
    bool quiet = false;
};

void add_mitigation_command(CLI::App& app, MitigationArgs& args) {
    auto* mit = app.add_subcommand(
        "analyze-mitigation",
        "Scan a BGP update log for victim reactions around attack sessions");
    mit->add_option("--updates", args.updates_path, "BGP updates (JSON lines)")
        ->required();
    mit->add_option("--sessions", args.sessions_path, "Attack sessions (JSON lines)")
        ->required();
    mit->add_option("--prefix-table", args.prefix_table_path,
                    "Prefix-to-AS table used to find victim prefixes")
        ->required();
    mit->add_option("--baseline", args.baseline_path,
                    "Baseline origin per prefix, 'prefix asn' per line "
                    "(default: derived from pre-window announcements)");
    mit->add_option("--pre-margin", args.pre_margin,
                    "Seconds before session start in the analysis window");
    mit->add_option("--post-margin", args.post_margin,
                    "Seconds after session end in the analysis window");
    mit->add_option("--out", args.out_path,
                    "Findings output (JSON lines; default stdout)");
    mit->add_flag("--quiet", args.quiet, "Human-readable logs");

    mit->callback([&args]() {
        Logger log(args.quiet);
        auto updates = read_bgp_update_file(args.updates_path);
        auto sessions = read_session_file(args.sessions_path);
        PrefixTable table = PrefixTable::load_file(args.prefix_table_path);
        MitigationConfig cfg{args.pre_margin, args.post_margin};
        std::map<Cidr, uint32_t> explicit_baseline;
        if (!args.baseline_path.empty()) {
            explicit_baseline = load_baseline_file(args.baseline_path);
        }

        std::string out_text;
        uint64_t n_findings = 0;
        RerouteStats reroute_stats;
        for (const auto& session : sessions) {
            auto victim_prefixes = table.reverse(session.dst_as);
            if (victim_prefixes.empty()) {
                log.warn("no_victim_prefixes",
                         "AS" + std::to_string(session.dst_as) + " session " +
                             std::to_string(session.session_id));
                continue;
            }
            AnalysisWindow window = window_for_session(session, cfg);
            auto baseline = !args.baseline_path.empty()
                                ? explicit_baseline
                                : derive_baseline_origins(updates, victim_prefixes,
                                                          window.start);
            auto findings = detect_blackholing(updates, victim_prefixes, window,
                                               session.session_id);
            auto reroutes =
                detect_reroute(updates, session.dst_as, victim_prefixes, baseline,
                               window, session.session_id, &reroute_stats);
            findings.insert(findings.end(), reroutes.begin(), reroutes.end());
            for (const auto& finding : findings) {
                out_text += to_jsonl(finding);
                out_text += '\n';
            }
            n_findings += findings.size();
        }
        emit_text(args.out_path, out_text);
        log.info("findings", std::to_string(n_findings) + " across " +
                                 std::to_string(sessions.size()) + " sessions");
        if (reroute_stats.unresolvable_prefixes > 0) {
            log.warn("unresolvable_origin_changes",
                     std::to_string(reroute_stats.unresolvable_prefixes) +
                         " origin changes had no baseline; pass --baseline");
        }
    });
}

struct GenRulesArgs {
    std::string alerts_path;
    std::string sessions_path;
    std::string prefix_table_path;
    std::string out_dir;
    uint32_t top_n = 0;
    bool quiet = false;
};

void add_gen_rules_command(CLI::App& app, GenRulesArgs& args) {
    auto* gen = app.add_subcommand(
        "gen-rules", "Generate discard rules from an alert log");
    gen->add_option("--alerts", args.alerts_path, "Alerts (JSON lines)")
        ->required();
    gen->add_option("--sessions", args.sessions_path,
                    "Sessions (JSON lines); every listed session has its rules "
                    "withdrawn at its end time");
    gen->add_option("--prefix-table", args.prefix_table_path,
                    "Prefix-to-AS table for AS-to-prefix expansion")
        ->required();
    gen->add_option("--top-n", args.top_n,
                    "Only the top N source ASes per alert (0 = all)");
    gen->add_option("--out-dir", args.out_dir,
                    "Directory for rules.jsonl and rules.txt")
        ->required();
    gen->add_flag("--quiet", args.quiet, "Human-readable logs");

    gen->callback([&args]() {
        Logger log(args.quiet);
        auto alerts = read_alert_file(args.alerts_path);
        PrefixTable table = PrefixTable::load_file(args.prefix_table_path);
        RuleStore store(args.top_n);
        for (const auto& alert : alerts) {
            store.apply_alert(alert, table);
        }
        if (!args.sessions_path.empty()) {
            for (const auto& session : read_session_file(args.sessions_path)) {
                store.withdraw_session(session.session_id, session.end);
            }
        }
        std::filesystem::create_directories(args.out_dir);
        std::string jsonl_path = args.out_dir + "/rules.jsonl";
        std::string text_path = args.out_dir + "/rules.txt";
        auto jsonl = open_output(jsonl_path);
        auto text = open_output(text_path);
        for (const auto& rule : store.rules()) {
            jsonl << to_jsonl(rule) << '\n';
            text << "# rule " << rule.rule_id << " session " << rule.session_id
                 << ' '
                 << (rule.state == FilterRule::State::active ? "active"
                                                             : "withdrawn")
                 << '\n';
            for (const auto& line : render_rule_text(rule)) {
                text << line << '\n';
            }
        }
        for (const auto& warning : store.warnings()) {
            jsonl << to_jsonl(warning) << '\n';
            log.warn("rule_skipped", "AS" + std::to_string(warning.src_as) + ": " +
                                         warning.reason);
        }
        if (!jsonl.flush() || !text.flush()) {
            throw IoError("short write under " + args.out_dir);
        }
        log.info("rules_written",
                 std::to_string(store.rules().size()) + " rules, " +
                     std::to_string(store.warnings().size()) + " warnings -> " +
                     args.out_dir);
    });
}

struct ReportArgs {
    std::string sessions_path;
    std::string sketches_path;
    std::string out_path;
    uint32_t dst_as = 0;
    uint16_t port = 0;
    std::string from_day;
    std::string to_day;
    std::vector<uint32_t> src_sample;
    bool quiet = false;
};

void add_report_command(CLI::App& app, ReportArgs& stats_args,
                        ReportArgs& matrix_args) {
    auto* report = app.add_subcommand("report", "Measurement reports");
    report->require_subcommand(1);

    auto* stats = report->add_subcommand(
        "stats", "Attack population statistics (CDFs, quartiles, per-port counts)");
    stats->add_option("--sessions", stats_args.sessions_path,
                      "Sessions (JSON lines)")
        ->required();
    stats->add_option("--out", stats_args.out_path,
                      "Output JSON file (default stdout)");
    stats->callback([&stats_args]() {
        auto sessions = read_session_file(stats_args.sessions_path);
        AttackStats computed = compute_stats(std::move(sessions));
        emit_text(stats_args.out_path, stats_to_json(computed));
    });

    auto* matrix = report->add_subcommand(
        "matrix", "Daily per-source traffic matrix for one (destination AS, port) "
                  "key, attack intervals excluded");
    matrix->add_option("--sketches", matrix_args.sketches_path,
                       "Sketch archive (JSON lines, from run --archive-sketches)")
        ->required();
    matrix->add_option("--sessions", matrix_args.sessions_path,
                       "Sessions whose intervals are excluded from the matrix");
    matrix->add_option("--dst-as", matrix_args.dst_as, "Destination AS")
        ->required();
    matrix->add_option("--port", matrix_args.port, "Monitored UDP source port")
        ->required();
    matrix->add_option("--from", matrix_args.from_day, "First day, YYYY-MM-DD")
        ->required();
    matrix->add_option("--to", matrix_args.to_day, "Last day, YYYY-MM-DD")
        ->required();
    matrix->add_option("--src-as", matrix_args.src_sample,
                       "Source AS sample (repeatable; default: all sources seen)");
    matrix->add_option("--out", matrix_args.out_path,
                       "Output CSV file (default stdout)");
    matrix->callback([&matrix_args]() {
        auto require_day = [](const std::string& text) {
            auto day = parse_day(text);
            if (!day) {
                throw ConfigError("invalid day (want YYYY-MM-DD): " + text);
            }
            return *day;
        };
        auto archive = read_sketch_file(matrix_args.sketches_path);
        std::vector<SessionRecord> sessions;
        if (!matrix_args.sessions_path.empty()) {
            sessions = read_session_file(matrix_args.sessions_path);
        }
        TrafficMatrix result = traffic_matrix(
            archive, sessions, matrix_args.dst_as, matrix_args.port,
            require_day(matrix_args.from_day), require_day(matrix_args.to_day),
            matrix_args.src_sample);
        emit_text(matrix_args.out_path, result.to_csv());
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming detection of reflection/amplification DDoS attacks "
                 "in inter-domain flow telemetry"};
    app.require_subcommand(1);

    int rc = 0;
    RunArgs run_args;
    SimulateArgs simulate_args;
    MitigationArgs mitigation_args;
    GenRulesArgs gen_rules_args;
    ReportArgs stats_args, matrix_args;
    add_run_command(app, run_args, rc);
    add_simulate_command(app, simulate_args);
    add_mitigation_command(app, mitigation_args);
    add_gen_rules_command(app, gen_rules_args);
    add_report_command(app, stats_args, matrix_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // bad flags are a configuration error
    } catch (const reflectmon::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const reflectmon::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return rc;
}
