#include "reflectmon/pipeline.hpp"

#include <atomic>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "reflectmon/replay.hpp"

namespace reflectmon {

namespace {

int64_t wall_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

void Logger::emit(const char* level, const std::string& event,
                  const std::string& detail) const {
    if (quiet_) {
        std::string line = event;
        if (!detail.empty()) {
            line += ": " + detail;
        }
        std::fprintf(stderr, "%s %s\n", level, line.c_str());
        return;
    }
    nlohmann::ordered_json obj{{"ts", wall_seconds()}, {"level", level}, {"event", event}};
    if (!detail.empty()) {
        obj["detail"] = detail;
    }
    std::fprintf(stderr, "%s\n", obj.dump().c_str());
}

struct Pipeline::Sinks {
    std::ofstream alerts;
    std::ofstream anomalies;
    std::ofstream sessions;
    std::ofstream sketches;  // open only when archiving

    static std::ofstream open(const std::string& path) {
        std::ofstream out(path);
        if (!out) {
            throw IoError("cannot open for writing: " + path);
        }
        return out;
    }
};

void resolve_config(PipelineConfig& cfg) {
    if (!cfg.detector_config_path.empty()) {
        auto kv = load_kv_file(cfg.detector_config_path);
        cfg.detector = DetectorConfig::from_kv(kv, cfg.detector_config_path);
        auto it = kv.find("late_grace_intervals");
        if (it != kv.end()) {
            cfg.aggregation.late_grace_intervals = std::stoll(it->second);
        }
        it = kv.find("sampling_rate");
        if (it != kv.end()) {
            long long rate = std::stoll(it->second);
            if (rate < 1) {
                throw ConfigError(cfg.detector_config_path +
                                  ": sampling_rate must be at least 1");
            }
            cfg.sampling.sampling_rate = static_cast<uint32_t>(rate);
        }
    }
    cfg.detector.validate();
    cfg.aggregation.delta_t_seconds = cfg.detector.delta_t_seconds;
    if (cfg.sampling.sampling_rate < 1) {
        throw ConfigError("sampling rate must be at least 1");
    }
    if (cfg.out_dir.empty()) {
        throw ConfigError("output directory is required");
    }
    if (cfg.replay_path.empty() == cfg.listen_addr.empty()) {
        throw ConfigError("exactly one of --replay and --listen is required");
    }
    if (cfg.prefix_table_path.empty()) {
        throw ConfigError("prefix table path is required");
    }
}

Pipeline::Pipeline(const PipelineConfig& cfg, const Logger& log)
    : cfg_(cfg),
      log_(log),
      ports_(cfg.monitored_ports_path.empty()
                 ? MonitoredPortTable::defaults()
                 : MonitoredPortTable::load_file(cfg.monitored_ports_path)),
      store_(cfg.aggregation),
      detector_(cfg.detector),
      rules_(cfg.top_n) {
    table_ = std::make_unique<PrefixTable>(
        PrefixTable::load_file(cfg.prefix_table_path));
    std::filesystem::create_directories(cfg_.out_dir);
    sinks_ = std::make_unique<Sinks>();
    sinks_->alerts = Sinks::open(cfg_.out_dir + "/alerts.jsonl");
    sinks_->anomalies = Sinks::open(cfg_.out_dir + "/anomalies.jsonl");
    sinks_->sessions = Sinks::open(cfg_.out_dir + "/sessions.jsonl");
    if (cfg_.archive_sketches) {
        sinks_->sketches = Sinks::open(cfg_.out_dir + "/sketches.jsonl");
    }
    log_.info("prefix_table_loaded",
              std::to_string(table_->size()) + " prefixes, " +
                  std::to_string(table_->malformed_lines()) + " malformed lines");
}

Pipeline::~Pipeline() = default;

void Pipeline::process_flow(const FlowRecord& raw) {
    ++counters_.flows_read;
    FlowRecord rec = apply_sampling(raw, cfg_.sampling);
    if (rec.protocol != 17) {
        ++counters_.flows_non_udp;
        return;
    }
    AsFlow flow = map_flow(rec, *table_);
    if (flow.src_as == kUnmappedAs) {
        ++counters_.unmapped_src;
    }
    if (flow.dst_as == kUnmappedAs) {
        ++counters_.unmapped_dst;
    }
    if (!filter_flow(flow, ports_)) {
        ++counters_.flows_not_monitored;
        return;
    }
    ++counters_.flows_kept;
    advance_time(rec.timestamp);
    store_.fold(flow);
}

void Pipeline::advance_time(int64_t timestamp) {
    int64_t bucket = bucket_of(timestamp, cfg_.aggregation.delta_t_seconds);
    if (last_advance_bucket_ && bucket <= *last_advance_bucket_) {
        return;  // cursor only moves forward
    }
    last_advance_bucket_ = bucket;
    drain(store_.close_through_for(timestamp));
}

void Pipeline::drain(std::optional<int64_t> close_through) {
    std::vector<TrafficSketch> closed;
    // One interval at a time so newly created models get their silence
    // padding from the very next interval on.
    while (store_.close_next(close_through, detector_.live_keys(), closed)) {
        for (const auto& sketch : closed) {
            handle_sketch(sketch);
        }
        closed.clear();
    }
}

void Pipeline::handle_sketch(const TrafficSketch& sketch) {
    if (cfg_.archive_sketches && sketch.bytes > 0) {
        sinks_->sketches << to_jsonl(sketch) << '\n';
    }
    StepEvents events = detector_.step(sketch);
    if (events.alert) {
        ++counters_.alerts;
        sinks_->alerts << to_jsonl(*events.alert) << '\n';
        size_t before = rules_.rules().size();
        rules_.apply_alert(*events.alert, *table_);
        counters_.rules_emitted += rules_.rules().size() - before;
        log_.info("alert", "port " + std::to_string(events.alert->src_port) +
                               " dstAS " + std::to_string(events.alert->dst_as) +
                               " " + std::to_string(events.alert->volume_bps) +
                               " bps session " +
                               std::to_string(events.alert->session_id));
    }
    if (events.anomaly_log) {
        ++counters_.anomaly_logs;
        sinks_->anomalies << to_jsonl(*events.anomaly_log) << '\n';
    }
    if (events.session_end) {
        ++counters_.sessions_completed;
        sinks_->sessions << to_jsonl(*events.session_end) << '\n';
        counters_.rules_withdrawn +=
            rules_.withdraw_session(events.session_end->session_id,
                                    events.session_end->end)
                .size();
        log_.info("session_end",
                  "session " + std::to_string(events.session_end->session_id) +
                      " duration " +
                      std::to_string(events.session_end->duration_minutes) + " min");
    }
}

void Pipeline::finish() {
    if (finished_) {
        return;
    }
    finished_ = true;
    drain(std::nullopt);
    for (const auto& session : detector_.flush()) {
        ++counters_.sessions_truncated;
        sinks_->sessions << to_jsonl(session) << '\n';
        counters_.rules_withdrawn +=
            rules_.withdraw_session(session.session_id, session.end).size();
        log_.info("session_truncated", "session " + std::to_string(session.session_id));
    }
    counters_.rule_warnings = rules_.warnings().size();
    write_rules_files();
    write_counters_file();
    for (auto* sink : {&sinks_->alerts, &sinks_->anomalies, &sinks_->sessions}) {
        sink->flush();
        if (!*sink) {
            throw IoError("write failed under " + cfg_.out_dir);
        }
    }
}

void Pipeline::write_rules_files() {
    std::ofstream jsonl = Sinks::open(cfg_.out_dir + "/rules.jsonl");
    std::ofstream text = Sinks::open(cfg_.out_dir + "/rules.txt");
    for (const auto& rule : rules_.rules()) {
        jsonl << to_jsonl(rule) << '\n';
        text << "# rule " << rule.rule_id << " session " << rule.session_id << " "
             << (rule.state == FilterRule::State::active ? "active" : "withdrawn")
             << '\n';
        for (const auto& line : render_rule_text(rule)) {
            text << line << '\n';
        }
    }
    for (const auto& warning : rules_.warnings()) {
        jsonl << to_jsonl(warning) << '\n';
    }
    if (!jsonl || !text) {
        throw IoError("write failed under " + cfg_.out_dir);
    }
}

void Pipeline::write_counters_file() const {
    using ordered_json = nlohmann::ordered_json;
    const nf9::ParseCounters* netflow = netflow_counters_;
    const auto& agg = store_.counters();
    ordered_json obj;
    obj["flows"] = ordered_json{{"read", counters_.flows_read},
                                {"non_udp", counters_.flows_non_udp},
                                {"not_monitored", counters_.flows_not_monitored},
                                {"kept", counters_.flows_kept},
                                {"unmapped_src", counters_.unmapped_src},
                                {"unmapped_dst", counters_.unmapped_dst}};
    obj["aggregation"] =
        ordered_json{{"flows_folded", agg.flows_folded},
                     {"flows_late_dropped", agg.flows_late_dropped},
                     {"bytes_late_dropped", agg.bytes_late_dropped},
                     {"intervals_closed", agg.intervals_closed},
                     {"zero_sketches_emitted", agg.zero_sketches_emitted}};
    obj["detection"] = ordered_json{{"alerts", counters_.alerts},
                                    {"anomaly_logs", counters_.anomaly_logs},
                                    {"sessions_completed", counters_.sessions_completed},
                                    {"sessions_truncated", counters_.sessions_truncated}};
    obj["rules"] = ordered_json{{"emitted", counters_.rules_emitted},
                                {"withdrawn", counters_.rules_withdrawn},
                                {"warnings", counters_.rule_warnings}};
    if (netflow) {
        obj["netflow"] = ordered_json{
            {"datagrams", netflow->datagrams},
            {"malformed_datagrams", netflow->malformed_datagrams},
            {"flowsets", netflow->flowsets},
            {"templates_learned", netflow->templates_learned},
            {"options_flowsets_skipped", netflow->options_flowsets_skipped},
            {"records_decoded", netflow->records_decoded},
            {"records_unknown_template", netflow->records_unknown_template},
            {"records_invalid", netflow->records_invalid},
            {"ipv6_fields_seen", netflow->ipv6_fields_seen}};
    }
    std::ofstream out(cfg_.out_dir + "/counters.json");
    if (!out) {
        throw IoError("cannot open for writing: " + cfg_.out_dir + "/counters.json");
    }
    out << obj.dump(2) << '\n';
    if (!out) {
        throw IoError("write failed: " + cfg_.out_dir + "/counters.json");
    }
}

namespace {

std::atomic<bool> g_stop{false};
std::atomic<bool> g_dump_counters{false};

void handle_stop(int) { g_stop.store(true); }
void handle_dump(int) { g_dump_counters.store(true); }

std::pair<std::string, uint16_t> split_listen_addr(const std::string& addr) {
    auto colon = addr.rfind(':');
    if (colon == std::string::npos) {
        throw ConfigError("listen address must be ip:port, got \"" + addr + "\"");
    }
    std::string host = addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bad listen port in \"" + addr + "\"");
    }
    if (port < 1 || port > 65535) {
        throw ConfigError("listen port out of range in \"" + addr + "\"");
    }
    return {host, static_cast<uint16_t>(port)};
}

int run_replay(Pipeline& pipeline, const PipelineConfig& cfg, const Logger& log) {
    std::ifstream in(cfg.replay_path);
    if (!in) {
        throw IoError("cannot open replay file: " + cfg.replay_path);
    }
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        FlowRecord rec =
            parse_flow_line(line, cfg.replay_path + ":" + std::to_string(lineno));
        pipeline.process_flow(rec);
    }
    pipeline.finish();
    log.info("replay_done", std::to_string(pipeline.counters().flows_read) + " flows");
    return 0;
}

int run_live(Pipeline& pipeline, const PipelineConfig& cfg, const Logger& log) {
    auto [host, port] = split_listen_addr(cfg.listen_addr);
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) {
        throw IoError("socket: " + std::string(std::strerror(errno)));
    }
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "*") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
    } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw ConfigError("bad listen address \"" + host + "\"");
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        std::string err = std::strerror(errno);
        ::close(fd);
        throw IoError("bind " + cfg.listen_addr + ": " + err);
    }
    timeval timeout{1, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &timeout, sizeof(timeout));

    std::signal(SIGINT, handle_stop);
    std::signal(SIGTERM, handle_stop);
    std::signal(SIGUSR1, handle_dump);
    log.info("listening", cfg.listen_addr);

    nf9::TemplateCache cache;
    nf9::ParseCounters counters;
    pipeline.set_netflow_counters(&counters);
    std::vector<uint8_t> buffer(65536);
    while (!g_stop.load()) {
        ssize_t n = ::recv(fd, buffer.data(), buffer.size(), 0);
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) {
                pipeline.advance_time(wall_seconds());
                if (g_dump_counters.exchange(false)) {
                    pipeline.write_counters_file();
                    log.info("counters_dumped", cfg.out_dir + "/counters.json");
                }
                continue;
            }
            std::string err = std::strerror(errno);
            ::close(fd);
            throw IoError("recv: " + err);
        }
        auto result = nf9::parse_netflow_v9(
            std::span<const uint8_t>(buffer.data(), static_cast<size_t>(n)), cache,
            counters);
        if (!result.ok) {
            continue;  // counted; hostile bytes never kill the process
        }
        for (const auto& rec : result.records) {
            pipeline.process_flow(rec);
        }
    }
    ::close(fd);
    log.info("stopping", "signal received");
    pipeline.finish();
    return 0;
}

}  // namespace

int run_pipeline(const PipelineConfig& cfg, const Logger& log) {
    PipelineConfig resolved = cfg;
    resolve_config(resolved);
    Pipeline pipeline(resolved, log);
    if (!resolved.replay_path.empty()) {
        return run_replay(pipeline, resolved, log);
    }
    return run_live(pipeline, resolved, log);
}

}  // namespace reflectmon
