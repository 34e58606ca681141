// Python bindings for the detection core: address mapping, EWMA detection,
// NetFlow v9 parse/encode, and the scenario generator. The shapes mirror the
// C++ API one-to-one so the Python layer stays a thin veneer.

#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reflectmon/aggregation.hpp"
#include "reflectmon/asn_map.hpp"
#include "reflectmon/attacksim.hpp"
#include "reflectmon/detection.hpp"
#include "reflectmon/netflow_v9.hpp"
#include "reflectmon/util.hpp"

namespace py = pybind11;
using namespace reflectmon;

namespace {

// Owns the template cache and counters so repeated datagrams decode
// statefully, the way the live socket loop does.
class NetflowParser {
public:
    nf9::ParseResult parse(py::bytes data) {
        auto view = data.cast<std::string_view>();
        auto bytes = std::span<const uint8_t>(
            reinterpret_cast<const uint8_t*>(view.data()), view.size());
        return nf9::parse_netflow_v9(bytes, cache_, counters_);
    }

    const nf9::ParseCounters& counters() const { return counters_; }

private:
    nf9::TemplateCache cache_;
    nf9::ParseCounters counters_;
};

}  // namespace

PYBIND11_MODULE(_reflectmon, m) {
    m.doc() = "Streaming detection of reflection/amplification DDoS attacks";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<IoError>(m, "IoError");
    py::register_exception<ContractViolation>(m, "ContractViolation");

    m.def("parse_ipv4", &parse_ipv4, py::arg("text"),
          "Dotted-quad string to host-order integer, or None");
    m.def("format_ipv4", &format_ipv4, py::arg("addr"));

    py::class_<Cidr>(m, "Cidr")
        .def(py::init([](const std::string& text) {
                 auto parsed = Cidr::parse(text);
                 if (!parsed) {
                     throw ConfigError("invalid CIDR: " + text);
                 }
                 return *parsed;
             }),
             py::arg("text"))
        .def_readonly("addr", &Cidr::addr)
        .def_readonly("len", &Cidr::len)
        .def("contains",
             [](const Cidr& self, uint32_t addr) { return self.contains(addr); },
             py::arg("addr"))
        .def("__str__", &Cidr::to_string)
        .def("__repr__",
             [](const Cidr& self) { return "Cidr('" + self.to_string() + "')"; })
        .def(py::self == py::self)
        .def(py::self < py::self);

    py::class_<PrefixTable>(m, "PrefixTable")
        .def_static("load_file", &PrefixTable::load_file, py::arg("path"))
        .def_static(
            "from_entries",
            [](const std::vector<std::pair<std::string, uint32_t>>& entries) {
                std::vector<std::pair<Cidr, uint32_t>> parsed;
                parsed.reserve(entries.size());
                for (const auto& [text, asn] : entries) {
                    auto cidr = Cidr::parse(text);
                    if (!cidr) {
                        throw ConfigError("invalid CIDR: " + text);
                    }
                    parsed.emplace_back(*cidr, asn);
                }
                return PrefixTable::from_entries(parsed);
            },
            py::arg("entries"), "Build from [(cidr_string, asn), ...]")
        .def("lookup",
             [](const PrefixTable& self, uint32_t addr) { return self.lookup(addr); },
             py::arg("addr"), "Longest-prefix match; 0 = unmapped")
        .def("lookup_ip",
             [](const PrefixTable& self, const std::string& text) {
                 auto addr = parse_ipv4(text);
                 if (!addr) {
                     throw ConfigError("invalid IPv4 address: " + text);
                 }
                 return self.lookup(*addr);
             },
             py::arg("text"))
        .def("reverse", &PrefixTable::reverse, py::arg("asn"),
             "All prefixes mapped to this AS, ascending")
        .def("__len__", &PrefixTable::size);

    py::class_<DetectorConfig>(m, "DetectorConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &DetectorConfig::alpha)
        .def_readwrite("theta", &DetectorConfig::theta)
        .def_readwrite("tau", &DetectorConfig::tau)
        .def_readwrite("epsilon", &DetectorConfig::epsilon)
        .def_readwrite("nu_bps", &DetectorConfig::nu_bps)
        .def_readwrite("entropy_h", &DetectorConfig::entropy_h)
        .def_readwrite("delta_t_seconds", &DetectorConfig::delta_t_seconds)
        .def_readwrite("warmup_intervals", &DetectorConfig::warmup_intervals)
        .def("validate", &DetectorConfig::validate);

    py::class_<EwmaModel>(m, "EwmaModel")
        .def(py::init<>())
        .def_readwrite("mu", &EwmaModel::mu)
        .def_readwrite("var", &EwmaModel::var)
        .def_readwrite("frozen", &EwmaModel::frozen)
        .def_readwrite("frozen_since", &EwmaModel::frozen_since)
        .def("__repr__", [](const EwmaModel& self) {
            return "EwmaModel(mu=" + std::to_string(self.mu) +
                   ", var=" + std::to_string(self.var) +
                   ", frozen=" + (self.frozen ? std::string("True") : "False") + ")";
        });

    py::class_<DeviationScore>(m, "DeviationScore")
        .def_readonly("delta", &DeviationScore::delta)
        .def_readonly("b", &DeviationScore::b)
        .def_readonly("mu_snapshot", &DeviationScore::mu_snapshot)
        .def_readonly("sigma_snapshot", &DeviationScore::sigma_snapshot);

    m.def("ewma_update", &ewma_update, py::arg("model"), py::arg("b"),
          py::arg("config"), "One clean-interval model update (pure)");
    m.def("score", &score, py::arg("model"), py::arg("b"), py::arg("config"),
          "Deviation score of byte count b against the model's clean state");
    m.def("normalized_entropy", &normalized_entropy, py::arg("per_src"),
          "Normalized Shannon entropy of {src_as: bytes}, in [0, 1]");

    py::class_<FlowRecord>(m, "FlowRecord")
        .def(py::init<>())
        .def_readwrite("timestamp", &FlowRecord::timestamp)
        .def_readwrite("src_ip", &FlowRecord::src_ip)
        .def_readwrite("src_port", &FlowRecord::src_port)
        .def_readwrite("dst_ip", &FlowRecord::dst_ip)
        .def_readwrite("dst_port", &FlowRecord::dst_port)
        .def_readwrite("protocol", &FlowRecord::protocol)
        .def_readwrite("packets", &FlowRecord::packets)
        .def_readwrite("bytes", &FlowRecord::bytes)
        .def_readwrite("adj_packets", &FlowRecord::adj_packets)
        .def_readwrite("adj_bytes", &FlowRecord::adj_bytes)
        .def(py::self == py::self)
        .def("__repr__", [](const FlowRecord& self) {
            return "FlowRecord(ts=" + std::to_string(self.timestamp) + ", " +
                   format_ipv4(self.src_ip) + ":" + std::to_string(self.src_port) +
                   " -> " + format_ipv4(self.dst_ip) + ":" +
                   std::to_string(self.dst_port) +
                   ", bytes=" + std::to_string(self.bytes) + ")";
        });

    py::class_<SketchKey>(m, "SketchKey")
        .def(py::init<>())
        .def_readwrite("src_port", &SketchKey::src_port)
        .def_readwrite("dst_as", &SketchKey::dst_as)
        .def(py::self == py::self)
        .def(py::self < py::self)
        .def("__repr__", [](const SketchKey& self) {
            return "SketchKey(src_port=" + std::to_string(self.src_port) +
                   ", dst_as=" + std::to_string(self.dst_as) + ")";
        });

    py::class_<TrafficSketch>(m, "TrafficSketch")
        .def(py::init<>())
        .def_readwrite("interval_start", &TrafficSketch::interval_start)
        .def_readwrite("src_port", &TrafficSketch::src_port)
        .def_readwrite("dst_as", &TrafficSketch::dst_as)
        .def_readwrite("bytes", &TrafficSketch::bytes)
        .def_readwrite("per_src", &TrafficSketch::per_src)
        .def("key", &TrafficSketch::key);

    py::class_<SourceShare>(m, "SourceShare")
        .def_readonly("src_as", &SourceShare::src_as)
        .def_readonly("bytes", &SourceShare::bytes);

    py::class_<DrdosAlert>(m, "DrdosAlert")
        .def_readonly("interval", &DrdosAlert::interval)
        .def_readonly("dst_as", &DrdosAlert::dst_as)
        .def_readonly("src_port", &DrdosAlert::src_port)
        .def_readonly("volume_bps", &DrdosAlert::volume_bps)
        .def_readonly("delta", &DrdosAlert::delta)
        .def_readonly("entropy", &DrdosAlert::entropy)
        .def_readonly("source_breakdown", &DrdosAlert::source_breakdown)
        .def_readonly("session_id", &DrdosAlert::session_id);

    py::enum_<FailedGate>(m, "FailedGate")
        .value("volume", FailedGate::volume)
        .value("entropy", FailedGate::entropy);

    py::class_<AnomalyLog>(m, "AnomalyLog")
        .def_readonly("interval", &AnomalyLog::interval)
        .def_readonly("dst_as", &AnomalyLog::dst_as)
        .def_readonly("src_port", &AnomalyLog::src_port)
        .def_readonly("volume_bps", &AnomalyLog::volume_bps)
        .def_readonly("delta", &AnomalyLog::delta)
        .def_readonly("entropy", &AnomalyLog::entropy)
        .def_readonly("failed_gate", &AnomalyLog::failed_gate)
        .def_readonly("session_id", &AnomalyLog::session_id);

    py::class_<SessionRecord>(m, "SessionRecord")
        .def_readonly("session_id", &SessionRecord::session_id)
        .def_readonly("dst_as", &SessionRecord::dst_as)
        .def_readonly("src_port", &SessionRecord::src_port)
        .def_readonly("start", &SessionRecord::start)
        .def_readonly("end", &SessionRecord::end)
        .def_readonly("truncated", &SessionRecord::truncated)
        .def_readonly("duration_minutes", &SessionRecord::duration_minutes)
        .def_readonly("peak_volume_bps", &SessionRecord::peak_volume_bps)
        .def_readonly("n_sources", &SessionRecord::n_sources)
        .def_readonly("n_alerts", &SessionRecord::n_alerts)
        .def_readonly("n_anomaly_logs", &SessionRecord::n_anomaly_logs)
        .def_readonly("multi_vector_group", &SessionRecord::multi_vector_group);

    py::class_<StepEvents>(m, "StepEvents")
        .def_readonly("alert", &StepEvents::alert)
        .def_readonly("anomaly_log", &StepEvents::anomaly_log)
        .def_readonly("session_end", &StepEvents::session_end);

    py::class_<Detector>(m, "Detector")
        .def(py::init<DetectorConfig>(), py::arg("config"))
        .def("step", &Detector::step, py::arg("sketch"),
             "Feed one interval sketch; returns any alert/log/session events")
        .def("flush", &Detector::flush,
             "End of stream: close open sessions as truncated")
        .def("live_keys", &Detector::live_keys);

    m.def(
        "correlate_multivector",
        [](std::vector<SessionRecord> sessions) {
            uint64_t groups = correlate_multivector(sessions);
            return py::make_tuple(groups, std::move(sessions));
        },
        py::arg("sessions"),
        "Group overlapping same-victim sessions; returns (n_groups, sessions)");

    py::class_<nf9::ParseCounters>(m, "ParseCounters")
        .def_readonly("datagrams", &nf9::ParseCounters::datagrams)
        .def_readonly("malformed_datagrams", &nf9::ParseCounters::malformed_datagrams)
        .def_readonly("flowsets", &nf9::ParseCounters::flowsets)
        .def_readonly("templates_learned", &nf9::ParseCounters::templates_learned)
        .def_readonly("options_flowsets_skipped",
                      &nf9::ParseCounters::options_flowsets_skipped)
        .def_readonly("records_decoded", &nf9::ParseCounters::records_decoded)
        .def_readonly("records_unknown_template",
                      &nf9::ParseCounters::records_unknown_template)
        .def_readonly("records_invalid", &nf9::ParseCounters::records_invalid)
        .def_readonly("ipv6_fields_seen", &nf9::ParseCounters::ipv6_fields_seen);

    py::class_<nf9::ParseResult>(m, "ParseResult")
        .def_readonly("records", &nf9::ParseResult::records)
        .def_readonly("ok", &nf9::ParseResult::ok)
        .def_readonly("error", &nf9::ParseResult::error);

    py::class_<NetflowParser>(m, "NetflowParser")
        .def(py::init<>())
        .def("parse", &NetflowParser::parse, py::arg("datagram"),
             "Decode one NetFlow v9 export packet; never raises on wire bytes")
        .def("counters", &NetflowParser::counters,
             py::return_value_policy::copy);

    py::class_<Scenario>(m, "Scenario")
        .def_static("from_json_text", &Scenario::from_json_text, py::arg("text"),
                    py::arg("name") = "<string>")
        .def_static("load_file", &Scenario::load_file, py::arg("path"))
        .def_readwrite("seed", &Scenario::seed)
        .def_readwrite("duration_intervals", &Scenario::duration_intervals)
        .def_readwrite("delta_t_seconds", &Scenario::delta_t_seconds)
        .def_readwrite("start_time", &Scenario::start_time);

    m.def(
        "generate_flows",
        [](const Scenario& scenario) {
            GenerateResult result = generate(scenario);
            return py::make_tuple(std::move(result.flows),
                                  std::move(result.warnings));
        },
        py::arg("scenario"),
        "Deterministic flow trace for the scenario; returns (flows, warnings)");

    m.def(
        "encode_netflow_v9",
        [](const std::vector<FlowRecord>& flows) {
            std::vector<py::bytes> out;
            for (const auto& dgram : encode_netflow_v9(flows)) {
                out.emplace_back(reinterpret_cast<const char*>(dgram.data()),
                                 dgram.size());
            }
            return out;
        },
        py::arg("flows"), "Encode flows as NetFlow v9 export packets");

    m.attr("__version__") = "0.1.0";
}
