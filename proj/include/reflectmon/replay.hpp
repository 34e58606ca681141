#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "reflectmon/flow.hpp"

namespace reflectmon {

// Parse one JSONL flow line. Throws ConfigError naming the missing/invalid
// key; `where` (e.g. "flows.jsonl:17") is prefixed to the message.
FlowRecord parse_flow_line(const std::string& line, const std::string& where);

// Render a FlowRecord as a single JSONL line (no trailing newline).
std::string format_flow_line(const FlowRecord& rec);

// Read a whole replay stream. Blank lines are skipped; any malformed line is
// a ConfigError carrying its line number.
std::vector<FlowRecord> read_replay_stream(std::istream& in, const std::string& name);
std::vector<FlowRecord> read_replay_file(const std::string& path);

void write_replay_file(const std::string& path, const std::vector<FlowRecord>& records);

}  // namespace reflectmon
