#pragma once

// Output documents shared by every subcommand:
//   { tool_version, subcommand, config_echo, results, timestamp }
// rendered either as JSON or as flattened "key = value" text.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ema/bench.hpp"
#include "ema/gradcheck.hpp"
#include "ema/model_graph.hpp"
#include "ema/train.hpp"

namespace ema {

inline constexpr std::string_view kToolVersion = "1.0.0";

enum class ReportFormat { text, json };

std::string_view to_string(ReportFormat f);
ReportFormat parse_report_format(std::string_view name);

using Json = nlohmann::ordered_json;

Json to_json(const ComplexityReport& r);
Json to_json(const GradCheckReport& r);
Json to_json(const TrainReport& r);
Json to_json(const std::vector<BenchRow>& rows);

/// ISO-8601 UTC, second resolution.
std::string utc_timestamp();

Json make_document(std::string_view subcommand, Json config_echo, Json results, std::string timestamp = utc_timestamp());

/// Text form: one "a.b.c = value" line per scalar; arrays of scalars stay on one line as
/// "key = [v0, v1, ...]"; arrays of objects index their elements as "key[i].field".
std::string render(const Json& document, ReportFormat format);

}  // namespace ema
