#include "ema/report.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

namespace ema {

std::string_view to_string(ReportFormat f) { return f == ReportFormat::json ? "json" : "text"; }

ReportFormat parse_report_format(std::string_view name) {
  if (name == "text") return ReportFormat::text;
  if (name == "json") return ReportFormat::json;
  throw ConfigError("format: expected text or json, got '" + std::string(name) + "'");
}

Json to_json(const ComplexityReport& r) {
  Json stages = Json::array();
  for (const auto& s : r.stages) stages.push_back({{"stage", s.stage}, {"params", s.params}, {"macs", s.macs}});
  return {{"model", r.model},
          {"input_hw", {r.input_height, r.input_width}},
          {"params", r.total_params},
          {"macs", r.total_macs},
          {"params_millions", static_cast<double>(r.total_params) / 1e6},
          {"macs_millions", static_cast<double>(r.total_macs) / 1e6},
          {"layers", r.layers.size()},
          {"stages", std::move(stages)}};
}

Json to_json(const GradCheckReport& r) {
  Json params = Json::array();
  for (const auto& p : r.params) {
    params.push_back({{"name", p.name}, {"max_relative_error", p.max_relative_error}, {"compared", p.compared}});
  }
  return {{"pass", r.pass},
          {"max_relative_error", r.max_relative_error},
          {"tolerance", r.tolerance},
          {"step", r.step},
          {"compared", r.compared},
          {"params", std::move(params)}};
}

Json to_json(const TrainReport& r) {
  Json epochs = Json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"steps", e.steps},
                      {"mean_loss", e.mean_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"val_accuracy", e.val_accuracy}});
  }
  return {{"initial_loss", r.initial_loss},
          {"initial_val_accuracy", r.initial_val_accuracy},
          {"final_val_accuracy", r.final_val_accuracy},
          {"checksum", r.checksum},
          {"losses", r.losses},
          {"epochs", std::move(epochs)}};
}

Json to_json(const std::vector<BenchRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"shape", {r.shape.batch, r.shape.channels, r.shape.height, r.shape.width}},
                   {"groups", r.groups},
                   {"repetitions", r.repetitions},
                   {"median_seconds", r.median_seconds},
                   {"min_seconds", r.min_seconds}});
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json make_document(std::string_view subcommand, Json config_echo, Json results, std::string timestamp) {
  return {{"tool_version", kToolVersion},
          {"subcommand", subcommand},
          {"config_echo", std::move(config_echo)},
          {"results", std::move(results)},
          {"timestamp", std::move(timestamp)}};
}

namespace {

bool all_scalars(const Json& array) {
  for (const auto& v : array) {
    if (v.is_structured()) return false;
  }
  return true;
}

void flatten(const Json& value, const std::string& key, std::ostringstream& os) {
  if (value.is_object()) {
    for (const auto& [k, v] : value.items()) flatten(v, key.empty() ? k : key + "." + k, os);
  } else if (value.is_array() && !all_scalars(value)) {
    for (std::size_t i = 0; i < value.size(); ++i) flatten(value[i], key + "[" + std::to_string(i) + "]", os);
  } else if (value.is_array()) {
    os << key << " = [";
    for (std::size_t i = 0; i < value.size(); ++i) os << (i ? ", " : "") << value[i].dump();
    os << "]\n";
  } else {
    os << key << " = " << value.dump() << "\n";
  }
}

}  // namespace

std::string render(const Json& document, ReportFormat format) {
  if (format == ReportFormat::json) return document.dump(2) + "\n";
  std::ostringstream os;
  flatten(document, "", os);
  return os.str();
}

}  // namespace ema
