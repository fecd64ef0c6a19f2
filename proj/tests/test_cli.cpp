#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ema/bench.hpp"
#include "ema/cli.hpp"
#include "ema/module_check.hpp"

using namespace ema;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "ema");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

Json run_json(std::vector<std::string> args) {
  args.push_back("--format");
  args.push_back("json");
  const Run r = run(args);
  REQUIRE(r.code == 0);
  return Json::parse(r.out);
}

/// Field paths with array elements collapsed to "[]", in first-seen order.
void collect_paths(const Json& v, const std::string& prefix, std::vector<std::string>& out) {
  auto add = [&](const std::string& p) {
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  };
  if (v.is_object()) {
    for (const auto& [k, child] : v.items()) collect_paths(child, prefix.empty() ? k : prefix + "." + k, out);
  } else if (v.is_array()) {
    bool structured = false;
    for (const auto& child : v) {
      if (child.is_structured()) {
        structured = true;
        collect_paths(child, prefix + "[]", out);
      }
    }
    if (!structured) add(prefix + "[]");
  } else {
    add(prefix);
  }
}

std::string structure(const Json& doc) {
  std::vector<std::string> paths;
  collect_paths(doc, "", paths);
  std::string s;
  for (const auto& p : paths) s += p + "\n";
  return s;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Json without_timestamp(Json doc) {
  doc.erase("timestamp");
  return doc;
}

}  // namespace

TEST_CASE("analyze reports reference totals") {
  const Json doc = run_json({"analyze", "--backbone", "resnet50-cifar"});
  CHECK(doc["results"]["params"] == 23705252);
  CHECK(doc["subcommand"] == "analyze");
  CHECK(doc["tool_version"] == std::string(kToolVersion));
  const Json mobile = run_json({"analyze", "--backbone", "mobilenetv2", "--attention", "ema", "--groups", "32"});
  CHECK(mobile["config_echo"]["hyper_policy"] == "gcd");
  CHECK(mobile["config_echo"]["classes"] == 1000);
}

TEST_CASE("configuration errors exit 2 and name the key") {
  Run r = run({"analyze", "--backbone", "vgg16"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("--backbone") != std::string::npos);

  r = run({"analyze", "--attention", "ema", "--groups", "48"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("--groups") != std::string::npos);

  r = run({"analyze", "--colour", "red"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("--colour") != std::string::npos);

  r = run({"gradcheck", "--attention", "none"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("--attention") != std::string::npos);

  r = run({"train", "--dataset", "/nonexistent/cifar"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("--dataset") != std::string::npos);

  r = run({"analyze", "--format", "xml"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("--format") != std::string::npos);

  r = run({"train", "--steps", "0", "--input-hw", "7"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("--input-hw") != std::string::npos);

  CHECK(run({}).code == kExitConfig);
  CHECK(run({"analyze", "--help"}).code == kExitOk);
}

TEST_CASE("gradcheck passes for each module with default shapes") {
  for (std::string kind : {"ema", "ca", "se"}) {
    const Json doc = run_json({"gradcheck", "--attention", kind});
    CHECK(doc["results"]["pass"] == true);
    CHECK(doc["results"]["max_relative_error"].get<double>() < 1e-4);
    CHECK(doc["config_echo"]["shape"] == Json::array({2, 8, 5, 7}));
  }
}

TEST_CASE("gradcheck with a corrupted backward rule exits nonzero") {
  RunConfig cfg;
  cfg.subcommand = "gradcheck";
  cfg.attention = "ema";
  ModuleCheckConfig mc;
  const LossBuilder correct = module_check_loss(mc);
  // Scales the gradient flowing into the module output by 1.5 while leaving values alone.
  const LossBuilder corrupted = [correct](ad::Tape& tape, const std::vector<ad::Var>& vars) {
    const ad::Var loss = correct(tape, vars);
    return tape.apply(
        "corrupt", {loss}, [](ad::Inputs in) { return *in[0]; },
        [](ad::Inputs, const Tensor&, const Tensor& g) { return std::vector<Tensor>{g * 1.5}; });
  };
  std::ostringstream out, err;
  CHECK(run_command(cfg, out, err, &corrupted) == kExitGradMismatch);
  CHECK(run_command(cfg, out, err, &correct) == kExitOk);
}

TEST_CASE("non-finite values exit 3") {
  RunConfig cfg;
  cfg.subcommand = "gradcheck";
  const LossBuilder poisoned = [](ad::Tape& tape, const std::vector<ad::Var>& vars) {
    return ad::sum(vars[0] * tape.leaf(Tensor::constant(vars[0].shape(), std::nan(""))));
  };
  std::ostringstream out, err;
  CHECK(run_command(cfg, out, err, &poisoned) == kExitNumeric);
}

TEST_CASE("train reports echo the variant and honour zero steps") {
  const Json doc = run_json({"train", "--attention", "ema", "--variant", "no_cross_spatial", "--steps", "0"});
  CHECK(doc["config_echo"]["variant"] == "no_cross_spatial");
  CHECK(doc["results"]["losses"].empty());
}

TEST_CASE("same seed gives identical report bodies apart from the timestamp") {
  const std::vector<std::string> args{"train", "--steps", "5", "--subset", "64", "--seed", "3"};
  const Json a = run_json(args), b = run_json(args);
  CHECK(without_timestamp(a) == without_timestamp(b));
  const Json c = run_json({"train", "--steps", "5", "--subset", "64", "--seed", "4"});
  CHECK(a["results"]["losses"] != c["results"]["losses"]);
}

TEST_CASE("reports keep a fixed structure") {
  const std::filesystem::path golden = std::filesystem::path(EMA_SOURCE_DIR) / "tests" / "golden";
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases{
      {"analyze", {"analyze", "--attention", "ema"}},
      {"gradcheck", {"gradcheck", "--attention", "ca"}},
      {"train", {"train", "--steps", "3", "--subset", "32"}},
      {"bench", {"bench", "--input-hw", "8"}},
  };
  for (const auto& [name, args] : cases) {
    CAPTURE(name);
    const Json doc = run_json(args);
    CHECK(doc.contains("timestamp"));
    CHECK(structure(without_timestamp(doc)) == read_file(golden / (name + ".txt")));
  }
}

TEST_CASE("text format flattens to key = value lines") {
  const Run r = run({"analyze"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("tool_version = \"") == 0);
  CHECK(r.out.find("results.params = 23705252\n") != std::string::npos);
  CHECK(r.out.find("results.stages[0].stage = \"stem\"\n") != std::string::npos);
  CHECK(r.out.find("config_echo.input_hw = [32, 32]\n") != std::string::npos);
}

TEST_CASE("--out writes the report to a file") {
  const auto path = std::filesystem::temp_directory_path() / "ema_cli_out.json";
  const Run r = run({"analyze", "--format", "json", "--out", path.string()});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  CHECK(Json::parse(read_file(path))["results"]["params"] == 23705252);
  std::filesystem::remove(path);
}

TEST_CASE("input resolution parsing") {
  CHECK(parse_hw("32") == std::pair<Index, Index>{32, 32});
  CHECK(parse_hw("5x7") == std::pair<Index, Index>{5, 7});
  CHECK_THROWS_AS(parse_hw("5x"), ConfigError);
  CHECK_THROWS_AS(parse_hw("0"), ConfigError);
}

TEST_CASE("median ignores sample order") {
  std::vector<double> v{5, 1, 4, 2, 3, 9, 7};
  const double m = median(v);
  CHECK(m == 4);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(v.begin(), v.end(), rng);
    CHECK(median(v) == m);
  }
  CHECK(median({1, 2, 3, 10}) == 2.5);
  CHECK_THROWS_AS(median({}), ConfigError);
}

TEST_CASE("bench reports one row per stage shape") {
  const Json doc = run_json({"bench", "--input-hw", "16"});
  REQUIRE(doc["results"].size() == 4);
  CHECK(doc["results"][0]["shape"] == Json::array({1, 256, 16, 16}));
  CHECK(doc["results"][3]["shape"] == Json::array({1, 2048, 2, 2}));
  CHECK(doc["results"][0]["repetitions"].get<int>() >= 30);
  CHECK(run({"bench", "--repetitions", "10"}).code == kExitConfig);
}

TEST_CASE("doubling resolution does not make the forward pass cheaper") {
  BenchConfig cfg;
  const auto small = bench_ema({{1, 256, 16, 16}}, cfg);
  const auto large = bench_ema({{1, 256, 32, 32}}, cfg);
  CHECK(large[0].median_seconds * 1.5 >= small[0].median_seconds);
}
