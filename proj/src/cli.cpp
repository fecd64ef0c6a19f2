#include "ema/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <regex>

#include "ema/bench.hpp"
#include "ema/data.hpp"
#include "ema/model_graph.hpp"
#include "ema/module_check.hpp"
#include "ema/toy_net.hpp"
#include "ema/train.hpp"

namespace ema {

namespace {

[[noreturn]] void config_error(std::string_view flag, const std::string& what) {
  throw ConfigError("--" + std::string(flag) + ": " + what);
}

/// Runs f, prefixing any ConfigError with the flag it came from.
template <class F>
auto with_flag(std::string_view flag, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    config_error(flag, e.what());
  }
}

AttentionKind attention_of(const RunConfig& cfg, AttentionKind fallback) {
  if (cfg.attention.empty()) return fallback;
  return with_flag("attention", [&] { return parse_attention_kind(cfg.attention); });
}

FusionMode variant_of(const RunConfig& cfg) {
  return with_flag("variant", [&] { return parse_fusion_mode(cfg.variant); });
}

Index positive(std::string_view flag, std::optional<Index> v, Index fallback) {
  const Index x = v.value_or(fallback);
  if (x < 1) config_error(flag, "must be >= 1, got " + std::to_string(x));
  return x;
}

/// Group count for EMA, reduction ratio for CA/SE.
struct Hyper {
  Index value = 0;
  std::string_view flag;
};

Hyper hyper_of(const RunConfig& cfg, AttentionKind kind, Index ema_default, Index ca_default, Index se_default) {
  switch (kind) {
    case AttentionKind::ema:
      return {positive("groups", cfg.groups, ema_default), "groups"};
    case AttentionKind::ca:
      return {positive("reduction", cfg.reduction, ca_default), "reduction"};
    case AttentionKind::se:
      return {positive("reduction", cfg.reduction, se_default), "reduction"};
    case AttentionKind::none:
      break;
  }
  return {0, "attention"};
}

std::pair<Index, Index> hw_of(const RunConfig& cfg, std::pair<Index, Index> fallback) {
  if (!cfg.input_hw) return fallback;
  return with_flag("input-hw", [&] { return parse_hw(*cfg.input_hw); });
}

Json common_echo(const RunConfig& cfg) {
  return {{"seed", cfg.seed}, {"format", cfg.format}};
}

}  // namespace

std::pair<Index, Index> parse_hw(const std::string& text) {
  static const std::regex pattern(R"((\d+)(?:x(\d+))?)");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) throw ConfigError("expected N or HxW, got '" + text + "'");
  const Index h = std::stoll(m[1].str());
  const Index w = m[2].matched ? std::stoll(m[2].str()) : h;
  if (h < 1 || w < 1) throw ConfigError("extents must be >= 1, got '" + text + "'");
  return {h, w};
}

Json cmd_analyze(const RunConfig& cfg) {
  const bool mobile = cfg.backbone == "mobilenetv2";
  if (!mobile && cfg.backbone != "resnet50-cifar" && cfg.backbone != "resnet101-cifar") {
    config_error("backbone", "unknown value '" + cfg.backbone + "' (resnet50-cifar, resnet101-cifar, mobilenetv2)");
  }
  // CIFAR ResNets: 100 classes at 32x32. MobileNetV2: ImageNet head at 224x224, and
  // gcd-fitted hyperparameters because its narrow blocks (16, 24) do not divide by 32.
  const Index classes = positive("classes", cfg.classes, mobile ? 1000 : 100);
  const auto [h, w] = hw_of(cfg, mobile ? std::pair<Index, Index>{224, 224} : std::pair<Index, Index>{32, 32});
  const HyperPolicy policy = mobile ? HyperPolicy::gcd : HyperPolicy::strict;
  const ModelGraph base = mobile                              ? build_mobilenetv2(classes)
                          : cfg.backbone == "resnet50-cifar" ? build_resnet50_cifar(classes)
                                                              : build_resnet101_cifar(classes);

  const AttentionKind kind = attention_of(cfg, AttentionKind::none);
  const Hyper hyper = hyper_of(cfg, kind, 32, 32, 16);
  const ModelGraph g = with_flag(hyper.flag, [&] { return attach_attention(base, kind, hyper.value, policy); });
  const ComplexityReport report =
      with_flag("input-hw", [&] { return analyze(g, h, w); });

  Json echo = {{"backbone", cfg.backbone},
               {"attention", to_string(kind)},
               {"hyper", hyper.value},
               {"hyper_policy", policy == HyperPolicy::gcd ? "gcd" : "strict"},
               {"classes", classes},
               {"input_hw", {h, w}}};
  echo.update(common_echo(cfg));
  return make_document("analyze", std::move(echo), to_json(report));
}

Json cmd_gradcheck(const RunConfig& cfg, const LossBuilder* loss_override) {
  ModuleCheckConfig mc;
  mc.kind = attention_of(cfg, AttentionKind::ema);
  if (mc.kind == AttentionKind::none) config_error("attention", "gradcheck needs ema, ca or se");
  mc.batch = positive("batch", cfg.batch, 2);
  mc.channels = positive("channels", cfg.channels, 8);
  const Hyper hyper = hyper_of(cfg, mc.kind, 4, 4, 4);
  mc.hyper = hyper.value;
  std::tie(mc.height, mc.width) = hw_of(cfg, {5, 7});
  mc.fusion = variant_of(cfg);
  mc.seed = cfg.seed;

  const GradCheckReport report = with_flag(hyper.flag, [&] {
    return loss_override ? check_module_gradients(mc, *loss_override) : check_module_gradients(mc);
  });

  Json echo = {{"attention", to_string(mc.kind)},
               {"hyper", mc.hyper},
               {"variant", to_string(mc.fusion)},
               {"shape", {mc.batch, mc.channels, mc.height, mc.width}},
               {"step", mc.step},
               {"tolerance", mc.tolerance}};
  echo.update(common_echo(cfg));
  return make_document("gradcheck", std::move(echo), to_json(report));
}

Json cmd_train(const RunConfig& cfg) {
  TrainConfig tc;
  tc.seed = cfg.seed;
  tc.batch = positive("batch", cfg.batch, 32);
  tc.steps = cfg.steps.value_or(500);
  if (tc.steps < 0) config_error("steps", "must be >= 0");
  tc.lr = cfg.lr.value_or(0.05);
  if (!(tc.lr > 0.0)) config_error("lr", "must be > 0");

  ToyNetSpec spec;
  spec.attention = attention_of(cfg, AttentionKind::ema);
  const Hyper hyper = hyper_of(cfg, spec.attention, 8, 4, 4);
  spec.hyper = hyper.value;
  spec.fusion = variant_of(cfg);

  Dataset train, val;
  Index subset = 0;
  std::pair<Index, Index> hw{8, 8};
  if (cfg.dataset == "synthetic") {
    subset = positive("subset", cfg.subset, 2000);
    hw = hw_of(cfg, hw);
    train = with_flag("input-hw", [&] { return synth_quadrant(subset, 2 * cfg.seed + 1, hw.first, hw.second); });
    val = synth_quadrant(std::max<Index>(1, subset / 4), 2 * cfg.seed + 2, hw.first, hw.second);
    spec.classes = 4;
  } else {
    subset = positive("subset", cfg.subset, 2000);
    hw = hw_of(cfg, {kCifarSide, kCifarSide});
    if (hw != std::pair<Index, Index>{kCifarSide, kCifarSide}) config_error("input-hw", "CIFAR-100 images are 32x32");
    const std::filesystem::path path = cfg.dataset;
    for (Split split : {Split::train, Split::test}) {
      if (!std::filesystem::exists(cifar100_file(path, split))) {
        config_error("dataset", "no such file " + cifar100_file(path, split).string());
      }
    }
    try {
      train = load_cifar100(path, Split::train, subset);
      val = load_cifar100(path, Split::test, std::max<Index>(1, subset / 4));
    } catch (const FormatError& e) {
      config_error("dataset", e.what());
    }
    spec.classes = kCifarFineClasses;
  }
  if (cfg.classes && *cfg.classes != spec.classes) {
    config_error("classes", std::to_string(*cfg.classes) + " does not match the dataset's " +
                                std::to_string(spec.classes) + " classes");
  }

  ToyNet net = with_flag(hyper.flag, [&] { return build_toy_net(spec, cfg.seed); });
  const TrainReport report = train_toy(net, train, val, tc);

  Json echo = {{"dataset", cfg.dataset},
               {"attention", to_string(spec.attention)},
               {"hyper", spec.hyper},
               {"variant", to_string(spec.fusion)},
               {"input_hw", {hw.first, hw.second}},
               {"train_samples", train.size()},
               {"val_samples", val.size()},
               {"classes", spec.classes},
               {"params", param_count(net)},
               {"steps", tc.steps},
               {"batch", tc.batch},
               {"lr", tc.lr},
               {"momentum", tc.momentum},
               {"weight_decay", tc.weight_decay}};
  echo.update(common_echo(cfg));
  return make_document("train", std::move(echo), to_json(report));
}

Json cmd_bench(const RunConfig& cfg) {
  BenchConfig bc;
  bc.groups = positive("groups", cfg.groups, 32);
  bc.fusion = variant_of(cfg);
  bc.repetitions = cfg.repetitions;
  bc.warmup = cfg.warmup;
  bc.seed = cfg.seed;
  const auto hw = hw_of(cfg, {32, 32});
  if (hw.first != hw.second) config_error("input-hw", "bench takes a square resolution");
  const auto shapes = with_flag("input-hw", [&] { return resnet_stage_shapes(hw.first, positive("batch", cfg.batch, 1)); });
  const auto rows = with_flag("groups", [&] { return bench_ema(shapes, bc); });

  Json echo = {{"groups", bc.groups},
               {"variant", to_string(bc.fusion)},
               {"input_hw", {hw.first, hw.second}},
               {"repetitions", bc.repetitions},
               {"warmup", bc.warmup}};
  echo.update(common_echo(cfg));
  return make_document("bench", std::move(echo), to_json(rows));
}

int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err, const LossBuilder* loss_override) {
  try {
    const ReportFormat format = with_flag("format", [&] { return parse_report_format(cfg.format); });
    Json doc;
    if (cfg.subcommand == "analyze") {
      doc = cmd_analyze(cfg);
    } else if (cfg.subcommand == "gradcheck") {
      doc = cmd_gradcheck(cfg, loss_override);
    } else if (cfg.subcommand == "train") {
      doc = cmd_train(cfg);
    } else if (cfg.subcommand == "bench") {
      doc = cmd_bench(cfg);
    } else {
      config_error("subcommand", "unknown value '" + cfg.subcommand + "'");
    }

    const std::string text = render(doc, format);
    if (cfg.out.empty()) {
      out << text;
    } else {
      std::ofstream os(cfg.out);
      if (!os || !(os << text)) config_error("out", "cannot write " + cfg.out);
    }
    if (cfg.subcommand == "gradcheck" && !doc["results"]["pass"].get<bool>()) {
      err << "gradcheck: max relative error " << doc["results"]["max_relative_error"].get<double>()
          << " exceeds tolerance " << doc["results"]["tolerance"].get<double>() << "\n";
      return kExitGradMismatch;
    }
    return kExitOk;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"EMA attention toolkit: complexity analysis, gradient checks, toy training, benchmarks", "ema"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_attention = [&](CLI::App* sub) {
    sub->add_option("--attention", cfg.attention, "none | ema | ca | se");
    sub->add_option("--groups", cfg.groups, "EMA group count G");
    sub->add_option("--reduction", cfg.reduction, "CA/SE reduction ratio r");
  };
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_option("--format", cfg.format, "text | json");
    sub->add_option("--out", cfg.out, "report path (default: stdout)");
    sub->add_option("--input-hw", cfg.input_hw, "input resolution, N or HxW");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "parameter and MAC counts for a backbone");
  analyze->add_option("--backbone", cfg.backbone, "resnet50-cifar | resnet101-cifar | mobilenetv2");
  analyze->add_option("--classes", cfg.classes, "classifier width");
  add_attention(analyze);
  add_common(analyze);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients of one module");
  add_attention(gradcheck);
  gradcheck->add_option("--variant", cfg.variant, "full | no_cross_spatial");
  gradcheck->add_option("--batch", cfg.batch, "batch size B");
  gradcheck->add_option("--channels", cfg.channels, "channel count C");
  add_common(gradcheck);

  CLI::App* train = app.add_subcommand("train", "train the toy network");
  add_attention(train);
  train->add_option("--variant", cfg.variant, "full | no_cross_spatial");
  train->add_option("--dataset", cfg.dataset, "synthetic, or a CIFAR-100 binary directory");
  train->add_option("--subset", cfg.subset, "training samples (validation uses a quarter)");
  train->add_option("--steps", cfg.steps, "optimizer steps");
  train->add_option("--lr", cfg.lr, "learning rate");
  train->add_option("--batch", cfg.batch, "batch size");
  train->add_option("--classes", cfg.classes, "must match the dataset");
  add_common(train);

  CLI::App* bench = app.add_subcommand("bench", "time the EMA forward pass on ResNet stage shapes");
  bench->add_option("--groups", cfg.groups, "EMA group count G");
  bench->add_option("--variant", cfg.variant, "full | no_cross_spatial");
  bench->add_option("--batch", cfg.batch, "batch size");
  bench->add_option("--repetitions", cfg.repetitions, "timed calls per shape (>= 30)");
  bench->add_option("--warmup", cfg.warmup, "untimed calls per shape (>= 5)");
  add_common(bench);

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
  cfg.subcommand = app.get_subcommands().front()->get_name();
  return run_command(cfg, out, err);
}

}  // namespace ema
