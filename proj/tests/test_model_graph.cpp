#include <doctest.h>

#include <sstream>

#include "ema/model_graph.hpp"

using namespace ema;

namespace {

Index count_kind(const ModelGraph& g, LayerKind kind) {
  Index n = 0;
  for (const auto& l : g.layers) n += l.kind == kind;
  return n;
}

/// Sum of 3 C^2 / r over the ResNet bottleneck outputs.
Index ca_weight_overhead(const std::vector<int>& blocks, Index r) {
  const Index widths[] = {256, 512, 1024, 2048};
  Index total = 0;
  for (std::size_t s = 0; s < blocks.size(); ++s) total += blocks[s] * 3 * widths[s] * widths[s] / r;
  return total;
}

}  // namespace

TEST_CASE("backbone totals equal reference framework counts") {
  // Reference values from the standard torchvision layer definitions with the
  // CIFAR stem (3x3 stride-1 conv, no max-pool).
  CHECK(count_params(build_resnet50_cifar(100)) == 23705252);
  CHECK(count_macs(build_resnet50_cifar(100), 32, 32) == 1298014208);
  CHECK(count_params(build_resnet101_cifar(100)) == 42697380);
  CHECK(count_macs(build_resnet101_cifar(100), 32, 32) == 2510168064);
  CHECK(count_params(build_mobilenetv2(1000)) == 3504872);
  CHECK(count_macs(build_mobilenetv2(1000), 224, 224) == 300774272);
}

TEST_CASE("ResNet structure") {
  const ModelGraph g = build_resnet50_cifar(100);
  CHECK(count_kind(g, LayerKind::add) == 16);
  CHECK(count_kind(g, LayerKind::conv) == 1 + 16 * 3 + 4);
  const auto sites = std::count_if(g.layers.begin(), g.layers.end(), [](const LayerSpec& l) { return l.attention_site; });
  CHECK(sites == 16);
  CHECK(count_kind(build_resnet101_cifar(10), LayerKind::add) == 33);
}

TEST_CASE("attention overhead matches module formulas per site") {
  const ModelGraph base = build_resnet50_cifar(100);
  const ModelGraph with_ema = attach_attention(base, AttentionKind::ema, 32);
  Index expected = 0;
  for (auto [width, n] : {std::pair{256, 3}, {512, 4}, {1024, 6}, {2048, 3}}) {
    expected += n * param_count_module(AttentionKind::ema, width, 32);
  }
  CHECK(count_params(with_ema) - count_params(base) == expected);
  CHECK(count_kind(with_ema, LayerKind::attention) == 16);

  const Index ca_delta = count_params(attach_attention(base, AttentionKind::ca, 32)) - count_params(base);
  const Index weights_only = ca_weight_overhead({3, 4, 6, 3}, 32);
  CHECK(weights_only == 1886208);
  CHECK(ca_delta > weights_only);
  CHECK(ca_delta - weights_only < weights_only / 50);
}

TEST_CASE("attention sits before the residual add") {
  const ModelGraph g = attach_attention(build_resnet50_cifar(100), AttentionKind::se, 16);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (g.layers[i].kind != LayerKind::attention) continue;
    REQUIRE(i + 1 < g.layers.size());
    // The next layer that consumes the attention output must be an add.
    bool consumed_by_add = false;
    for (const auto& l : g.layers) {
      if (std::find(l.inputs.begin(), l.inputs.end(), g.layers[i].id) != l.inputs.end()) {
        consumed_by_add = l.kind == LayerKind::add;
      }
    }
    CHECK(consumed_by_add);
  }
}

TEST_CASE("hyperparameter policies") {
  const ModelGraph mobile = build_mobilenetv2(1000);
  CHECK_THROWS_AS(attach_attention(mobile, AttentionKind::ema, 32), ConfigError);
  const ModelGraph fitted = attach_attention(mobile, AttentionKind::ema, 32, HyperPolicy::gcd);
  for (const auto& l : fitted.layers) {
    if (l.kind == LayerKind::attention) CHECK(l.in_channels % l.hyper == 0);
  }
  CHECK(count_kind(fitted, LayerKind::attention) == 17);
  CHECK(attach_attention(mobile, AttentionKind::none, 0).layers.size() == mobile.layers.size());
}

TEST_CASE("instantiated modules count the same as the graph") {
  const ModelGraph g = attach_attention(build_resnet50_cifar(100), AttentionKind::ca, 32);
  for (const auto& l : g.layers) {
    if (l.kind != LayerKind::attention) continue;
    CHECK(layer_params(l) == buffer_elements(ca_init(l.in_channels, l.hyper, 0)));
  }
}

TEST_CASE("MACs of a convolutional graph scale with resolution squared") {
  ModelGraph g;
  g.name = "convs";
  g.input_channels = 3;
  LayerSpec a;
  a.kind = LayerKind::conv;
  a.id = 0;
  a.inputs = {kGraphInput};
  a.in_channels = 3;
  a.out_channels = 8;
  a.kernel = 3;
  a.padding = 1;
  LayerSpec b = a;
  b.id = 1;
  b.inputs = {0};
  b.in_channels = 8;
  b.out_channels = 4;
  b.kernel = 1;
  b.padding = 0;
  g.layers = {a, b};
  for (Index s : {1, 2, 3, 5}) CHECK(count_macs(g, 8 * s, 6 * s) == s * s * count_macs(g, 8, 6));
}

TEST_CASE("stage breakdown sums to totals") {
  const auto r = analyze(attach_attention(build_resnet101_cifar(100), AttentionKind::ema, 32), 32, 32);
  Index p = 0, m = 0;
  for (const auto& s : r.stages) {
    p += s.params;
    m += s.macs;
  }
  CHECK(p == r.total_params);
  CHECK(m == r.total_macs);
  CHECK(r.stages.front().stage == "stem");
  CHECK(r.stages.back().stage == "head");
}

TEST_CASE("validation rejects inconsistent graphs") {
  ModelGraph g = build_resnet50_cifar(100);
  g.layers[3].in_channels = 7;
  CHECK_THROWS_AS(validate(g), GraphError);

  ModelGraph dangling = build_resnet50_cifar(100);
  dangling.layers[5].inputs = {9999};
  CHECK_THROWS_AS(validate(dangling), GraphError);

  CHECK_THROWS_AS(count_macs(build_resnet50_cifar(100), 0, 32), GraphError);
  CHECK_THROWS_AS(build_resnet50_cifar(0), ConfigError);
}

TEST_CASE("text export has one line per layer") {
  const ModelGraph g = attach_attention(build_resnet50_cifar(100), AttentionKind::ema, 32);
  const std::string text = export_text(g, 32, 32);
  std::istringstream is(text);
  std::string line;
  Index lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == static_cast<Index>(g.layers.size()));
  CHECK(text.rfind("conv in=3 out=64 k=3 s=1 params=1728 macs=1769472 stage=stem", 0) == 0);
  CHECK(text.find("attention=ema/32") != std::string::npos);
}
