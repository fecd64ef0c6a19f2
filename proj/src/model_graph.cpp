#include "ema/model_graph.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace ema {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv:
      return "conv";
    case LayerKind::batchnorm:
      return "batchnorm";
    case LayerKind::fc:
      return "fc";
    case LayerKind::attention:
      return "attention";
    case LayerKind::add:
      return "add";
    case LayerKind::pool:
      return "pool";
    case LayerKind::activation:
      return "activation";
  }
  return "?";
}

namespace {

/// Appends layers with sequential ids; inputs default to the previous layer.
class GraphBuilder {
 public:
  GraphBuilder(std::string name, Index input_channels) {
    graph_.name = std::move(name);
    graph_.input_channels = input_channels;
    channels_ = input_channels;
  }

  void set_stage(std::string stage) { stage_ = std::move(stage); }
  int last() const { return last_; }
  Index channels() const { return channels_; }

  int conv(Index out, Index kernel, Index stride, Index padding, Index groups = 1, bool bias = false) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.in_channels = channels_;
    l.out_channels = out;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    l.groups = groups;
    l.bias = bias;
    return push(std::move(l), {last_});
  }

  /// Conv that reads from an explicit producer (projection shortcuts).
  int conv_from(int producer, Index in, Index out, Index kernel, Index stride) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = kernel;
    l.stride = stride;
    return push(std::move(l), {producer});
  }

  int batchnorm(bool site = false) {
    LayerSpec l;
    l.kind = LayerKind::batchnorm;
    l.in_channels = l.out_channels = channels_;
    l.attention_site = site;
    return push(std::move(l), {last_});
  }

  int batchnorm_of(int producer, Index channels) {
    LayerSpec l;
    l.kind = LayerKind::batchnorm;
    l.in_channels = l.out_channels = channels;
    return push(std::move(l), {producer});
  }

  int activation() {
    LayerSpec l;
    l.kind = LayerKind::activation;
    l.in_channels = l.out_channels = channels_;
    return push(std::move(l), {last_});
  }

  int add(int a, int b) {
    LayerSpec l;
    l.kind = LayerKind::add;
    l.in_channels = l.out_channels = channels_;
    return push(std::move(l), {a, b});
  }

  int global_pool() {
    LayerSpec l;
    l.kind = LayerKind::pool;
    l.kernel = 0;
    l.in_channels = l.out_channels = channels_;
    return push(std::move(l), {last_});
  }

  int fc(Index out) {
    LayerSpec l;
    l.kind = LayerKind::fc;
    l.in_channels = channels_;
    l.out_channels = out;
    l.bias = true;
    return push(std::move(l), {last_});
  }

  ModelGraph finish() {
    validate(graph_);
    return std::move(graph_);
  }

 private:
  int push(LayerSpec l, std::vector<int> inputs) {
    l.id = static_cast<int>(graph_.layers.size());
    l.inputs = std::move(inputs);
    l.stage = stage_;
    last_ = l.id;
    channels_ = l.out_channels;
    graph_.layers.push_back(std::move(l));
    return last_;
  }

  ModelGraph graph_;
  std::string stage_ = "stem";
  int last_ = kGraphInput;
  Index channels_ = 0;
};

ModelGraph build_resnet_cifar(std::string name, const std::vector<int>& blocks, Index num_classes) {
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  GraphBuilder b(std::move(name), 3);
  b.conv(64, 3, 1, 1);
  b.batchnorm();
  b.activation();

  const Index widths[] = {64, 128, 256, 512};
  const Index strides[] = {1, 2, 2, 2};
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    b.set_stage("layer" + std::to_string(s + 1));
    for (int j = 0; j < blocks[s]; ++j) {
      const Index stride = j == 0 ? strides[s] : 1;
      const Index width = widths[s];
      const Index out = 4 * width;
      const int block_in = b.last();
      const Index in_channels = b.channels();

      b.conv(width, 1, 1, 0);
      b.batchnorm();
      b.activation();
      b.conv(width, 3, stride, 1);
      b.batchnorm();
      b.activation();
      b.conv(out, 1, 1, 0);
      const int main = b.batchnorm(true);

      int shortcut = block_in;
      if (stride != 1 || in_channels != out) {
        const int proj = b.conv_from(block_in, in_channels, out, 1, stride);
        shortcut = b.batchnorm_of(proj, out);
      }
      b.add(main, shortcut);
      b.activation();
    }
  }
  b.set_stage("head");
  b.global_pool();
  b.fc(num_classes);
  return b.finish();
}

}  // namespace

ModelGraph build_resnet50_cifar(Index num_classes) {
  return build_resnet_cifar("resnet50-cifar", {3, 4, 6, 3}, num_classes);
}

ModelGraph build_resnet101_cifar(Index num_classes) {
  return build_resnet_cifar("resnet101-cifar", {3, 4, 23, 3}, num_classes);
}

ModelGraph build_mobilenetv2(Index num_classes) {
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  GraphBuilder b("mobilenetv2", 3);
  b.conv(32, 3, 2, 1);
  b.batchnorm();
  b.activation();

  struct Row {
    Index expansion, channels;
    int repeats;
    Index stride;
  };
  const Row rows[] = {{1, 16, 1, 1}, {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
                      {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
  int row_index = 0;
  for (const Row& r : rows) {
    b.set_stage("ir" + std::to_string(++row_index));
    for (int j = 0; j < r.repeats; ++j) {
      const Index stride = j == 0 ? r.stride : 1;
      const int block_in = b.last();
      const Index in_channels = b.channels();
      const Index hidden = in_channels * r.expansion;
      if (r.expansion != 1) {
        b.conv(hidden, 1, 1, 0);
        b.batchnorm();
        b.activation();
      }
      b.conv(hidden, 3, stride, 1, hidden);
      b.batchnorm();
      b.activation();
      b.conv(r.channels, 1, 1, 0);
      const int main = b.batchnorm(true);
      if (stride == 1 && in_channels == r.channels) b.add(main, block_in);
    }
  }
  b.set_stage("head");
  b.conv(1280, 1, 1, 0);
  b.batchnorm();
  b.activation();
  b.global_pool();
  b.fc(num_classes);
  return b.finish();
}

ModelGraph attach_attention(const ModelGraph& g, AttentionKind kind, Index hyper, HyperPolicy policy) {
  if (kind == AttentionKind::none) return g;
  if (hyper < 1) throw ConfigError("attention hyperparameter must be >= 1");

  int next_id = 0;
  for (const auto& l : g.layers) next_id = std::max(next_id, l.id + 1);

  ModelGraph out;
  out.name = g.name + "+" + std::string(to_string(kind));
  out.input_channels = g.input_channels;
  std::unordered_map<int, int> rename;  // site id -> attention id
  for (const auto& layer : g.layers) {
    LayerSpec copy = layer;
    for (int& in : copy.inputs) {
      if (auto it = rename.find(in); it != rename.end()) in = it->second;
    }
    out.layers.push_back(copy);
    if (!layer.attention_site) continue;

    const Index width = layer.out_channels;
    Index effective = hyper;
    if (width % hyper != 0) {
      if (policy == HyperPolicy::strict) {
        throw ConfigError(std::string(to_string(kind)) + " hyperparameter " + std::to_string(hyper) +
                          " does not divide block width " + std::to_string(width) + " in " + layer.stage);
      }
      effective = std::gcd(width, hyper);
    }
    // Validates the divisibility for the module kind.
    (void)param_count_module(kind, width, effective);

    LayerSpec att;
    att.kind = LayerKind::attention;
    att.id = next_id++;
    att.inputs = {layer.id};
    att.in_channels = att.out_channels = width;
    att.attention = kind;
    att.hyper = effective;
    att.stage = layer.stage;
    att.bias = true;
    rename[layer.id] = att.id;
    out.layers.push_back(std::move(att));
  }
  validate(out);
  return out;
}

namespace {

struct Extent {
  Index channels, height, width;
};

void check_layer(const LayerSpec& l) {
  if (l.in_channels < 1 || l.out_channels < 1) throw GraphError("layer " + std::to_string(l.id) + ": empty channels");
  if (l.kind == LayerKind::conv) {
    if (l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.groups < 1) {
      throw GraphError("conv " + std::to_string(l.id) + ": invalid geometry");
    }
    if (l.in_channels % l.groups != 0 || l.out_channels % l.groups != 0) {
      throw GraphError("conv " + std::to_string(l.id) + ": groups do not divide channels");
    }
  }
}

/// Walks the graph in order, producing each layer's output extent.
std::vector<Extent> propagate(const ModelGraph& g, Index height, Index width) {
  if (height < 1 || width < 1) throw GraphError("input extents must be positive");
  std::unordered_map<int, std::size_t> position;
  std::vector<Extent> out;
  out.reserve(g.layers.size());
  const Extent input{g.input_channels, height, width};

  auto producer = [&](int id) -> const Extent& {
    if (id == kGraphInput) return input;
    auto it = position.find(id);
    if (it == position.end()) throw GraphError("layer input " + std::to_string(id) + " is not defined earlier");
    return out[it->second];
  };

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    check_layer(l);
    if (l.inputs.empty()) throw GraphError("layer " + std::to_string(l.id) + " has no inputs");
    if (position.count(l.id)) throw GraphError("duplicate layer id " + std::to_string(l.id));
    const Extent in = producer(l.inputs[0]);
    Extent e{l.out_channels, in.height, in.width};

    if (l.kind == LayerKind::fc) {
      if (in.channels * in.height * in.width != l.in_channels) {
        throw GraphError("fc " + std::to_string(l.id) + ": expects " + std::to_string(l.in_channels) + " features");
      }
      e = {l.out_channels, 1, 1};
    } else if (in.channels != l.in_channels) {
      throw GraphError(std::string(to_string(l.kind)) + " " + std::to_string(l.id) + ": expects " +
                       std::to_string(l.in_channels) + " channels, producer gives " + std::to_string(in.channels));
    }

    switch (l.kind) {
      case LayerKind::conv:
        e.height = (in.height + 2 * l.padding - l.kernel) / l.stride + 1;
        e.width = (in.width + 2 * l.padding - l.kernel) / l.stride + 1;
        if (in.height + 2 * l.padding < l.kernel || in.width + 2 * l.padding < l.kernel) {
          throw GraphError("conv " + std::to_string(l.id) + ": non-positive output extent");
        }
        break;
      case LayerKind::pool:
        if (l.kernel == 0) {
          e.height = e.width = 1;
        } else {
          e.height = (in.height - l.kernel) / l.stride + 1;
          e.width = (in.width - l.kernel) / l.stride + 1;
          if (in.height < l.kernel || in.width < l.kernel) {
            throw GraphError("pool " + std::to_string(l.id) + ": non-positive output extent");
          }
        }
        break;
      case LayerKind::add:
        for (int src : l.inputs) {
          const Extent& other = producer(src);
          if (other.channels != in.channels || other.height != in.height || other.width != in.width) {
            throw GraphError("add " + std::to_string(l.id) + ": operand extents differ");
          }
        }
        break;
      case LayerKind::attention:
      case LayerKind::batchnorm:
      case LayerKind::activation:
        if (l.out_channels != l.in_channels) {
          throw GraphError(std::string(to_string(l.kind)) + " " + std::to_string(l.id) + " changes channel count");
        }
        break;
      case LayerKind::fc:
        break;
    }
    position[l.id] = i;
    out.push_back(e);
  }
  return out;
}

Index attention_macs(const LayerSpec& l, Index h, Index w) {
  const Index channels = l.in_channels;
  switch (l.attention) {
    case AttentionKind::ema: {
      const Index groups = l.hyper, c = channels / groups;
      // 1x1 conv over the H+W pooled positions, 3x3 conv, two (1 x c)(c x HW) fusion products.
      return groups * (c * c * (h + w) + 9 * c * c * h * w + 2 * c * h * w);
    }
    case AttentionKind::ca: {
      const Index mid = channels / l.hyper;
      return mid * channels * (h + w) + channels * mid * h + channels * mid * w;
    }
    case AttentionKind::se: {
      const Index mid = channels / l.hyper;
      return 2 * channels * mid;
    }
    case AttentionKind::none:
      break;
  }
  return 0;
}

Index layer_macs(const LayerSpec& l, const Extent& in, const Extent& out) {
  switch (l.kind) {
    case LayerKind::conv:
      return l.out_channels * (l.in_channels / l.groups) * l.kernel * l.kernel * out.height * out.width;
    case LayerKind::fc:
      return l.in_channels * l.out_channels;
    case LayerKind::attention:
      return attention_macs(l, in.height, in.width);
    default:
      return 0;
  }
}

}  // namespace

void validate(const ModelGraph& g) { (void)propagate(g, 224, 224); }

Index layer_params(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv:
      return l.out_channels * (l.in_channels / l.groups) * l.kernel * l.kernel + (l.bias ? l.out_channels : 0);
    case LayerKind::batchnorm:
      return 2 * l.out_channels;
    case LayerKind::fc:
      return l.in_channels * l.out_channels + l.out_channels;
    case LayerKind::attention:
      return param_count_module(l.attention, l.in_channels, l.hyper);
    default:
      return 0;
  }
}

ComplexityReport analyze(const ModelGraph& g, Index input_height, Index input_width) {
  const auto extents = propagate(g, input_height, input_width);
  ComplexityReport r;
  r.model = g.name;
  r.input_height = input_height;
  r.input_width = input_width;

  std::unordered_map<int, std::size_t> position;
  for (std::size_t i = 0; i < g.layers.size(); ++i) position[g.layers[i].id] = i;
  const Extent input{g.input_channels, input_height, input_width};

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const int src = l.inputs[0];
    const Extent& in = src == kGraphInput ? input : extents[position.at(src)];
    LayerCost cost{layer_params(l), layer_macs(l, in, extents[i]), extents[i].channels, extents[i].height,
                   extents[i].width};
    r.total_params += cost.params;
    r.total_macs += cost.macs;
    auto stage = std::find_if(r.stages.begin(), r.stages.end(), [&](const StageCost& s) { return s.stage == l.stage; });
    if (stage == r.stages.end()) {
      r.stages.push_back({l.stage, 0, 0});
      stage = std::prev(r.stages.end());
    }
    stage->params += cost.params;
    stage->macs += cost.macs;
    r.layers.push_back(cost);
  }
  return r;
}

Index count_params(const ModelGraph& g) {
  validate(g);
  Index total = 0;
  for (const auto& l : g.layers) total += layer_params(l);
  return total;
}

Index count_macs(const ModelGraph& g, Index input_height, Index input_width) {
  return analyze(g, input_height, input_width).total_macs;
}

std::string export_text(const ModelGraph& g, Index input_height, Index input_width) {
  const auto r = analyze(g, input_height, input_width);
  std::ostringstream os;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    os << to_string(l.kind) << " in=" << l.in_channels << " out=" << l.out_channels << " k=" << l.kernel
       << " s=" << l.stride << " params=" << r.layers[i].params << " macs=" << r.layers[i].macs;
    if (l.kind == LayerKind::attention) os << " attention=" << to_string(l.attention) << "/" << l.hyper;
    if (l.kind == LayerKind::conv && l.groups != 1) os << " groups=" << l.groups;
    os << " stage=" << l.stage << "\n";
  }
  return os.str();
}

}  // namespace ema
