#include "eve/nn.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace eve {

using nlohmann::json;

std::vector<std::array<int, 3>> NetworkDef::activation_shapes() const {
  std::vector<std::array<int, 3>> shapes;
  std::array<int, 3> cur = {input_ch, input_h, input_w};
  shapes.push_back(cur);
  for (size_t li = 0; li < layers.size(); ++li) {
    const LayerDef& l = layers[li];
    if (const auto* c = std::get_if<ConvLayer>(&l)) {
      if (c->in_ch != cur[0])
        throw std::runtime_error("layer " + std::to_string(li) +
                                 ": conv in_ch " + std::to_string(c->in_ch) +
                                 " != incoming channels " + std::to_string(cur[0]));
      int oh = (cur[1] - c->kh) / c->stride + 1;
      int ow = (cur[2] - c->kw) / c->stride + 1;
      if (oh <= 0 || ow <= 0)
        throw std::runtime_error("layer " + std::to_string(li) +
                                 ": conv kernel larger than input");
      cur = {c->out_ch, oh, ow};
    } else if (const auto* p = std::get_if<PoolLayer>(&l)) {
      if (cur[1] % p->size != 0 || cur[2] % p->size != 0)
        throw std::runtime_error("layer " + std::to_string(li) +
                                 ": pool size does not divide input");
      cur = {cur[0], cur[1] / p->size, cur[2] / p->size};
    } else {
      const auto& f = std::get<FcLayer>(l);
      int flat = cur[0] * cur[1] * cur[2];
      if (f.m != flat)
        throw std::runtime_error("layer " + std::to_string(li) + ": fc m " +
                                 std::to_string(f.m) + " != flattened input " +
                                 std::to_string(flat));
      if (f.block_x <= 0 || f.block_y <= 0 || f.m % f.block_x != 0 ||
          f.n % f.block_y != 0)
        throw std::runtime_error("layer " + std::to_string(li) +
                                 ": fc block size does not tile matrix");
      cur = {f.n, 1, 1};
    }
    shapes.push_back(cur);
  }
  return shapes;
}

int NetworkDef::num_classes() const {
  auto shapes = activation_shapes();
  const auto& out = shapes.back();
  return out[0] * out[1] * out[2];
}

static Activation parse_act(const std::string& s) {
  if (s == "none") return Activation::None;
  if (s == "relu") return Activation::Relu;
  throw std::runtime_error("unknown activation: " + s);
}

static std::string act_name(Activation a) {
  return a == Activation::Relu ? "relu" : "none";
}

NetworkDef NetworkDef::from_json_text(const std::string& text) {
  json j = json::parse(text);
  NetworkDef def;
  def.input_ch = j.at("input").at("channels").get<int>();
  def.input_h = j.at("input").at("height").get<int>();
  def.input_w = j.at("input").at("width").get<int>();
  for (const auto& jl : j.at("layers")) {
    std::string type = jl.at("type").get<std::string>();
    if (type == "conv") {
      ConvLayer c;
      c.in_ch = jl.at("in_ch").get<int>();
      c.out_ch = jl.at("out_ch").get<int>();
      c.kh = jl.at("kh").get<int>();
      c.kw = jl.at("kw").get<int>();
      c.stride = jl.value("stride", 1);
      c.act = parse_act(jl.value("activation", "none"));
      def.layers.emplace_back(c);
    } else if (type == "pool") {
      PoolLayer p;
      std::string kind = jl.value("kind", "max");
      p.kind = kind == "avg" ? PoolLayer::Kind::Avg : PoolLayer::Kind::Max;
      p.size = jl.at("size").get<int>();
      def.layers.emplace_back(p);
    } else if (type == "fc") {
      FcLayer f;
      f.m = jl.at("m").get<int>();
      f.n = jl.at("n").get<int>();
      f.block_x = jl.value("block_x", 1);
      f.block_y = jl.value("block_y", 1);
      f.act = parse_act(jl.value("activation", "none"));
      def.layers.emplace_back(f);
    } else {
      throw std::runtime_error("unknown layer type: " + type);
    }
  }
  def.activation_shapes();  // validate composition
  return def;
}

NetworkDef NetworkDef::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network def: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string NetworkDef::to_json_text() const {
  json j;
  j["input"] = {{"channels", input_ch}, {"height", input_h}, {"width", input_w}};
  j["layers"] = json::array();
  for (const auto& l : layers) {
    json jl;
    if (const auto* c = std::get_if<ConvLayer>(&l)) {
      jl = {{"type", "conv"},   {"in_ch", c->in_ch}, {"out_ch", c->out_ch},
            {"kh", c->kh},      {"kw", c->kw},       {"stride", c->stride},
            {"activation", act_name(c->act)}};
    } else if (const auto* p = std::get_if<PoolLayer>(&l)) {
      jl = {{"type", "pool"},
            {"kind", p->kind == PoolLayer::Kind::Avg ? "avg" : "max"},
            {"size", p->size}};
    } else {
      const auto& f = std::get<FcLayer>(l);
      jl = {{"type", "fc"},        {"m", f.m},
            {"n", f.n},            {"block_x", f.block_x},
            {"block_y", f.block_y},{"activation", act_name(f.act)}};
    }
    j["layers"].push_back(jl);
  }
  return j.dump(2);
}

std::vector<int> weight_shape(const LayerDef& layer) {
  if (const auto* c = std::get_if<ConvLayer>(&layer))
    return {c->out_ch, c->in_ch, c->kh, c->kw};
  if (const auto* f = std::get_if<FcLayer>(&layer)) return {f->m, f->n};
  return {};
}

std::vector<int> bias_shape(const LayerDef& layer) {
  if (const auto* c = std::get_if<ConvLayer>(&layer)) return {c->out_ch};
  if (const auto* f = std::get_if<FcLayer>(&layer)) return {f->n};
  return {};
}

TrainedModel init_model(const NetworkDef& def, uint64_t seed) {
  def.activation_shapes();
  TrainedModel model;
  model.def = def;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (const auto& l : def.layers) {
    auto ws = weight_shape(l);
    if (ws.empty()) {
      model.weights.emplace_back();
      model.biases.emplace_back();
      model.masks.emplace_back();
      continue;
    }
    Tensor w(ws);
    int fan_in = 1;
    if (const auto* c = std::get_if<ConvLayer>(&l))
      fan_in = c->in_ch * c->kh * c->kw;
    else
      fan_in = std::get<FcLayer>(l).m;
    float scale = std::sqrt(2.0f / static_cast<float>(fan_in));
    for (auto& v : w.data) v = scale * normal(rng);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(Tensor(bias_shape(l)));
    model.masks.push_back(Tensor::ones(ws));
  }
  return model;
}

namespace {

struct ForwardCache {
  std::vector<Tensor> acts;               // acts[0] = input, acts[i+1] = layer i output
  std::vector<std::vector<int>> argmax;   // per layer, max-pool winner indices
};

Tensor conv_forward(const ConvLayer& c, const Tensor& in, const Tensor& w,
                    const Tensor& b, int h, int wd) {
  int oh = (h - c.kh) / c.stride + 1;
  int ow = (wd - c.kw) / c.stride + 1;
  Tensor out({c.out_ch, oh, ow});
  for (int oc = 0; oc < c.out_ch; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b[oc];
        for (int ic = 0; ic < c.in_ch; ++ic)
          for (int ky = 0; ky < c.kh; ++ky)
            for (int kx = 0; kx < c.kw; ++kx) {
              int iy = oy * c.stride + ky, ix = ox * c.stride + kx;
              acc += static_cast<double>(in[(ic * h + iy) * wd + ix]) *
                     w[((oc * c.in_ch + ic) * c.kh + ky) * c.kw + kx];
            }
        float v = static_cast<float>(acc);
        if (c.act == Activation::Relu && v < 0.0f) v = 0.0f;
        out[(oc * oh + oy) * ow + ox] = v;
      }
  return out;
}

}  // namespace

static ForwardCache forward_cached(const TrainedModel& model, const Tensor& input) {
  auto shapes = model.def.activation_shapes();
  {
    const auto& s0 = shapes[0];
    long want = static_cast<long>(s0[0]) * s0[1] * s0[2];
    if (static_cast<long>(input.data.size()) != want)
      throw std::runtime_error("input shape mismatch at layer 0: expected " +
                               std::to_string(want) + " values, got " +
                               std::to_string(input.data.size()));
  }
  ForwardCache cache;
  cache.acts.push_back(input);
  cache.argmax.resize(model.def.layers.size());
  for (size_t li = 0; li < model.def.layers.size(); ++li) {
    const Tensor& in = cache.acts.back();
    const auto& s = shapes[li];
    const LayerDef& l = model.def.layers[li];
    if (const auto* c = std::get_if<ConvLayer>(&l)) {
      cache.acts.push_back(
          conv_forward(*c, in, model.weights[li], model.biases[li], s[1], s[2]));
    } else if (const auto* p = std::get_if<PoolLayer>(&l)) {
      int ch = s[0], h = s[1], wd = s[2], k = p->size;
      int oh = h / k, ow = wd / k;
      Tensor out({ch, oh, ow});
      auto& winners = cache.argmax[li];
      if (p->kind == PoolLayer::Kind::Max) winners.assign(ch * oh * ow, -1);
      for (int cI = 0; cI < ch; ++cI)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            if (p->kind == PoolLayer::Kind::Max) {
              float best = -std::numeric_limits<float>::infinity();
              int best_idx = -1;
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                  int idx = (cI * h + oy * k + dy) * wd + ox * k + dx;
                  if (in[idx] > best) { best = in[idx]; best_idx = idx; }
                }
              out[(cI * oh + oy) * ow + ox] = best;
              winners[(cI * oh + oy) * ow + ox] = best_idx;
            } else {
              double acc = 0;
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                  acc += in[(cI * h + oy * k + dy) * wd + ox * k + dx];
              out[(cI * oh + oy) * ow + ox] =
                  static_cast<float>(acc / (k * k));
            }
          }
      cache.acts.push_back(std::move(out));
    } else {
      const auto& f = std::get<FcLayer>(l);
      const Tensor& w = model.weights[li];
      Tensor out({f.n, 1, 1});
      for (int j = 0; j < f.n; ++j) {
        double acc = model.biases[li][j];
        for (int i = 0; i < f.m; ++i)
          acc += static_cast<double>(in[i]) * w[static_cast<size_t>(i) * f.n + j];
        float v = static_cast<float>(acc);
        if (f.act == Activation::Relu && v < 0.0f) v = 0.0f;
        out[j] = v;
      }
      cache.acts.push_back(std::move(out));
    }
  }
  return cache;
}

Tensor forward(const TrainedModel& model, const Tensor& input) {
  auto cache = forward_cached(model, input);
  Tensor out = std::move(cache.acts.back());
  out.require_finite("forward output");
  return out;
}

static std::vector<double> softmax(const Tensor& scores) {
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : scores.data) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> p(scores.data.size());
  double sum = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(static_cast<double>(scores[i]) - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::pair<double, Grads> loss_and_grads(const TrainedModel& model,
                                        const std::vector<Sample>& batch) {
  if (batch.empty()) throw std::runtime_error("loss_and_grads: empty batch");
  auto shapes = model.def.activation_shapes();
  Grads grads;
  for (size_t li = 0; li < model.def.layers.size(); ++li) {
    grads.weights.emplace_back(model.weights[li].empty()
                                   ? Tensor()
                                   : Tensor(model.weights[li].shape));
    grads.biases.emplace_back(model.biases[li].empty()
                                  ? Tensor()
                                  : Tensor(model.biases[li].shape));
  }
  double total_loss = 0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  for (const auto& sample : batch) {
    ForwardCache cache = forward_cached(model, sample.input);
    const Tensor& scores = cache.acts.back();
    auto p = softmax(scores);
    int label = sample.label;
    if (label < 0 || label >= static_cast<int>(p.size()))
      throw std::runtime_error("label out of range");
    total_loss += -std::log(std::max(p[static_cast<size_t>(label)], 1e-300)) * inv_b;

    // dL/dscores for softmax cross-entropy
    Tensor delta(scores.shape);
    for (size_t i = 0; i < p.size(); ++i)
      delta[i] = static_cast<float>(
          (p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0)) * inv_b);

    for (int li = static_cast<int>(model.def.layers.size()) - 1; li >= 0; --li) {
      const LayerDef& l = model.def.layers[static_cast<size_t>(li)];
      const Tensor& in = cache.acts[static_cast<size_t>(li)];
      const Tensor& out = cache.acts[static_cast<size_t>(li) + 1];
      const auto& s = shapes[static_cast<size_t>(li)];
      Tensor din(std::vector<int>{s[0], s[1], s[2]});
      if (const auto* c = std::get_if<ConvLayer>(&l)) {
        int h = s[1], wd = s[2];
        int oh = (h - c->kh) / c->stride + 1;
        int ow = (wd - c->kw) / c->stride + 1;
        const Tensor& w = model.weights[static_cast<size_t>(li)];
        Tensor& gw = grads.weights[static_cast<size_t>(li)];
        Tensor& gb = grads.biases[static_cast<size_t>(li)];
        for (int oc = 0; oc < c->out_ch; ++oc)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              size_t oidx = (static_cast<size_t>(oc) * oh + oy) * ow + ox;
              float d = delta[oidx];
              if (c->act == Activation::Relu && out[oidx] <= 0.0f) continue;
              gb[oc] += d;
              for (int ic = 0; ic < c->in_ch; ++ic)
                for (int ky = 0; ky < c->kh; ++ky)
                  for (int kx = 0; kx < c->kw; ++kx) {
                    int iy = oy * c->stride + ky, ix = ox * c->stride + kx;
                    size_t iidx = (static_cast<size_t>(ic) * h + iy) * wd + ix;
                    size_t widx =
                        ((static_cast<size_t>(oc) * c->in_ch + ic) * c->kh + ky) *
                            c->kw + kx;
                    gw[widx] += d * in[iidx];
                    din[iidx] += d * w[widx];
                  }
            }
      } else if (const auto* pl = std::get_if<PoolLayer>(&l)) {
        int ch = s[0], h = s[1], wd = s[2], k = pl->size;
        int oh = h / k, ow = wd / k;
        for (int cI = 0; cI < ch; ++cI)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              size_t oidx = (static_cast<size_t>(cI) * oh + oy) * ow + ox;
              float d = delta[oidx];
              if (pl->kind == PoolLayer::Kind::Max) {
                din[static_cast<size_t>(cache.argmax[static_cast<size_t>(li)][oidx])] += d;
              } else {
                float share = d / static_cast<float>(k * k);
                for (int dy = 0; dy < k; ++dy)
                  for (int dx = 0; dx < k; ++dx)
                    din[(static_cast<size_t>(cI) * h + oy * k + dy) * wd +
                        ox * k + dx] += share;
              }
            }
      } else {
        const auto& f = std::get<FcLayer>(l);
        const Tensor& w = model.weights[static_cast<size_t>(li)];
        Tensor& gw = grads.weights[static_cast<size_t>(li)];
        Tensor& gb = grads.biases[static_cast<size_t>(li)];
        for (int j = 0; j < f.n; ++j) {
          float d = delta[static_cast<size_t>(j)];
          if (f.act == Activation::Relu && out[static_cast<size_t>(j)] <= 0.0f)
            continue;
          gb[j] += d;
          for (int i = 0; i < f.m; ++i) {
            size_t widx = static_cast<size_t>(i) * f.n + j;
            gw[widx] += d * in[static_cast<size_t>(i)];
            din[static_cast<size_t>(i)] += d * w[widx];
          }
        }
      }
      delta = std::move(din);
    }
  }
  return {total_loss, std::move(grads)};
}

TrainedModel sgd_step_masked(const TrainedModel& model, const Grads& grads,
                             float lr, const std::vector<Tensor>& frozen_masks) {
  TrainedModel out = model;
  for (size_t li = 0; li < model.weights.size(); ++li) {
    if (model.weights[li].empty()) continue;
    const Tensor& gw = grads.weights[li];
    if (!gw.all_finite() || !grads.biases[li].all_finite())
      throw std::runtime_error("sgd_step_masked: non-finite gradients at layer " +
                               std::to_string(li));
    const Tensor& mask = model.masks[li];
    const Tensor* frozen = li < frozen_masks.size() && !frozen_masks[li].empty()
                               ? &frozen_masks[li]
                               : nullptr;
    if (frozen && !(*frozen).same_shape(model.weights[li]))
      throw std::runtime_error("sgd_step_masked: frozen mask shape mismatch at layer " +
                               std::to_string(li));
    for (size_t i = 0; i < out.weights[li].data.size(); ++i) {
      if (mask[i] == 0.0f) { out.weights[li][i] = 0.0f; continue; }
      if (frozen && (*frozen)[i] != 0.0f) continue;
      out.weights[li][i] = model.weights[li][i] - lr * gw[i];
    }
    for (size_t i = 0; i < out.biases[li].data.size(); ++i)
      out.biases[li][i] = model.biases[li][i] - lr * grads.biases[li][i];
  }
  return out;
}

double evaluate_accuracy(const TrainedModel& model,
                         const std::vector<Sample>& holdout) {
  if (holdout.empty()) throw std::runtime_error("evaluate_accuracy: empty holdout");
  long correct = 0;
  for (const auto& sample : holdout) {
    Tensor scores = forward(model, sample.input);
    int best = 0;
    for (int i = 1; i < scores.size(); ++i)
      if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(best)])
        best = i;  // ties keep the lowest class index
    if (best == sample.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(holdout.size());
}

Dataset make_synthetic_dataset(uint64_t seed, int num_classes,
                               int samples_per_class) {
  if (num_classes < 2)
    throw std::runtime_error("make_synthetic_dataset: need >= 2 classes");
  Dataset ds;
  ds.num_classes = num_classes;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.12f);
  std::uniform_real_distribution<float> jitter(-0.4f, 0.4f);
  const float sigma = 1.0f;
  auto gen_one = [&](int cls) {
    Sample s;
    s.label = cls;
    s.input = Tensor({1, kImageSize, kImageSize});
    float cx = 1.5f + 2.5f * static_cast<float>(cls % 3) + jitter(rng);
    float cy = 1.5f + 2.5f * static_cast<float>((cls / 3) % 3) + jitter(rng);
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x) {
        float dx = static_cast<float>(x) - cx, dy = static_cast<float>(y) - cy;
        float v = std::exp(-(dx * dx + dy * dy) / (2.0f * sigma * sigma));
        s.input[static_cast<size_t>(y * kImageSize + x)] = v + noise(rng);
      }
    return s;
  };
  int holdout_per_class = std::max(1, samples_per_class / 4);
  int train_per_class = samples_per_class - holdout_per_class;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < train_per_class; ++i) ds.train.push_back(gen_one(c));
    for (int i = 0; i < holdout_per_class; ++i) ds.holdout.push_back(gen_one(c));
  }
  return ds;
}

namespace {

uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("idx: truncated header");
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | b[3];
}

}  // namespace

std::vector<Tensor> read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open idx file: " + path);
  uint32_t magic = read_be32(in);
  if (magic != 0x00000803u)
    throw std::runtime_error("idx images: bad magic");
  uint32_t n = read_be32(in), h = read_be32(in), w = read_be32(in);
  std::vector<Tensor> images;
  images.reserve(n);
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  for (uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("idx images: truncated data");
    Tensor t({1, static_cast<int>(h), static_cast<int>(w)});
    for (size_t p = 0; p < buf.size(); ++p)
      t[p] = static_cast<float>(buf[p]) / 255.0f;
    images.push_back(std::move(t));
  }
  return images;
}

std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open idx file: " + path);
  uint32_t magic = read_be32(in);
  if (magic != 0x00000801u)
    throw std::runtime_error("idx labels: bad magic");
  uint32_t n = read_be32(in);
  std::vector<int> labels(n);
  for (uint32_t i = 0; i < n; ++i) {
    char b;
    in.read(&b, 1);
    if (!in) throw std::runtime_error("idx labels: truncated data");
    labels[i] = static_cast<unsigned char>(b);
  }
  return labels;
}

}  // namespace eve
