#include "eve/swm.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace eve {

namespace {

// Flat index into the layer's weight tensor for position p (row-major in
// the kernel/block) of kernel k.
size_t kernel_flat_index(const LayerDef& layer, int k, int p) {
  if (const auto* c = std::get_if<ConvLayer>(&layer)) {
    return static_cast<size_t>(k) * c->kh * c->kw + static_cast<size_t>(p);
  }
  const auto& f = std::get<FcLayer>(layer);
  int nby = f.n / f.block_y;
  int bi = k / nby, bj = k % nby;
  int px = p / f.block_y, py = p % f.block_y;
  int row = bi * f.block_x + px, col = bj * f.block_y + py;
  return static_cast<size_t>(row) * f.n + col;
}

std::pair<int, int> kernel_shape(const LayerDef& layer) {
  if (const auto* c = std::get_if<ConvLayer>(&layer)) return {c->kh, c->kw};
  const auto& f = std::get<FcLayer>(layer);
  return {f.block_x, f.block_y};
}

}  // namespace

NetworkDef SwmBundle::network_def() const {
  NetworkDef def;
  def.input_ch = input_ch;
  def.input_h = input_h;
  def.input_w = input_w;
  for (const auto& l : layers) def.layers.push_back(l.def);
  return def;
}

Pattern SwmBundle::union_pattern(const SwmLayer& layer, size_t kernel) const {
  std::vector<Pattern> ps;
  for (int m = 0; m < num_models; ++m)
    ps.push_back(layer.patterns[layer.location[kernel][static_cast<size_t>(m)]]);
  return union_patterns(ps);
}

SwmBundle compress(const std::vector<TrainedModel>& models,
                   const std::vector<ModelAssignment>& assignments,
                   const PatternLibrary& library) {
  if (models.empty() || models.size() != assignments.size())
    throw std::runtime_error("compress: models/assignments mismatch");
  const NetworkDef& def = models.front().def;
  const int n_models = static_cast<int>(models.size());

  SwmBundle bundle;
  bundle.num_models = n_models;
  bundle.input_ch = def.input_ch;
  bundle.input_h = def.input_h;
  bundle.input_w = def.input_w;

  for (size_t li = 0; li < def.layers.size(); ++li) {
    SwmLayer layer;
    layer.def = def.layers[li];
    for (const auto& model : models) {
      if (model.biases[li].empty())
        layer.biases.emplace_back();
      else
        layer.biases.emplace_back(model.biases[li].data);
    }
    if (!layer_prunable(layer.def)) {
      bundle.layers.push_back(std::move(layer));
      continue;
    }
    const int nk = kernel_count(layer.def);
    // deployed per-layer pattern slice: unique library ids in first-use order
    std::vector<int> lib_ids;
    auto slot_of = [&](int lib_id) -> uint8_t {
      for (size_t i = 0; i < lib_ids.size(); ++i)
        if (lib_ids[i] == lib_id) return static_cast<uint8_t>(i);
      if (lib_ids.size() >= 255)
        throw std::runtime_error("compress: more than 255 patterns in one layer");
      lib_ids.push_back(lib_id);
      Pattern p = library.at(lib_id);
      p.id = static_cast<int>(layer.patterns.size());
      layer.patterns.push_back(std::move(p));
      return static_cast<uint8_t>(lib_ids.size() - 1);
    };

    layer.location.resize(static_cast<size_t>(nk));
    layer.offsets.resize(static_cast<size_t>(nk));
    for (int k = 0; k < nk; ++k) {
      auto& loc = layer.location[static_cast<size_t>(k)];
      for (int m = 0; m < n_models; ++m)
        loc.push_back(slot_of(assignments[static_cast<size_t>(m)]
                                  .kernel_patterns[li][static_cast<size_t>(k)]));
      layer.offsets[static_cast<size_t>(k)] =
          static_cast<uint32_t>(layer.payload.size());
      auto [kx, ky] = kernel_shape(layer.def);
      for (int p = 0; p < kx * ky; ++p) {
        int first_cover = -1;
        float value = 0.0f;
        for (int m = 0; m < n_models; ++m) {
          const Pattern& pm = layer.patterns[loc[static_cast<size_t>(m)]];
          if (!pm.bits[static_cast<size_t>(p)]) continue;
          float w = models[static_cast<size_t>(m)]
                        .weights[li][kernel_flat_index(layer.def, k, p)];
          if (first_cover < 0) {
            first_cover = m;
            value = w;
          } else if (w != value) {
            throw std::runtime_error(
                "compress: sharing violation at layer " + std::to_string(li) +
                " kernel " + std::to_string(k) + " position " + std::to_string(p) +
                " (models " + std::to_string(first_cover) + " and " +
                std::to_string(m) + " diverge)");
          }
        }
        if (first_cover >= 0) layer.payload.push_back(value);
      }
    }
    bundle.layers.push_back(std::move(layer));
  }
  return bundle;
}

CondensedKernel extract(const std::vector<float>& payload_segment,
                        const Pattern& desired,
                        const std::vector<Pattern>& others,
                        ExtractStats* stats) {
  std::vector<Pattern> all = others;
  all.push_back(desired);
  Pattern uni = union_patterns(all);
  if (static_cast<int>(payload_segment.size()) != uni.popcount())
    throw std::runtime_error("extract: payload length " +
                             std::to_string(payload_segment.size()) +
                             " != union popcount " + std::to_string(uni.popcount()));
  CondensedKernel out;
  out.pattern = desired;
  size_t src = 0;
  for (size_t p = 0; p < desired.bits.size(); ++p) {
    if (desired.bits[p]) {
      out.values.push_back(payload_segment[src++]);
      if (stats) ++stats->take;
    } else {
      bool covered = false;
      for (const auto& po : others)
        if (po.bits[p]) { covered = true; break; }
      if (covered) {
        ++src;
        if (stats) ++stats->skip;
      } else if (stats) {
        ++stats->do_nothing;
      }
    }
  }
  return out;
}

std::vector<std::vector<CondensedKernel>> extract_model(const SwmBundle& bundle,
                                                        int model_index,
                                                        ExtractStats* stats) {
  if (model_index < 0 || model_index >= bundle.num_models)
    throw std::out_of_range("model index out of range");
  std::vector<std::vector<CondensedKernel>> layers;
  for (const auto& layer : bundle.layers) {
    std::vector<CondensedKernel> kernels;
    for (size_t k = 0; k < layer.location.size(); ++k) {
      const Pattern& pd =
          layer.patterns[layer.location[k][static_cast<size_t>(model_index)]];
      std::vector<Pattern> others;
      for (int m = 0; m < bundle.num_models; ++m)
        if (m != model_index)
          others.push_back(layer.patterns[layer.location[k][static_cast<size_t>(m)]]);
      Pattern uni = bundle.union_pattern(layer, k);
      auto start = layer.payload.begin() + layer.offsets[k];
      std::vector<float> segment(start, start + uni.popcount());
      kernels.push_back(extract(segment, pd, others, stats));
    }
    layers.push_back(std::move(kernels));
  }
  return layers;
}

TrainedModel reconstruct_dense(const SwmBundle& bundle, int model_index) {
  auto condensed = extract_model(bundle, model_index);
  TrainedModel model;
  model.def = bundle.network_def();
  for (size_t li = 0; li < bundle.layers.size(); ++li) {
    const SwmLayer& layer = bundle.layers[li];
    auto ws = weight_shape(layer.def);
    if (ws.empty()) {
      model.weights.emplace_back();
      model.biases.emplace_back();
      model.masks.emplace_back();
      continue;
    }
    Tensor w(ws), mask(ws);
    for (size_t k = 0; k < condensed[li].size(); ++k) {
      const CondensedKernel& ck = condensed[li][k];
      size_t vi = 0;
      for (size_t p = 0; p < ck.pattern.bits.size(); ++p) {
        size_t flat = kernel_flat_index(layer.def, static_cast<int>(k),
                                        static_cast<int>(p));
        if (ck.pattern.bits[p]) {
          w[flat] = ck.values[vi++];
          mask[flat] = 1.0f;
        }
      }
    }
    model.weights.push_back(std::move(w));
    model.masks.push_back(std::move(mask));
    model.biases.emplace_back(
        Tensor(bias_shape(layer.def),
               layer.biases[static_cast<size_t>(model_index)]));
  }
  return model;
}

float condensed_conv(const std::vector<float>& input_window,
                     const CondensedKernel& kernel) {
  const Pattern& p = kernel.pattern;
  if (static_cast<int>(input_window.size()) != p.x * p.y)
    throw std::runtime_error("condensed_conv: window shape != pattern shape");
  double acc = 0;
  size_t vi = 0;
  for (size_t i = 0; i < p.bits.size(); ++i)
    if (p.bits[i]) acc += static_cast<double>(input_window[i]) * kernel.values[vi++];
  return static_cast<float>(acc);
}

void condensed_fc_block(const std::vector<float>& input_slice,
                        const CondensedKernel& block, std::vector<float>& out) {
  const Pattern& p = block.pattern;
  if (static_cast<int>(input_slice.size()) != p.x ||
      static_cast<int>(out.size()) != p.y)
    throw std::runtime_error("condensed_fc_block: tiling mismatch");
  size_t vi = 0;
  for (int px = 0; px < p.x; ++px)
    for (int py = 0; py < p.y; ++py)
      if (p.bit(px, py))
        out[static_cast<size_t>(py)] +=
            input_slice[static_cast<size_t>(px)] * block.values[vi++];
}

Tensor condensed_forward(const SwmBundle& bundle, int model_index,
                         const Tensor& input) {
  auto condensed = extract_model(bundle, model_index);
  NetworkDef def = bundle.network_def();
  auto shapes = def.activation_shapes();
  {
    const auto& s0 = shapes[0];
    if (static_cast<long>(input.data.size()) !=
        static_cast<long>(s0[0]) * s0[1] * s0[2])
      throw std::runtime_error("condensed_forward: input shape mismatch");
  }
  Tensor act = input;
  for (size_t li = 0; li < def.layers.size(); ++li) {
    const auto& s = shapes[li];
    const SwmLayer& layer = bundle.layers[li];
    if (const auto* c = std::get_if<ConvLayer>(&layer.def)) {
      int h = s[1], wd = s[2];
      int oh = (h - c->kh) / c->stride + 1, ow = (wd - c->kw) / c->stride + 1;
      Tensor out({c->out_ch, oh, ow});
      const auto& bias = layer.biases[static_cast<size_t>(model_index)];
      for (int oc = 0; oc < c->out_ch; ++oc)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            double acc = bias[static_cast<size_t>(oc)];
            for (int ic = 0; ic < c->in_ch; ++ic) {
              const CondensedKernel& ck =
                  condensed[li][static_cast<size_t>(oc * c->in_ch + ic)];
              size_t vi = 0;
              for (int ky = 0; ky < c->kh; ++ky)
                for (int kx = 0; kx < c->kw; ++kx)
                  if (ck.pattern.bits[static_cast<size_t>(ky * c->kw + kx)])
                    acc += static_cast<double>(
                               act[(static_cast<size_t>(ic) * h + oy * c->stride + ky) * wd +
                                   ox * c->stride + kx]) *
                           ck.values[vi++];
            }
            float v = static_cast<float>(acc);
            if (c->act == Activation::Relu && v < 0.0f) v = 0.0f;
            out[(static_cast<size_t>(oc) * oh + oy) * ow + ox] = v;
          }
      act = std::move(out);
    } else if (const auto* p = std::get_if<PoolLayer>(&layer.def)) {
      int ch = s[0], h = s[1], wd = s[2], k = p->size;
      int oh = h / k, ow = wd / k;
      Tensor out({ch, oh, ow});
      for (int cI = 0; cI < ch; ++cI)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            if (p->kind == PoolLayer::Kind::Max) {
              float best = -std::numeric_limits<float>::infinity();
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                  best = std::max(best,
                                  act[(static_cast<size_t>(cI) * h + oy * k + dy) * wd +
                                      ox * k + dx]);
              out[(static_cast<size_t>(cI) * oh + oy) * ow + ox] = best;
            } else {
              double acc = 0;
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                  acc += act[(static_cast<size_t>(cI) * h + oy * k + dy) * wd +
                             ox * k + dx];
              out[(static_cast<size_t>(cI) * oh + oy) * ow + ox] =
                  static_cast<float>(acc / (k * k));
            }
          }
      act = std::move(out);
    } else {
      const auto& f = std::get<FcLayer>(layer.def);
      const auto& bias = layer.biases[static_cast<size_t>(model_index)];
      std::vector<double> acc(static_cast<size_t>(f.n));
      for (int j = 0; j < f.n; ++j) acc[static_cast<size_t>(j)] = bias[static_cast<size_t>(j)];
      int nbx = f.m / f.block_x, nby = f.n / f.block_y;
      for (int bi = 0; bi < nbx; ++bi)
        for (int bj = 0; bj < nby; ++bj) {
          const CondensedKernel& ck = condensed[li][static_cast<size_t>(bi * nby + bj)];
          size_t vi = 0;
          for (int px = 0; px < f.block_x; ++px)
            for (int py = 0; py < f.block_y; ++py)
              if (ck.pattern.bit(px, py))
                acc[static_cast<size_t>(bj * f.block_y + py)] +=
                    static_cast<double>(act[static_cast<size_t>(bi * f.block_x + px)]) *
                    ck.values[vi++];
        }
      Tensor out({f.n, 1, 1});
      for (int j = 0; j < f.n; ++j) {
        float v = static_cast<float>(acc[static_cast<size_t>(j)]);
        if (f.act == Activation::Relu && v < 0.0f) v = 0.0f;
        out[static_cast<size_t>(j)] = v;
      }
      act = std::move(out);
    }
  }
  return act;
}

// ---------------------------------------------------------------------------
// binary format

uint32_t crc32(const uint8_t* data, size_t len) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

struct Writer {
  std::vector<uint8_t> buf;
  void u8(uint8_t v) { buf.push_back(v); }
  void u16(uint16_t v) { buf.push_back(static_cast<uint8_t>(v)); buf.push_back(static_cast<uint8_t>(v >> 8)); }
  void u32(uint32_t v) { for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i))); }
  void f32(float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
};

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;
  explicit Reader(const std::vector<uint8_t>& b) : buf(b) {}
  void need(size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("swm: truncated bundle");
  }
  uint8_t u8() { need(1); return buf[pos++]; }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + static_cast<size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
};

void write_pattern_bits(Writer& w, const Pattern& p) {
  int nbytes = (p.x * p.y + 7) / 8;
  for (int b = 0; b < nbytes; ++b) {
    uint8_t byte = 0;
    for (int i = 0; i < 8; ++i) {
      int idx = b * 8 + i;
      if (idx < p.x * p.y && p.bits[static_cast<size_t>(idx)]) byte |= static_cast<uint8_t>(1u << i);
    }
    w.u8(byte);
  }
}

Pattern read_pattern_bits(Reader& r, int x, int y) {
  int nbytes = (x * y + 7) / 8;
  std::vector<uint8_t> bits(static_cast<size_t>(x) * y, 0);
  for (int b = 0; b < nbytes; ++b) {
    uint8_t byte = r.u8();
    for (int i = 0; i < 8; ++i) {
      int idx = b * 8 + i;
      if (idx < x * y) bits[static_cast<size_t>(idx)] = (byte >> i) & 1u;
    }
  }
  return Pattern(x, y, std::move(bits));
}

constexpr uint16_t kFormatVersion = 1;

}  // namespace

std::vector<uint8_t> serialize(const SwmBundle& bundle) {
  Writer w;
  w.u8('S'); w.u8('W'); w.u8('M'); w.u8('1');
  w.u16(kFormatVersion);
  w.u8(static_cast<uint8_t>(bundle.num_models));
  w.u16(static_cast<uint16_t>(bundle.layers.size()));
  w.u16(static_cast<uint16_t>(bundle.input_ch));
  w.u16(static_cast<uint16_t>(bundle.input_h));
  w.u16(static_cast<uint16_t>(bundle.input_w));
  for (const auto& layer : bundle.layers) {
    if (const auto* c = std::get_if<ConvLayer>(&layer.def)) {
      w.u8(0);
      w.u16(static_cast<uint16_t>(c->in_ch));
      w.u16(static_cast<uint16_t>(c->out_ch));
      w.u16(static_cast<uint16_t>(c->kh));
      w.u16(static_cast<uint16_t>(c->kw));
      w.u16(static_cast<uint16_t>(c->stride));
      w.u16(c->act == Activation::Relu ? 1 : 0);
    } else if (const auto* f = std::get_if<FcLayer>(&layer.def)) {
      w.u8(1);
      w.u16(static_cast<uint16_t>(f->m));
      w.u16(static_cast<uint16_t>(f->n));
      w.u16(static_cast<uint16_t>(f->block_x));
      w.u16(static_cast<uint16_t>(f->block_y));
      w.u16(f->act == Activation::Relu ? 1 : 0);
    } else {
      const auto& p = std::get<PoolLayer>(layer.def);
      w.u8(2);
      w.u16(p.kind == PoolLayer::Kind::Avg ? 1 : 0);
      w.u16(static_cast<uint16_t>(p.size));
    }
    w.u8(static_cast<uint8_t>(layer.patterns.size()));
    for (const auto& p : layer.patterns) write_pattern_bits(w, p);
    w.u32(static_cast<uint32_t>(layer.location.size()));
    for (const auto& loc : layer.location)
      for (uint8_t id : loc) w.u8(id);
    for (uint32_t off : layer.offsets) w.u32(off);
    w.u32(static_cast<uint32_t>(layer.payload.size()));
    for (float v : layer.payload) w.f32(v);
    uint32_t bias_len =
        layer.biases.empty() ? 0 : static_cast<uint32_t>(layer.biases[0].size());
    w.u32(bias_len);
    for (const auto& bias : layer.biases)
      for (float v : bias) w.f32(v);
  }
  w.u32(crc32(w.buf.data(), w.buf.size()));
  return std::move(w.buf);
}

SwmBundle deserialize(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8) throw std::runtime_error("swm: truncated bundle");
  if (bytes[0] != 'S' || bytes[1] != 'W' || bytes[2] != 'M' || bytes[3] != '1')
    throw std::runtime_error("swm: bad magic");
  uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<uint32_t>(bytes[bytes.size() - 4 + static_cast<size_t>(i)]) << (8 * i);
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw std::runtime_error("swm: crc mismatch");

  Reader r(bytes);
  if (r.u8() != 'S' || r.u8() != 'W' || r.u8() != 'M' || r.u8() != '1')
    throw std::runtime_error("swm: bad magic");
  uint16_t version = r.u16();
  if (version != kFormatVersion)
    throw std::runtime_error("swm: unsupported version " + std::to_string(version));
  SwmBundle bundle;
  bundle.num_models = r.u8();
  uint16_t num_layers = r.u16();
  bundle.input_ch = r.u16();
  bundle.input_h = r.u16();
  bundle.input_w = r.u16();
  for (int li = 0; li < num_layers; ++li) {
    SwmLayer layer;
    uint8_t type = r.u8();
    int px = 0, py = 0;
    if (type == 0) {
      ConvLayer c;
      c.in_ch = r.u16(); c.out_ch = r.u16(); c.kh = r.u16(); c.kw = r.u16();
      c.stride = r.u16();
      c.act = r.u16() ? Activation::Relu : Activation::None;
      px = c.kh; py = c.kw;
      layer.def = c;
    } else if (type == 1) {
      FcLayer f;
      f.m = r.u16(); f.n = r.u16(); f.block_x = r.u16(); f.block_y = r.u16();
      f.act = r.u16() ? Activation::Relu : Activation::None;
      px = f.block_x; py = f.block_y;
      layer.def = f;
    } else if (type == 2) {
      PoolLayer p;
      p.kind = r.u16() ? PoolLayer::Kind::Avg : PoolLayer::Kind::Max;
      p.size = r.u16();
      layer.def = p;
    } else {
      throw std::runtime_error("swm: unknown layer type " + std::to_string(type));
    }
    uint8_t pattern_count = r.u8();
    for (int i = 0; i < pattern_count; ++i) {
      Pattern p = read_pattern_bits(r, px, py);
      p.id = i;
      layer.patterns.push_back(std::move(p));
    }
    uint32_t nk = r.u32();
    layer.location.resize(nk);
    for (uint32_t k = 0; k < nk; ++k) {
      for (int m = 0; m < bundle.num_models; ++m) {
        uint8_t id = r.u8();
        if (id >= pattern_count)
          throw std::runtime_error("swm: location index out of range");
        layer.location[k].push_back(id);
      }
    }
    layer.offsets.resize(nk);
    for (uint32_t k = 0; k < nk; ++k) layer.offsets[k] = r.u32();
    uint32_t payload_len = r.u32();
    layer.payload.resize(payload_len);
    for (uint32_t i = 0; i < payload_len; ++i) layer.payload[i] = r.f32();
    uint32_t bias_len = r.u32();
    for (int m = 0; m < bundle.num_models; ++m) {
      std::vector<float> bias(bias_len);
      for (uint32_t i = 0; i < bias_len; ++i) bias[i] = r.f32();
      layer.biases.push_back(std::move(bias));
    }
    bundle.layers.push_back(std::move(layer));
  }
  if (r.pos != bytes.size() - 4)
    throw std::runtime_error("swm: trailing bytes in bundle");
  return bundle;
}

void write_bundle(const SwmBundle& bundle, const std::string& path) {
  auto bytes = serialize(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

SwmBundle read_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open bundle: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace eve
