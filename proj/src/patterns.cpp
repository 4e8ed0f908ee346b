#include "eve/patterns.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace eve {

using nlohmann::json;

std::string band_name(SparsityBand b) {
  switch (b) {
    case SparsityBand::High: return "high";
    case SparsityBand::Medium: return "medium";
    case SparsityBand::Low: return "low";
  }
  return "?";
}

Pattern::Pattern(int x_, int y_, std::vector<uint8_t> b, int id_)
    : x(x_), y(y_), bits(std::move(b)), id(id_) {
  if (static_cast<int>(bits.size()) != x * y)
    throw std::invalid_argument("Pattern: bit count != x*y");
  if (popcount() == 0)
    throw std::invalid_argument("Pattern: at least one bit must be set");
}

int Pattern::popcount() const {
  int n = 0;
  for (uint8_t b : bits) n += b ? 1 : 0;
  return n;
}

double Pattern::sparsity() const {
  return static_cast<double>(x * y - popcount()) / static_cast<double>(x * y);
}

std::pair<int, int> Pattern::center(int x, int y) {
  return {(x + 1) / 2 - 1, (y + 1) / 2 - 1};
}

bool Pattern::center_set() const {
  auto [cr, cc] = center(x, y);
  return bit(cr, cc);
}

std::string Pattern::to_bitstring() const {
  std::string s;
  for (int r = 0; r < x; ++r) {
    if (r) s += ' ';
    for (int c = 0; c < y; ++c) s += bit(r, c) ? '1' : '0';
  }
  return s;
}

Pattern Pattern::from_bitstring(const std::string& s) {
  std::vector<uint8_t> bits;
  int rows = 0, cols = -1, cur = 0;
  for (char ch : s) {
    if (ch == '0' || ch == '1') {
      bits.push_back(ch == '1' ? 1 : 0);
      ++cur;
    } else if (ch == ' ') {
      if (cur == 0) continue;
      if (cols < 0) cols = cur;
      else if (cur != cols) throw std::runtime_error("pattern bitstring: ragged rows");
      ++rows;
      cur = 0;
    } else {
      throw std::runtime_error("pattern bitstring: bad character");
    }
  }
  if (cur > 0) {
    if (cols < 0) cols = cur;
    else if (cur != cols) throw std::runtime_error("pattern bitstring: ragged rows");
    ++rows;
  }
  return Pattern(rows, cols, std::move(bits));
}

bool operator==(const Pattern& a, const Pattern& b) {
  return a.x == b.x && a.y == b.y && a.bits == b.bits;
}

const Pattern& PatternLibrary::at(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("pattern id " + std::to_string(id) +
                            " not in library of size " + std::to_string(size()));
  return patterns[static_cast<size_t>(id)];
}

SparsityBand PatternLibrary::band_of(int id) const {
  return band_of_kept(at(id).popcount(), x, y);
}

SparsityBand band_of_kept(int kept, int x, int y) {
  int total = x * y;
  int high_max = (total + 2) / 3;       // ceil(total/3)
  int low_min = (2 * total + 2) / 3;    // ceil(2*total/3)
  if (kept <= high_max) return SparsityBand::High;
  if (kept >= low_min) return SparsityBand::Low;
  return SparsityBand::Medium;
}

std::string PatternLibrary::to_json_text() const {
  json j;
  j["shape"] = {x, y};
  j["patterns"] = json::array();
  for (const auto& p : patterns) {
    j["patterns"].push_back({{"id", p.id},
                             {"bits", p.to_bitstring()},
                             {"band", band_name(band_of_kept(p.popcount(), x, y))}});
  }
  return j.dump(2);
}

PatternLibrary PatternLibrary::from_json_text(const std::string& text) {
  json j = json::parse(text);
  PatternLibrary lib;
  lib.x = j.at("shape").at(0).get<int>();
  lib.y = j.at("shape").at(1).get<int>();
  for (const auto& jp : j.at("patterns")) {
    Pattern p = Pattern::from_bitstring(jp.at("bits").get<std::string>());
    if (p.x != lib.x || p.y != lib.y)
      throw std::runtime_error("pattern library: shape mismatch");
    p.id = static_cast<int>(lib.patterns.size());
    lib.patterns.push_back(std::move(p));
  }
  return lib;
}

PatternLibrary PatternLibrary::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pattern library: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

namespace {

unsigned long long binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<unsigned long long>(n - k + i) / i;
  return r;
}

// Kept counts (including the forced center bit) covered by a band.
std::pair<int, int> band_kept_range(SparsityBand band, int total) {
  int high_max = (total + 2) / 3;
  int low_min = (2 * total + 2) / 3;
  switch (band) {
    case SparsityBand::High: return {1, high_max};
    case SparsityBand::Medium: return {high_max + 1, low_min - 1};
    case SparsityBand::Low: return {low_min, total};
  }
  return {1, 0};
}

}  // namespace

PatternLibrary generate_pattern_space(int x, int y,
                                      std::array<int, 3> counts_per_band,
                                      uint64_t seed) {
  if (x < 2 || y < 2)
    throw std::runtime_error("generate_pattern_space: shape must be at least 2x2");
  for (int c : counts_per_band)
    if (c < 1) throw std::runtime_error("generate_pattern_space: counts must be >= 1");

  const int total = x * y;
  auto [cr, cc] = Pattern::center(x, y);
  const int center_idx = cr * y + cc;
  std::vector<int> free_pos;
  for (int i = 0; i < total; ++i)
    if (i != center_idx) free_pos.push_back(i);

  std::mt19937_64 rng(seed);
  PatternLibrary lib;
  lib.x = x;
  lib.y = y;
  std::set<std::vector<uint8_t>> seen;

  const SparsityBand bands[3] = {SparsityBand::High, SparsityBand::Medium,
                                 SparsityBand::Low};
  for (int bi = 0; bi < 3; ++bi) {
    auto [kmin, kmax] = band_kept_range(bands[bi], total);
    unsigned long long avail = 0;
    for (int k = kmin; k <= kmax; ++k) avail += binomial(total - 1, k - 1);
    if (static_cast<unsigned long long>(counts_per_band[static_cast<size_t>(bi)]) > avail)
      throw std::runtime_error("generate_pattern_space: band '" +
                               band_name(bands[bi]) + "' has only " +
                               std::to_string(avail) + " patterns available");
    int want = counts_per_band[static_cast<size_t>(bi)];
    int made = 0, k = kmin;
    int stall = 0;
    while (made < want) {
      // round-robin over kept counts inside the band
      std::vector<int> picks(free_pos);
      std::shuffle(picks.begin(), picks.end(), rng);
      std::vector<uint8_t> bits(static_cast<size_t>(total), 0);
      bits[static_cast<size_t>(center_idx)] = 1;
      for (int i = 0; i < k - 1; ++i) bits[static_cast<size_t>(picks[static_cast<size_t>(i)])] = 1;
      if (seen.insert(bits).second) {
        Pattern p(x, y, bits, lib.size());
        lib.patterns.push_back(std::move(p));
        ++made;
        stall = 0;
      } else if (++stall > 100000) {
        throw std::runtime_error("generate_pattern_space: sampling stalled");
      }
      k = (k >= kmax) ? kmin : k + 1;
    }
  }
  return lib;
}

static void require_same_shape(const std::vector<Pattern>& ps) {
  if (ps.empty()) throw std::runtime_error("pattern list is empty");
  for (const auto& p : ps)
    if (!p.same_shape(ps.front()))
      throw std::runtime_error("pattern shape mismatch");
}

Pattern union_patterns(const std::vector<Pattern>& ps) {
  require_same_shape(ps);
  std::vector<uint8_t> bits = ps.front().bits;
  for (const auto& p : ps)
    for (size_t i = 0; i < bits.size(); ++i) bits[i] |= p.bits[i];
  return Pattern(ps.front().x, ps.front().y, std::move(bits));
}

Pattern intersect_patterns(const std::vector<Pattern>& ps) {
  require_same_shape(ps);
  std::vector<uint8_t> bits = ps.front().bits;
  for (const auto& p : ps)
    for (size_t i = 0; i < bits.size(); ++i)
      bits[i] = bits[i] && p.bits[i] ? 1 : 0;
  return Pattern(ps.front().x, ps.front().y, std::move(bits));
}

int symmetric_difference_cost(const std::vector<Pattern>& ps) {
  require_same_shape(ps);
  if (ps.size() < 2)
    throw std::runtime_error("symmetric_difference_cost: need >= 2 patterns");
  int uni = 0, inter = 0;
  for (size_t i = 0; i < ps.front().bits.size(); ++i) {
    bool any = false, all = true;
    for (const auto& p : ps) {
      any = any || p.bits[i];
      all = all && p.bits[i];
    }
    uni += any ? 1 : 0;
    inter += all ? 1 : 0;
  }
  return uni - inter;
}

bool is_subset_chain(const std::vector<Pattern>& ps) {
  require_same_shape(ps);
  for (size_t i = 0; i + 1 < ps.size(); ++i)
    for (size_t b = 0; b < ps[i].bits.size(); ++b)
      if (ps[i].bits[b] && !ps[i + 1].bits[b]) return false;
  return true;
}

bool pattern_is_regular(const Pattern& p) {
  // every kept position lies on a fully-kept row or a fully-kept column
  std::vector<bool> full_row(static_cast<size_t>(p.x), true);
  std::vector<bool> full_col(static_cast<size_t>(p.y), true);
  for (int r = 0; r < p.x; ++r)
    for (int c = 0; c < p.y; ++c) {
      if (!p.bit(r, c)) {
        full_row[static_cast<size_t>(r)] = false;
        full_col[static_cast<size_t>(c)] = false;
      }
    }
  for (int r = 0; r < p.x; ++r)
    for (int c = 0; c < p.y; ++c)
      if (p.bit(r, c) && !full_row[static_cast<size_t>(r)] &&
          !full_col[static_cast<size_t>(c)])
        return false;
  return true;
}

bool layer_prunable(const LayerDef& layer) {
  return !std::holds_alternative<PoolLayer>(layer);
}

int kernel_count(const LayerDef& layer) {
  if (const auto* c = std::get_if<ConvLayer>(&layer)) return c->out_ch * c->in_ch;
  if (const auto* f = std::get_if<FcLayer>(&layer))
    return (f->m / f->block_x) * (f->n / f->block_y);
  return 0;
}

ModelAssignment ModelAssignment::uniform(const NetworkDef& def, int pattern_id) {
  ModelAssignment a;
  for (const auto& l : def.layers)
    a.kernel_patterns.emplace_back(static_cast<size_t>(kernel_count(l)), pattern_id);
  return a;
}

namespace {

// Pattern shape must match the layer's kernel/block shape.
void check_pattern_shape(const LayerDef& layer, const Pattern& p, size_t li) {
  if (const auto* c = std::get_if<ConvLayer>(&layer)) {
    if (p.x != c->kh || p.y != c->kw)
      throw std::runtime_error("layer " + std::to_string(li) +
                               ": pattern shape != kernel shape");
  } else if (const auto* f = std::get_if<FcLayer>(&layer)) {
    if (p.x != f->block_x || p.y != f->block_y)
      throw std::runtime_error("layer " + std::to_string(li) +
                               ": pattern shape != fc block shape");
  }
}

}  // namespace

std::vector<Tensor> assignment_masks(const NetworkDef& def,
                                     const ModelAssignment& assignment,
                                     const PatternLibrary& library) {
  if (assignment.kernel_patterns.size() != def.layers.size())
    throw std::runtime_error("assignment does not cover every layer");
  std::vector<Tensor> masks;
  for (size_t li = 0; li < def.layers.size(); ++li) {
    const LayerDef& l = def.layers[li];
    const auto& kp = assignment.kernel_patterns[li];
    if (!layer_prunable(l)) {
      masks.emplace_back();
      continue;
    }
    int nk = kernel_count(l);
    if (static_cast<int>(kp.size()) != nk)
      throw std::runtime_error("layer " + std::to_string(li) +
                               ": assignment covers " + std::to_string(kp.size()) +
                               " kernels, expected " + std::to_string(nk));
    Tensor mask(weight_shape(l));
    if (const auto* c = std::get_if<ConvLayer>(&l)) {
      for (int oc = 0; oc < c->out_ch; ++oc)
        for (int ic = 0; ic < c->in_ch; ++ic) {
          const Pattern& p = library.at(kp[static_cast<size_t>(oc * c->in_ch + ic)]);
          check_pattern_shape(l, p, li);
          for (int ky = 0; ky < c->kh; ++ky)
            for (int kx = 0; kx < c->kw; ++kx)
              mask[((static_cast<size_t>(oc) * c->in_ch + ic) * c->kh + ky) * c->kw + kx] =
                  p.bit(ky, kx) ? 1.0f : 0.0f;
        }
    } else {
      const auto& f = std::get<FcLayer>(l);
      int nbx = f.m / f.block_x, nby = f.n / f.block_y;
      for (int bi = 0; bi < nbx; ++bi)
        for (int bj = 0; bj < nby; ++bj) {
          const Pattern& p = library.at(kp[static_cast<size_t>(bi * nby + bj)]);
          check_pattern_shape(l, p, li);
          for (int px = 0; px < f.block_x; ++px)
            for (int py = 0; py < f.block_y; ++py) {
              int row = bi * f.block_x + px, col = bj * f.block_y + py;
              mask[static_cast<size_t>(row) * f.n + col] = p.bit(px, py) ? 1.0f : 0.0f;
            }
        }
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

std::pair<std::vector<Tensor>, std::vector<Tensor>> apply_mask(
    const std::vector<Tensor>& weights, const NetworkDef& def,
    const ModelAssignment& assignment, const PatternLibrary& library) {
  auto masks = assignment_masks(def, assignment, library);
  std::vector<Tensor> out = weights;
  for (size_t li = 0; li < out.size(); ++li) {
    if (masks[li].empty()) continue;
    if (!masks[li].same_shape(out[li]))
      throw std::runtime_error("apply_mask: weight/mask shape mismatch at layer " +
                               std::to_string(li));
    for (size_t i = 0; i < out[li].data.size(); ++i)
      if (masks[li][i] == 0.0f) out[li][i] = 0.0f;
  }
  return {std::move(out), std::move(masks)};
}

double layer_kept_fraction(const LayerDef& layer,
                           const std::vector<int>& kernel_patterns,
                           const PatternLibrary& library) {
  if (!layer_prunable(layer) || kernel_patterns.empty()) return 1.0;
  double sum = 0;
  for (int id : kernel_patterns) {
    const Pattern& p = library.at(id);
    sum += static_cast<double>(p.popcount()) / static_cast<double>(p.x * p.y);
  }
  return sum / static_cast<double>(kernel_patterns.size());
}

}  // namespace eve
