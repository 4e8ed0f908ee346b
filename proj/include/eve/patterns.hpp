#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eve/nn.hpp"

namespace eve {

enum class SparsityBand { High, Medium, Low };

std::string band_name(SparsityBand b);

/// Kernel-shaped 0/1 mask; 1 = kept weight. Bits in row-major order.
struct Pattern {
  int x = 0, y = 0;
  std::vector<uint8_t> bits;
  int id = -1;

  Pattern() = default;
  Pattern(int x_, int y_, std::vector<uint8_t> b, int id_ = -1);

  int popcount() const;
  double sparsity() const;  // zeros / (x*y)
  bool same_shape(const Pattern& o) const { return x == o.x && y == o.y; }
  bool bit(int r, int c) const { return bits[static_cast<size_t>(r * y + c)] != 0; }

  /// Center position: exact center for odd dims, (ceil(x/2)-1, ceil(y/2)-1)
  /// for even dims.
  static std::pair<int, int> center(int x, int y);
  bool center_set() const;

  /// "101 010 101" row-major bit-string, rows space-separated.
  std::string to_bitstring() const;
  static Pattern from_bitstring(const std::string& s);
};

bool operator==(const Pattern& a, const Pattern& b);

struct PatternLibrary {
  int x = 0, y = 0;
  std::vector<Pattern> patterns;  // ids dense from 0, in vector order

  const Pattern& at(int id) const;
  int size() const { return static_cast<int>(patterns.size()); }
  SparsityBand band_of(int id) const;

  std::string to_json_text() const;
  static PatternLibrary from_json_text(const std::string& text);
  static PatternLibrary from_json_file(const std::string& path);
};

/// Band thresholds by kept count: High keeps <= ceil(x*y/3), Low keeps
/// >= ceil(2*x*y/3), Medium in between.
SparsityBand band_of_kept(int kept, int x, int y);

/// counts_per_band = {high, medium, low}. Every generated pattern keeps the
/// center bit; no duplicates; deterministic per seed. Throws if a band
/// request exceeds the combinatorially available patterns.
PatternLibrary generate_pattern_space(int x, int y,
                                      std::array<int, 3> counts_per_band,
                                      uint64_t seed);

Pattern union_patterns(const std::vector<Pattern>& ps);
Pattern intersect_patterns(const std::vector<Pattern>& ps);

/// |union| - |intersection|: 0 iff all patterns identical, grows with
/// divergence.
int symmetric_difference_cost(const std::vector<Pattern>& ps);

/// True iff bits(ps[i]) subset of bits(ps[i+1]) for all i (ordered
/// high -> low sparsity).
bool is_subset_chain(const std::vector<Pattern>& ps);

/// Kept positions form full rows or full columns of the kernel.
bool pattern_is_regular(const Pattern& p);

/// Per prunable layer, per kernel (conv: out_ch*in_ch kernels in (oc,ic)
/// order; fc: (m/block_x)*(n/block_y) blocks in (bi,bj) order): a pattern id.
/// Non-prunable layers have an empty entry.
struct ModelAssignment {
  std::vector<std::vector<int>> kernel_patterns;

  /// One pattern id applied network-wide.
  static ModelAssignment uniform(const NetworkDef& def, int pattern_id);
};

int kernel_count(const LayerDef& layer);
bool layer_prunable(const LayerDef& layer);

/// Full-resolution 0/1 masks congruent with the model's weight tensors.
std::vector<Tensor> assignment_masks(const NetworkDef& def,
                                     const ModelAssignment& assignment,
                                     const PatternLibrary& library);

/// Zero weights at pattern-0 positions; returns the masked weights and the
/// full mask tensors.
std::pair<std::vector<Tensor>, std::vector<Tensor>> apply_mask(
    const std::vector<Tensor>& weights, const NetworkDef& def,
    const ModelAssignment& assignment, const PatternLibrary& library);

/// Average kept fraction over a layer's kernels (1.0 for non-prunable).
double layer_kept_fraction(const LayerDef& layer,
                           const std::vector<int>& kernel_patterns,
                           const PatternLibrary& library);

}  // namespace eve
