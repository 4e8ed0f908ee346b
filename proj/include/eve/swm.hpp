#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eve/nn.hpp"
#include "eve/patterns.hpp"
#include "eve/shared_training.hpp"

namespace eve {

/// One kernel's kept weights in row-major kept order; the pattern is the
/// decoding key.
struct CondensedKernel {
  Pattern pattern;
  std::vector<float> values;
};

/// Per-layer slice of the packed shared-weight bundle. Patterns are the
/// deployed per-layer library; location[k][m] indexes into it for kernel k
/// under model m. payload holds, per kernel, the values at the union-pattern
/// positions in row-major order; offsets[k] is the kernel's payload start.
struct SwmLayer {
  LayerDef def;
  std::vector<Pattern> patterns;
  std::vector<std::vector<uint8_t>> location;  // [kernel][model]
  std::vector<uint32_t> offsets;               // [kernel]
  std::vector<float> payload;
  std::vector<std::vector<float>> biases;      // [model], dense and unshared
};

struct SwmBundle {
  int num_models = 0;
  int input_ch = 0, input_h = 0, input_w = 0;
  std::vector<SwmLayer> layers;

  NetworkDef network_def() const;
  /// Union pattern of one kernel over all models.
  Pattern union_pattern(const SwmLayer& layer, size_t kernel) const;
};

/// Pack N shared-weight models (ordered high -> low sparsity) into one
/// bundle. Requires bit-exact sharing; the first divergent position is
/// reported otherwise. assignments[m] gives each kernel's pattern id for
/// model m.
SwmBundle compress(const std::vector<TrainedModel>& models,
                   const std::vector<ModelAssignment>& assignments,
                   const PatternLibrary& library);

struct ExtractStats {
  long take = 0, skip = 0, do_nothing = 0;
};

/// Run-time weight extraction: scan positions in row-major order keeping a
/// source index into the payload segment. P_D bit set -> take; P_D clear
/// but some other-model pattern covers the position -> skip; no pattern
/// covers it -> do nothing.
CondensedKernel extract(const std::vector<float>& payload_segment,
                        const Pattern& desired,
                        const std::vector<Pattern>& others,
                        ExtractStats* stats = nullptr);

/// Dense weights (and biases/masks) of one model, rebuilt from the bundle.
TrainedModel reconstruct_dense(const SwmBundle& bundle, int model_index);

/// Dot product of an input window with a condensed kernel; equals the dense
/// masked dot product.
float condensed_conv(const std::vector<float>& input_window,
                     const CondensedKernel& kernel);

/// Block-local matvec: input_slice has block_x values, outputs block_y
/// partial sums accumulated into out.
void condensed_fc_block(const std::vector<float>& input_slice,
                        const CondensedKernel& block, std::vector<float>& out);

/// Full-network inference for one model driven entirely by condensed
/// kernels extracted from the bundle.
Tensor condensed_forward(const SwmBundle& bundle, int model_index,
                         const Tensor& input);

/// All condensed kernels of one model, layer by layer, in canonical kernel
/// order (extraction cost is proportional to union popcounts).
std::vector<std::vector<CondensedKernel>> extract_model(const SwmBundle& bundle,
                                                        int model_index,
                                                        ExtractStats* stats = nullptr);

/// Little-endian binary format, magic "SWM1", trailing CRC32.
std::vector<uint8_t> serialize(const SwmBundle& bundle);
SwmBundle deserialize(const std::vector<uint8_t>& bytes);
void write_bundle(const SwmBundle& bundle, const std::string& path);
SwmBundle read_bundle(const std::string& path);

uint32_t crc32(const uint8_t* data, size_t len);

}  // namespace eve
