#pragma once

#include <span>
#include <string>
#include <vector>

#include "lavender/rng.hpp"
#include "lavender/tensor.hpp"

namespace lavender {

// Raw clip: stored frames, frame-major [t][y][x][rgb], intensities in [0,1].
// Corpora store a fixed 32 frames per clip; training samples T of them.
struct VideoClip {
  size_t height = 0;
  size_t width = 0;
  size_t frame_count = 0;
  std::vector<double> frames;
  std::string clip_id;

  size_t pixel_index(size_t t, size_t y, size_t x, size_t c) const {
    return ((t * height + y) * width + x) * 3 + c;
  }
  double at(size_t t, size_t y, size_t x, size_t c) const {
    return frames[pixel_index(t, y, x, c)];
  }

  // Binary format: "VCLP1", u32 height, width, frame_count (little endian),
  // then f32 intensities frame-major.
  void save(const std::string& path) const;
  static VideoClip load(const std::string& path);
};

// Non-overlapping patch decomposition of the sampled frames. Patch order is
// (t, grid row, grid column); each patch vector is laid out (y, x, channel).
struct PatchGrid {
  size_t t = 0;
  size_t grid_h = 0;
  size_t grid_w = 0;
  size_t patch_h = 0;
  size_t patch_w = 0;
  std::vector<double> patches;
  std::vector<size_t> frame_indices;

  size_t patch_dim() const { return patch_h * patch_w * 3; }
  size_t count() const { return t * grid_h * grid_w; }
};

enum class FrameSampling { kRandom, kEven };

// Strictly increasing frame indices. Even sampling is deterministic with
// centered strides: index_i = floor((2i+1)·stored / (2T)), which reduces to
// the identity when T == stored. Random sampling is sorted sampling without
// replacement from the given rng.
std::vector<size_t> sample_frames(size_t stored_frames, size_t t,
                                  FrameSampling mode, Rng* rng);

PatchGrid patchify(const VideoClip& clip, std::span<const size_t> frame_idx,
                   size_t patch_h, size_t patch_w);

// Exact inverse of patchify over the sampled frames, frame-major layout.
std::vector<double> unpatchify(const PatchGrid& grid);

struct VisionParams {
  Tensor proj_w;       // [patch_dim x d]
  Tensor proj_b;       // [d]
  Tensor spatial_pos;  // [grid_h*grid_w x d]
  Tensor temporal_pos; // [>=T x d]
};

// feature(t, s) = patch·W + b + SpatialPos[s] + TemporalPos[t]; positional
// rows are added after the full projection including its bias.
Tensor embed_patches(Tape* tape, const PatchGrid& grid, const VisionParams& p);

}  // namespace lavender
