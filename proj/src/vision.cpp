#include "lavender/vision.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lavender {

namespace {

static_assert(std::endian::native == std::endian::little,
              "clip files are little endian; add byte swapping for this host");

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void VideoClip::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write clip file: " + path);
  out.write("VCLP1", 5);
  write_u32(out, static_cast<uint32_t>(height));
  write_u32(out, static_cast<uint32_t>(width));
  write_u32(out, static_cast<uint32_t>(frame_count));
  std::vector<float> payload(frames.size());
  for (size_t i = 0; i < frames.size(); ++i) {
    payload[i] = static_cast<float>(frames[i]);
  }
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw InputError("short write to clip file: " + path);
}

VideoClip VideoClip::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read clip file: " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "VCLP1", 5) != 0) {
    throw InputError("bad clip magic in " + path);
  }
  VideoClip clip;
  clip.height = read_u32(in);
  clip.width = read_u32(in);
  clip.frame_count = read_u32(in);
  const size_t n = clip.frame_count * clip.height * clip.width * 3;
  std::vector<float> payload(n);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw InputError("truncated clip file: " + path);
  clip.frames.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double v = payload[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InputError("clip intensity outside [0,1] in " + path);
    }
    clip.frames[i] = v;
  }
  return clip;
}

std::vector<size_t> sample_frames(size_t stored_frames, size_t t,
                                  FrameSampling mode, Rng* rng) {
  if (t < 1 || t > stored_frames) {
    throw ConfigError("sample_frames: T=" + std::to_string(t) +
                      " outside [1, " + std::to_string(stored_frames) + "]");
  }
  if (mode == FrameSampling::kEven) {
    std::vector<size_t> idx(t);
    for (size_t i = 0; i < t; ++i) {
      idx[i] = (2 * i + 1) * stored_frames / (2 * t);
    }
    return idx;
  }
  if (!rng) throw ConfigError("random frame sampling needs an rng");
  return rng->sample_without_replacement(stored_frames, t);
}

PatchGrid patchify(const VideoClip& clip, std::span<const size_t> frame_idx,
                   size_t patch_h, size_t patch_w) {
  if (patch_h == 0 || patch_w == 0 || clip.height % patch_h != 0 ||
      clip.width % patch_w != 0) {
    throw DimensionError("frame size " + std::to_string(clip.height) + "x" +
                         std::to_string(clip.width) +
                         " not divisible by patch size " +
                         std::to_string(patch_h) + "x" +
                         std::to_string(patch_w));
  }
  PatchGrid grid;
  grid.t = frame_idx.size();
  grid.grid_h = clip.height / patch_h;
  grid.grid_w = clip.width / patch_w;
  grid.patch_h = patch_h;
  grid.patch_w = patch_w;
  grid.frame_indices.assign(frame_idx.begin(), frame_idx.end());
  grid.patches.resize(grid.count() * grid.patch_dim());

  size_t at = 0;
  for (const size_t t : frame_idx) {
    if (t >= clip.frame_count) {
      throw DimensionError("frame index outside stored frames");
    }
    for (size_t gy = 0; gy < grid.grid_h; ++gy) {
      for (size_t gx = 0; gx < grid.grid_w; ++gx) {
        for (size_t py = 0; py < patch_h; ++py) {
          for (size_t px = 0; px < patch_w; ++px) {
            for (size_t c = 0; c < 3; ++c) {
              grid.patches[at++] =
                  clip.at(t, gy * patch_h + py, gx * patch_w + px, c);
            }
          }
        }
      }
    }
  }
  return grid;
}

std::vector<double> unpatchify(const PatchGrid& grid) {
  const size_t height = grid.grid_h * grid.patch_h;
  const size_t width = grid.grid_w * grid.patch_w;
  std::vector<double> frames(grid.t * height * width * 3);
  size_t at = 0;
  for (size_t t = 0; t < grid.t; ++t) {
    for (size_t gy = 0; gy < grid.grid_h; ++gy) {
      for (size_t gx = 0; gx < grid.grid_w; ++gx) {
        for (size_t py = 0; py < grid.patch_h; ++py) {
          for (size_t px = 0; px < grid.patch_w; ++px) {
            for (size_t c = 0; c < 3; ++c) {
              const size_t y = gy * grid.patch_h + py;
              const size_t x = gx * grid.patch_w + px;
              frames[((t * height + y) * width + x) * 3 + c] =
                  grid.patches[at++];
            }
          }
        }
      }
    }
  }
  return frames;
}

Tensor embed_patches(Tape* tape, const PatchGrid& grid, const VisionParams& p) {
  const size_t spatial = grid.grid_h * grid.grid_w;
  if (p.proj_w.rows() != grid.patch_dim()) {
    throw DimensionError("projection expects patch dim " +
                         std::to_string(p.proj_w.rows()) + ", grid has " +
                         std::to_string(grid.patch_dim()));
  }
  if (p.spatial_pos.rows() != spatial) {
    throw DimensionError("spatial table rows != grid positions");
  }
  if (p.temporal_pos.rows() < grid.t) {
    throw DimensionError("temporal table shorter than sampled frames");
  }
  Tensor x = Tensor::from({grid.count(), grid.patch_dim()}, grid.patches);
  Tensor h = add(tape, matmul(tape, x, p.proj_w), p.proj_b);
  std::vector<size_t> sidx(grid.count()), tidx(grid.count());
  for (size_t t = 0; t < grid.t; ++t) {
    for (size_t s = 0; s < spatial; ++s) {
      sidx[t * spatial + s] = s;
      tidx[t * spatial + s] = t;
    }
  }
  h = add(tape, h, gather_rows(tape, p.spatial_pos, sidx));
  h = add(tape, h, gather_rows(tape, p.temporal_pos, tidx));
  return h;
}

}  // namespace lavender
