#include <cmath>
#include <cstdio>
#include <numeric>

#include "doctest.h"
#include "lavender/vision.hpp"

using namespace lavender;

namespace {

VideoClip random_clip(size_t frames, size_t h, size_t w, uint64_t seed) {
  Rng rng(seed);
  VideoClip clip;
  clip.height = h;
  clip.width = w;
  clip.frame_count = frames;
  clip.frames.resize(frames * h * w * 3);
  for (double& v : clip.frames) v = rng.uniform();
  return clip;
}

}  // namespace

TEST_CASE("even frame sampling is centered and deterministic") {
  auto all_frames = sample_frames(32, 32, FrameSampling::kEven, nullptr);
  for (size_t i = 0; i < 32; ++i) CHECK(all_frames[i] == i);

  auto a = sample_frames(32, 4, FrameSampling::kEven, nullptr);
  auto b = sample_frames(32, 4, FrameSampling::kEven, nullptr);
  CHECK(a == b);
  CHECK(a == std::vector<size_t>{4, 12, 20, 28});

  CHECK_THROWS_AS(sample_frames(32, 0, FrameSampling::kEven, nullptr),
                  ConfigError);
  CHECK_THROWS_AS(sample_frames(32, 33, FrameSampling::kEven, nullptr),
                  ConfigError);
}

TEST_CASE("random frame sampling: reproducible, sorted, uniform") {
  Rng a(99), b(99);
  auto ia = sample_frames(32, 5, FrameSampling::kRandom, &a);
  auto ib = sample_frames(32, 5, FrameSampling::kRandom, &b);
  CHECK(ia == ib);
  CHECK(std::is_sorted(ia.begin(), ia.end()));

  // inclusion frequency of each index ~ Binomial(n, T/32)
  const size_t n = 10000, t = 4;
  std::vector<size_t> counts(32, 0);
  Rng rng(123);
  for (size_t i = 0; i < n; ++i) {
    for (const size_t idx : sample_frames(32, t, FrameSampling::kRandom, &rng)) {
      ++counts[idx];
    }
  }
  const double p = double(t) / 32.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (const size_t c : counts) {
    CHECK(std::abs(double(c) - n * p) < 3.0 * sigma + 1.0);
  }
}

TEST_CASE("patchify single-patch case and hand layout") {
  VideoClip clip = random_clip(2, 4, 4, 5);
  const std::vector<size_t> idx{0, 1};
  PatchGrid one = patchify(clip, idx, 4, 4);
  CHECK(one.count() == 2);
  // whole frame flattened (y, x, c)
  for (size_t y = 0; y < 4; ++y) {
    for (size_t x = 0; x < 4; ++x) {
      for (size_t c = 0; c < 3; ++c) {
        CHECK(one.patches[(y * 4 + x) * 3 + c] == clip.at(0, y, x, c));
      }
    }
  }

  VideoClip frame8 = random_clip(1, 8, 8, 6);
  const std::vector<size_t> idx0{0};
  PatchGrid four = patchify(frame8, idx0, 4, 4);
  CHECK(four.count() == 4);
  // corner pixel of the bottom-right patch: patch (gy=1, gx=1), pixel (7,7)
  const size_t patch_at = (0 * 2 + 1) * 2 + 1;
  const size_t offset = ((3 * 4) + 3) * 3;
  CHECK(four.patches[patch_at * four.patch_dim() + offset] ==
        frame8.at(0, 7, 7, 0));

  CHECK_THROWS_AS(patchify(frame8, idx0, 3, 4), DimensionError);
}

TEST_CASE("unpatchify inverts patchify bit-exactly") {
  VideoClip clip = random_clip(4, 8, 12, 7);
  const std::vector<size_t> idx{0, 2, 3};
  PatchGrid grid = patchify(clip, idx, 4, 4);
  const auto frames = unpatchify(grid);
  size_t at = 0;
  for (const size_t t : idx) {
    for (size_t y = 0; y < 8; ++y) {
      for (size_t x = 0; x < 12; ++x) {
        for (size_t c = 0; c < 3; ++c) {
          CHECK(frames[at++] == clip.at(t, y, x, c));
        }
      }
    }
  }
}

TEST_CASE("clip files round trip") {
  VideoClip clip = random_clip(3, 4, 4, 11);
  clip.clip_id = "clip_test";
  const std::string path = "clip_roundtrip_test.bin";
  clip.save(path);
  VideoClip loaded = VideoClip::load(path);
  CHECK(loaded.height == clip.height);
  CHECK(loaded.width == clip.width);
  CHECK(loaded.frame_count == clip.frame_count);
  REQUIRE(loaded.frames.size() == clip.frames.size());
  for (size_t i = 0; i < clip.frames.size(); ++i) {
    CHECK(loaded.frames[i] == doctest::Approx(clip.frames[i]).epsilon(1e-7));
  }
  std::remove(path.c_str());
}

TEST_CASE("embed_patches zero case and frame-swap structure") {
  VideoClip clip = random_clip(4, 8, 8, 13);
  const std::vector<size_t> idx{0, 1};
  PatchGrid grid = patchify(clip, idx, 4, 4);
  const size_t d = 6, spatial = 4;

  VisionParams zero{Tensor::zeros({grid.patch_dim(), d}), Tensor::zeros({d}),
                    Tensor::zeros({spatial, d}), Tensor::zeros({8, d})};
  Tensor feat = embed_patches(nullptr, grid, zero);
  CHECK(feat.rows() == grid.count());
  CHECK(feat.cols() == d);
  for (const double v : feat.values()) CHECK(v == 0.0);

  // with TemporalPos = 0, swapping two frames permutes rows identically
  Rng rng(17);
  VisionParams p{Tensor::randn({grid.patch_dim(), d}, rng, 0.3),
                 Tensor::randn({d}, rng, 0.3),
                 Tensor::randn({spatial, d}, rng, 0.3),
                 Tensor::zeros({8, d})};
  const std::vector<size_t> swapped{1, 0};
  PatchGrid grid2 = patchify(clip, swapped, 4, 4);
  Tensor a = embed_patches(nullptr, grid, p);
  Tensor b = embed_patches(nullptr, grid2, p);
  for (size_t s = 0; s < spatial; ++s) {
    for (size_t j = 0; j < d; ++j) {
      CHECK(a.at(s, j) == b.at(spatial + s, j));
      CHECK(a.at(spatial + s, j) == b.at(s, j));
    }
  }
}

TEST_CASE("projection parameter gradients match finite differences") {
  VideoClip clip = random_clip(2, 4, 4, 19);
  const std::vector<size_t> idx{0, 1};
  PatchGrid grid = patchify(clip, idx, 2, 2);
  Rng rng(23);
  const size_t d = 4;
  Tensor bias = Tensor::randn({d}, rng, 0.2);
  Tensor spatial = Tensor::randn({4, d}, rng, 0.2);
  Tensor temporal = Tensor::randn({4, d}, rng, 0.2);

  auto f = [&](Tape& t, const Tensor& w) {
    VisionParams p{w, bias, spatial, temporal};
    Tensor h = embed_patches(&t, grid, p);
    return sum(&t, mul(&t, h, h));
  };
  Tensor w0 = Tensor::randn({grid.patch_dim(), d}, rng, 0.3);
  auto report = grad_check(f, w0, 1e-5, 1e-4);
  CHECK(report.pass);
}
