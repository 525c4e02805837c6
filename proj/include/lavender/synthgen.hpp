#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lavender/rng.hpp"
#include "lavender/vision.hpp"

namespace lavender {

enum class ObjShape { kCircle, kSquare, kTriangle };
enum class ObjColor { kRed, kGreen, kBlue, kYellow, kWhite };
enum class Motion { kLeft, kRight, kUp, kDown, kStill };

const char* to_word(ObjShape s);
const char* to_word(ObjColor c);
const char* to_word(Motion m);

struct ObjectSpec {
  ObjShape shape = ObjShape::kCircle;
  ObjColor color = ObjColor::kRed;
  Motion motion = Motion::kStill;
  double speed = 0.0;  // pixels per frame; 0 iff still
  double start_x = 0.0;
  double start_y = 0.0;
  double radius = 3.0;

  double center_x(size_t frame) const;
  double center_y(size_t frame) const;
};

// One procedurally generated scene. Objects keep a 1-pixel margin to the
// frame edge over all frames and never overlap, so every question is
// answerable from pixels alone.
struct SceneSpec {
  std::vector<ObjectSpec> objects;
  double background = 0.3;
  size_t frame_h = 32;
  size_t frame_w = 32;
  size_t frame_count = 32;

  void validate() const;
};

struct QaItem {
  std::string question;
  std::string answer;  // always a single vocabulary word
};

struct McItem {
  std::string question;
  std::vector<std::string> choices;
  size_t correct = 0;
};

struct FibItem {
  std::string sentence;  // contains exactly one blank marker "___"
  std::string answer;
};

struct AnnotatedClip {
  std::string clip_id;
  std::string file;  // path relative to the corpus directory
  SceneSpec scene;
  std::string caption;
  std::vector<QaItem> qa;
  McItem mc;
  FibItem fib;
  std::string split;  // "train" | "val" | "test"
};

// Deterministic rasterization at pixel centers (x, y), no anti-aliasing:
//   circle:   (x-cx)^2 + (y-cy)^2 <= r^2
//   square:   max(|x-cx|, |y-cy|) <= r
//   triangle: apex up; |x-cx| <= (y-cy+r)/2 for y in [cy-r, cy+r]
VideoClip render(const SceneSpec& scene);

std::string caption_for(const SceneSpec& scene);
std::vector<QaItem> make_oe_questions(const SceneSpec& scene);
McItem make_mc(const SceneSpec& scene, size_t k_choices, Rng& rng);
FibItem make_fib(const SceneSpec& scene, Rng& rng);

struct GenSpec {
  size_t n_clips = 100;
  uint64_t seed = 1;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  size_t frame_h = 32;
  size_t frame_w = 32;
  size_t k_choices = 5;
};

struct CorpusManifest {
  std::string dir;
  std::vector<AnnotatedClip> clips;

  std::vector<size_t> split_indices(const std::string& split) const;
  const AnnotatedClip& by_id(const std::string& clip_id) const;
};

// Samples scenes with globally distinct captions (splits are therefore
// disjoint by caption text as well as clip id), renders clip files under
// dir/clips/, and writes dir/manifest.jsonl, one record per clip.
CorpusManifest generate_corpus(const GenSpec& spec, const std::string& dir);

CorpusManifest load_corpus(const std::string& dir);

// Loads clips by manifest entry with a bounded cache; safe for concurrent
// readers.
class ClipStore {
 public:
  explicit ClipStore(const CorpusManifest& manifest, size_t capacity = 256);
  std::shared_ptr<const VideoClip> get(const std::string& clip_id);

 private:
  const CorpusManifest& manifest_;
  size_t capacity_;
  std::mutex mutex_;
  std::map<std::string, std::pair<uint64_t, std::shared_ptr<const VideoClip>>>
      cache_;
  uint64_t tick_ = 0;
};

// Vocabulary every generated text draws from (template words only; the
// reserved block is separate). Used to seed build_vocab so prompt decoration
// words are always present.
std::vector<std::string> decoration_vocabulary();

}  // namespace lavender
