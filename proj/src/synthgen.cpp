#include "lavender/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace lavender {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kColorRgb[5][3] = {{1, 0, 0},
                                    {0, 1, 0},
                                    {0, 0, 1},
                                    {1, 1, 0},
                                    {1, 1, 1}};

constexpr double kSlowSpeed = 0.25;
constexpr double kNormalSpeed = 0.5;

double dir_x(Motion m) {
  return m == Motion::kLeft ? -1.0 : m == Motion::kRight ? 1.0 : 0.0;
}
double dir_y(Motion m) {
  return m == Motion::kUp ? -1.0 : m == Motion::kDown ? 1.0 : 0.0;
}

bool covers(const ObjectSpec& obj, double cx, double cy, size_t px, size_t py) {
  const double dx = static_cast<double>(px) - cx;
  const double dy = static_cast<double>(py) - cy;
  const double r = obj.radius;
  switch (obj.shape) {
    case ObjShape::kCircle:
      return dx * dx + dy * dy <= r * r;
    case ObjShape::kSquare:
      return std::max(std::abs(dx), std::abs(dy)) <= r;
    case ObjShape::kTriangle:
      return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0;
  }
  return false;
}

struct SweptBox {
  double x_lo, x_hi, y_lo, y_hi;
  bool overlaps(const SweptBox& o) const {
    return x_lo <= o.x_hi && o.x_lo <= x_hi && y_lo <= o.y_hi && o.y_lo <= y_hi;
  }
};

SweptBox swept_box(const ObjectSpec& obj, size_t frames) {
  const double x0 = obj.center_x(0), x1 = obj.center_x(frames - 1);
  const double y0 = obj.center_y(0), y1 = obj.center_y(frames - 1);
  return {std::min(x0, x1) - obj.radius - 1.0,
          std::max(x0, x1) + obj.radius + 1.0,
          std::min(y0, y1) - obj.radius - 1.0,
          std::max(y0, y1) + obj.radius + 1.0};
}

json scene_to_json(const SceneSpec& s) {
  json objs = json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"shape", to_word(o.shape)},
                    {"color", to_word(o.color)},
                    {"motion", to_word(o.motion)},
                    {"speed", o.speed},
                    {"x", o.start_x},
                    {"y", o.start_y},
                    {"r", o.radius}});
  }
  return {{"background", s.background},
          {"frame_h", s.frame_h},
          {"frame_w", s.frame_w},
          {"frame_count", s.frame_count},
          {"objects", objs}};
}

template <typename E>
E word_to_enum(const std::string& w, std::initializer_list<E> values) {
  for (const E v : values) {
    if (w == to_word(v)) return v;
  }
  throw InputError("unknown attribute word: " + w);
}

SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  s.background = j.at("background");
  s.frame_h = j.at("frame_h");
  s.frame_w = j.at("frame_w");
  s.frame_count = j.at("frame_count");
  for (const auto& o : j.at("objects")) {
    ObjectSpec obj;
    obj.shape = word_to_enum<ObjShape>(
        o.at("shape"),
        {ObjShape::kCircle, ObjShape::kSquare, ObjShape::kTriangle});
    obj.color = word_to_enum<ObjColor>(
        o.at("color"), {ObjColor::kRed, ObjColor::kGreen, ObjColor::kBlue,
                        ObjColor::kYellow, ObjColor::kWhite});
    obj.motion = word_to_enum<Motion>(
        o.at("motion"), {Motion::kLeft, Motion::kRight, Motion::kUp,
                         Motion::kDown, Motion::kStill});
    obj.speed = o.at("speed");
    obj.start_x = o.at("x");
    obj.start_y = o.at("y");
    obj.radius = o.at("r");
    s.objects.push_back(obj);
  }
  return s;
}

}  // namespace

const char* to_word(ObjShape s) {
  switch (s) {
    case ObjShape::kCircle: return "circle";
    case ObjShape::kSquare: return "square";
    case ObjShape::kTriangle: return "triangle";
  }
  return "?";
}

const char* to_word(ObjColor c) {
  switch (c) {
    case ObjColor::kRed: return "red";
    case ObjColor::kGreen: return "green";
    case ObjColor::kBlue: return "blue";
    case ObjColor::kYellow: return "yellow";
    case ObjColor::kWhite: return "white";
  }
  return "?";
}

const char* to_word(Motion m) {
  switch (m) {
    case Motion::kLeft: return "left";
    case Motion::kRight: return "right";
    case Motion::kUp: return "up";
    case Motion::kDown: return "down";
    case Motion::kStill: return "still";
  }
  return "?";
}

double ObjectSpec::center_x(size_t frame) const {
  return start_x + dir_x(motion) * speed * static_cast<double>(frame);
}

double ObjectSpec::center_y(size_t frame) const {
  return start_y + dir_y(motion) * speed * static_cast<double>(frame);
}

void SceneSpec::validate() const {
  if (objects.empty() || objects.size() > 3) {
    throw InputError("scene needs 1..3 objects");
  }
  std::set<std::pair<int, int>> kinds;
  for (const auto& o : objects) {
    if ((o.motion == Motion::kStill) != (o.speed == 0.0)) {
      throw InputError("speed must be 0 exactly for still objects");
    }
    if (!kinds.insert({int(o.shape), int(o.color)}).second) {
      throw InputError("two objects share (shape, color)");
    }
    for (size_t t = 0; t < frame_count; ++t) {
      const double cx = o.center_x(t), cy = o.center_y(t);
      if (cx - o.radius < 1.0 || cx + o.radius > frame_w - 2.0 ||
          cy - o.radius < 1.0 || cy + o.radius > frame_h - 2.0) {
        throw InputError("object escapes the frame margin at frame " +
                         std::to_string(t));
      }
    }
  }
}

VideoClip render(const SceneSpec& scene) {
  scene.validate();
  VideoClip clip;
  clip.height = scene.frame_h;
  clip.width = scene.frame_w;
  clip.frame_count = scene.frame_count;
  clip.frames.assign(clip.frame_count * clip.height * clip.width * 3,
                     scene.background);
  for (size_t t = 0; t < clip.frame_count; ++t) {
    for (const auto& obj : scene.objects) {
      const double cx = obj.center_x(t), cy = obj.center_y(t);
      const size_t x_lo = static_cast<size_t>(std::max(0.0, cx - obj.radius - 1));
      const size_t x_hi = static_cast<size_t>(
          std::min<double>(clip.width - 1.0, cx + obj.radius + 1));
      const size_t y_lo = static_cast<size_t>(std::max(0.0, cy - obj.radius - 1));
      const size_t y_hi = static_cast<size_t>(
          std::min<double>(clip.height - 1.0, cy + obj.radius + 1));
      const double* rgb = kColorRgb[int(obj.color)];
      for (size_t y = y_lo; y <= y_hi; ++y) {
        for (size_t x = x_lo; x <= x_hi; ++x) {
          if (!covers(obj, cx, cy, x, y)) continue;
          const size_t at = clip.pixel_index(t, y, x, 0);
          clip.frames[at] = rgb[0];
          clip.frames[at + 1] = rgb[1];
          clip.frames[at + 2] = rgb[2];
        }
      }
    }
  }
  return clip;
}

std::string caption_for(const SceneSpec& scene) {
  std::string out;
  for (const auto& o : scene.objects) {
    if (!out.empty()) out += " and ";
    out += "the ";
    out += to_word(o.color);
    out += ' ';
    out += to_word(o.shape);
    if (o.motion == Motion::kStill) {
      out += " stays still";
    } else {
      out += " moves ";
      if (o.speed == kSlowSpeed) out += "slowly ";
      out += to_word(o.motion);
    }
  }
  return out;
}

std::vector<QaItem> make_oe_questions(const SceneSpec& scene) {
  std::vector<QaItem> qa;
  qa.push_back({"how many objects are in the video",
                std::to_string(scene.objects.size())});
  for (const auto& o : scene.objects) {
    qa.push_back({std::string("which direction does the ") + to_word(o.color) +
                      " " + to_word(o.shape) + " move",
                  to_word(o.motion)});
  }
  auto unique_by = [&](auto key) {
    std::map<int, size_t> counts;
    for (const auto& o : scene.objects) ++counts[key(o)];
    return counts;
  };
  const auto shape_counts = unique_by([](const ObjectSpec& o) { return int(o.shape); });
  for (const auto& o : scene.objects) {
    if (shape_counts.at(int(o.shape)) == 1) {
      qa.push_back({std::string("what color is the ") + to_word(o.shape),
                    to_word(o.color)});
    }
  }
  const auto color_counts = unique_by([](const ObjectSpec& o) { return int(o.color); });
  for (const auto& o : scene.objects) {
    if (color_counts.at(int(o.color)) == 1) {
      qa.push_back({std::string("what shape is the ") + to_word(o.color) +
                        " object",
                    to_word(o.shape)});
    }
  }
  return qa;
}

McItem make_mc(const SceneSpec& scene, size_t k_choices, Rng& rng) {
  if (k_choices < 2 || k_choices > 5) {
    throw ConfigError("mc choices must be in [2, 5] (attribute domain is 5)");
  }
  struct Candidate {
    std::string question;
    std::string truth;
    std::vector<std::string> domain;
  };
  std::vector<Candidate> candidates;
  const std::vector<std::string> directions{"left", "right", "up", "down",
                                            "still"};
  const std::vector<std::string> colors{"red", "green", "blue", "yellow",
                                        "white"};
  for (const auto& o : scene.objects) {
    candidates.push_back({std::string("which direction does the ") +
                              to_word(o.color) + " " + to_word(o.shape) +
                              " move",
                          to_word(o.motion), directions});
  }
  std::map<int, size_t> shape_counts;
  for (const auto& o : scene.objects) ++shape_counts[int(o.shape)];
  for (const auto& o : scene.objects) {
    if (shape_counts[int(o.shape)] == 1) {
      candidates.push_back(
          {std::string("what color is the ") + to_word(o.shape),
           to_word(o.color), colors});
    }
  }
  const Candidate& pick = candidates[rng.uniform_int(candidates.size())];
  std::vector<std::string> distractors;
  for (const auto& v : pick.domain) {
    if (v != pick.truth) distractors.push_back(v);
  }
  rng.shuffle(distractors);
  distractors.resize(k_choices - 1);

  McItem item;
  item.question = pick.question;
  item.correct = rng.uniform_int(k_choices);
  item.choices.resize(k_choices);
  size_t di = 0;
  for (size_t i = 0; i < k_choices; ++i) {
    item.choices[i] = i == item.correct ? pick.truth : distractors[di++];
  }
  return item;
}

FibItem make_fib(const SceneSpec& scene, Rng& rng) {
  const std::string caption = caption_for(scene);
  std::vector<std::string> blankable;
  for (const auto& o : scene.objects) {
    blankable.push_back(to_word(o.color));
    blankable.push_back(to_word(o.shape));
    blankable.push_back(to_word(o.motion));  // "still" for still objects
  }
  const std::string word = blankable[rng.uniform_int(blankable.size())];

  // replace the first whole-word occurrence
  std::istringstream ss(caption);
  std::string tok;
  std::vector<std::string> words;
  bool replaced = false;
  while (ss >> tok) {
    if (!replaced && tok == word) {
      words.push_back("___");
      replaced = true;
    } else {
      words.push_back(tok);
    }
  }
  if (!replaced) throw InputError("blank word not found in caption");
  std::string sentence;
  for (const auto& w : words) {
    if (!sentence.empty()) sentence += ' ';
    sentence += w;
  }
  return {sentence, word};
}

std::vector<size_t> CorpusManifest::split_indices(const std::string& split)
    const {
  std::vector<size_t> idx;
  for (size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].split == split) idx.push_back(i);
  }
  return idx;
}

const AnnotatedClip& CorpusManifest::by_id(const std::string& clip_id) const {
  for (const auto& c : clips) {
    if (c.clip_id == clip_id) return c;
  }
  throw InputError("clip id not in manifest: " + clip_id);
}

namespace {

std::optional<SceneSpec> try_sample_scene(const GenSpec& spec, Rng& rng) {
  SceneSpec scene;
  scene.frame_h = spec.frame_h;
  scene.frame_w = spec.frame_w;
  const double bgs[3] = {0.2, 0.3, 0.4};
  scene.background = bgs[rng.uniform_int(3)];
  const size_t n_obj = 1 + rng.uniform_int(3);
  std::set<std::pair<int, int>> kinds;
  std::vector<SweptBox> boxes;
  for (size_t i = 0; i < n_obj; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      ObjectSpec o;
      o.shape = static_cast<ObjShape>(rng.uniform_int(3));
      o.color = static_cast<ObjColor>(rng.uniform_int(5));
      if (kinds.count({int(o.shape), int(o.color)})) continue;
      o.motion = static_cast<Motion>(rng.uniform_int(5));
      o.speed = o.motion == Motion::kStill
                    ? 0.0
                    : (rng.bernoulli(0.5) ? kSlowSpeed : kNormalSpeed);
      o.radius = n_obj == 1 ? 3 + double(rng.uniform_int(3))
                            : 3 + double(rng.uniform_int(2));
      const double travel =
          o.speed * static_cast<double>(scene.frame_count - 1);
      const double tx = dir_x(o.motion) * travel;
      const double ty = dir_y(o.motion) * travel;
      const double x_lo = 1.0 + o.radius + std::max(0.0, -tx);
      const double x_hi = spec.frame_w - 2.0 - o.radius - std::max(0.0, tx);
      const double y_lo = 1.0 + o.radius + std::max(0.0, -ty);
      const double y_hi = spec.frame_h - 2.0 - o.radius - std::max(0.0, ty);
      if (x_lo > x_hi || y_lo > y_hi) continue;
      o.start_x = std::ceil(x_lo) +
                  double(rng.uniform_int(uint64_t(std::floor(x_hi) -
                                                  std::ceil(x_lo)) + 1));
      o.start_y = std::ceil(y_lo) +
                  double(rng.uniform_int(uint64_t(std::floor(y_hi) -
                                                  std::ceil(y_lo)) + 1));
      const SweptBox box = swept_box(o, scene.frame_count);
      bool clear = true;
      for (const auto& b : boxes) clear = clear && !box.overlaps(b);
      if (!clear) continue;
      boxes.push_back(box);
      kinds.insert({int(o.shape), int(o.color)});
      scene.objects.push_back(o);
      placed = true;
    }
    if (!placed) return std::nullopt;
  }
  return scene;
}

}  // namespace

CorpusManifest generate_corpus(const GenSpec& spec, const std::string& dir) {
  if (spec.n_clips == 0) throw ConfigError("n_clips must be positive");
  if (spec.train_frac < 0 || spec.val_frac < 0 || spec.test_frac < 0 ||
      std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) >
          1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  fs::create_directories(fs::path(dir) / "clips");

  CorpusManifest manifest;
  manifest.dir = dir;
  std::set<std::string> seen_captions;
  for (size_t i = 0; i < spec.n_clips; ++i) {
    bool done = false;
    for (int attempt = 0; attempt < 500 && !done; ++attempt) {
      Rng rng(Rng::derive_seed(spec.seed, "clip-" + std::to_string(i) + "-a" +
                                              std::to_string(attempt)));
      const auto scene = try_sample_scene(spec, rng);
      if (!scene) continue;
      const std::string caption = caption_for(*scene);
      if (seen_captions.count(caption)) continue;
      seen_captions.insert(caption);

      AnnotatedClip clip;
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "clip_%06zu", i);
      clip.clip_id = idbuf;
      clip.file = std::string("clips/") + idbuf + ".vclp";
      clip.scene = *scene;
      clip.caption = caption;
      clip.qa = make_oe_questions(*scene);
      clip.mc = make_mc(*scene, spec.k_choices, rng);
      clip.fib = make_fib(*scene, rng);
      manifest.clips.push_back(std::move(clip));
      done = true;
    }
    if (!done) {
      throw InputError("could not generate " + std::to_string(spec.n_clips) +
                       " distinct scenes; exhausted attempts at clip " +
                       std::to_string(i));
    }
  }

  // split assignment: floor val/test counts, remainder to train
  const size_t n = spec.n_clips;
  const size_t n_val = static_cast<size_t>(spec.val_frac * double(n));
  const size_t n_test = static_cast<size_t>(spec.test_frac * double(n));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng(Rng::derive_seed(spec.seed, "splits"));
  split_rng.shuffle(order);
  for (size_t pos = 0; pos < n; ++pos) {
    const char* split = pos < n_val             ? "val"
                        : pos < n_val + n_test  ? "test"
                                                : "train";
    manifest.clips[order[pos]].split = split;
  }

  // render and persist
  std::ofstream out(fs::path(dir) / "manifest.jsonl", std::ios::binary);
  if (!out) throw InputError("cannot write manifest in " + dir);
  for (const auto& clip : manifest.clips) {
    VideoClip video = render(clip.scene);
    video.clip_id = clip.clip_id;
    video.save((fs::path(dir) / clip.file).string());
    json j;
    j["clip_id"] = clip.clip_id;
    j["file"] = clip.file;
    j["split"] = clip.split;
    j["caption"] = clip.caption;
    json qa = json::array();
    for (const auto& q : clip.qa) qa.push_back({{"q", q.question}, {"a", q.answer}});
    j["qa"] = qa;
    j["mc"] = {{"q", clip.mc.question},
               {"choices", clip.mc.choices},
               {"correct", clip.mc.correct}};
    j["fib"] = {{"sentence", clip.fib.sentence}, {"answer", clip.fib.answer}};
    j["scene"] = scene_to_json(clip.scene);
    out << j.dump() << "\n";
  }
  return manifest;
}

CorpusManifest load_corpus(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.jsonl", std::ios::binary);
  if (!in) throw InputError("cannot read manifest in " + dir);
  CorpusManifest manifest;
  manifest.dir = dir;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    AnnotatedClip clip;
    clip.clip_id = j.at("clip_id");
    clip.file = j.at("file");
    clip.split = j.at("split");
    clip.caption = j.at("caption");
    for (const auto& q : j.at("qa")) {
      clip.qa.push_back({q.at("q"), q.at("a")});
    }
    clip.mc.question = j.at("mc").at("q");
    clip.mc.choices = j.at("mc").at("choices").get<std::vector<std::string>>();
    clip.mc.correct = j.at("mc").at("correct");
    clip.fib.sentence = j.at("fib").at("sentence");
    clip.fib.answer = j.at("fib").at("answer");
    clip.scene = scene_from_json(j.at("scene"));
    manifest.clips.push_back(std::move(clip));
  }
  return manifest;
}

ClipStore::ClipStore(const CorpusManifest& manifest, size_t capacity)
    : manifest_(manifest), capacity_(std::max<size_t>(1, capacity)) {}

std::shared_ptr<const VideoClip> ClipStore::get(const std::string& clip_id) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(clip_id);
  if (it != cache_.end()) {
    it->second.first = ++tick_;
    return it->second.second;
  }
  const AnnotatedClip& entry = manifest_.by_id(clip_id);
  auto clip = std::make_shared<VideoClip>(
      VideoClip::load((fs::path(manifest_.dir) / entry.file).string()));
  if (cache_.size() >= capacity_) {
    auto victim = cache_.begin();
    for (auto c = cache_.begin(); c != cache_.end(); ++c) {
      if (c->second.first < victim->second.first) victim = c;
    }
    cache_.erase(victim);
  }
  cache_.emplace(clip_id, std::make_pair(++tick_, clip));
  return clip;
}

std::vector<std::string> decoration_vocabulary() {
  return {"is",     "the",     "video-text", "paired",  "true",  "or",
          "false",  "which",   "answer",     "choice",  "correct",
          "choose", "from",    "about",      "question", "write",
          "a",      "description", "video"};
}

}  // namespace lavender
