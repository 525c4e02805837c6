#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lavender/tensor.hpp"
#include "lavender/text.hpp"
#include "lavender/vision.hpp"

namespace lavender {

// Bidirectional: every real position sees every real position. Seq2seq:
// video positions see video positions only; text position i sees all video
// plus text positions <= i. Padded positions never attend and are never
// attended in either mode.
enum class AttentionMode { kBidirectional, kSeq2SeqCausal };

enum class BaselineHeadKind { kVtmBinary, kMcClassifier, kOeClassifier };

struct ModelConfig {
  size_t d = 64;
  size_t layers = 2;
  size_t heads = 4;
  size_t ffn_mult = 4;
  size_t vocab_size = 0;
  size_t frames = 4;  // T sampled at training time; overridable per call
  size_t frame_h = 32;
  size_t frame_w = 32;
  size_t patch_h = 8;
  size_t patch_w = 8;
  // Width of the projected visual feature, standing in for the vision
  // backbone's channel dimension. Equals d: patches project straight into
  // the fusion space.
  size_t vision_feature_dim = 64;
  size_t max_text_len = 64;
  size_t temporal_table_len = 8;
  double ln_eps = 1e-9;
  double init_std = 0.02;
  bool tie_mlm_output = false;
  bool baseline_heads = false;
  size_t mc_choices = 5;
  size_t oe_answers = 16;
  uint64_t init_seed = 1;

  size_t patch_dim() const { return patch_h * patch_w * 3; }
  size_t spatial_positions() const {
    return (frame_h / patch_h) * (frame_w / patch_w);
  }
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct AttentionMask {
  size_t video_len = 0;
  size_t text_len = 0;
  std::vector<uint8_t> allow;  // row-major [(V+N) x (V+N)]

  size_t size() const { return video_len + text_len; }
  bool at(size_t i, size_t j) const { return allow[i * size() + j] != 0; }
};

// text_pad holds one flag per text position (true = padding). Video
// positions are never padded.
AttentionMask build_attention_matrix(size_t video_len, size_t text_len,
                                     std::span<const uint8_t> text_pad,
                                     AttentionMode mode);

// Fusion transformer with one shared MLM head and, optionally, the
// separately parameterized task heads of the task-specific baseline.
// Parameter names are grouped by prefix: "backbone.", "mlm_head.",
// "ts_head.vtm.", "ts_head.mc.", "ts_head.oe.".
class Model {
 public:
  explicit Model(const ModelConfig& config);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }
  Tensor param(const std::string& name) const;
  void zero_grads() const;

  Model clone() const;  // deep copy of values; fresh zero grads
  void copy_values_from(const Model& other);

  // Projects sampled patches into fusion width and adds positional rows.
  Tensor embed_video(Tape* tape, const PatchGrid& grid) const;
  // Token embeddings plus text positional rows; pads embed like any token
  // but the attention mask keeps them out of every real position's output.
  Tensor embed_text(Tape* tape, const TokenSeq& text) const;
  // Pre-norm transformer over [video rows; text rows].
  Tensor encode(Tape* tape, const Tensor& video_feats, const TokenSeq& text,
                AttentionMode mode) const;
  // d -> d -> gelu -> layer_norm -> vocab_size. The single head every task
  // reads from; exactly one parameter set per model.
  Tensor mlm_head(Tape* tape, const Tensor& hidden) const;
  // Baseline classifier applied to the [CLS] row; ConfigError when the
  // model was built without baseline heads.
  Tensor baseline_head(Tape* tape, const Tensor& cls_row,
                       BaselineHeadKind kind) const;

  uint64_t step() const { return step_; }
  void set_step(uint64_t s) { step_ = s; }

  // Checkpoint: "LVCK1", length-prefixed config JSON, step counter, then
  // named f64 tensors (little endian). Loading rebuilds bit-identical
  // forward behavior.
  void save(const std::string& path) const;
  static Model load(const std::string& path);

 private:
  Model() = default;
  void register_param(const std::string& name, Tensor t);
  Tensor head_mlp(Tape* tape, const Tensor& input, const std::string& prefix,
                  const Tensor& out_w, const Tensor& out_b) const;

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, size_t> index_;
  uint64_t step_ = 0;
};

struct ParamCountReport {
  size_t backbone = 0;  // P
  size_t mlm_head = 0;  // H
  std::map<std::string, size_t> baseline_heads;
  size_t total = 0;
};

ParamCountReport param_count(const Model& model);

}  // namespace lavender
