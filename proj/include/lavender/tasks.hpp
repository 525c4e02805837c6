#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lavender/model.hpp"
#include "lavender/synthgen.hpp"
#include "lavender/text.hpp"

namespace lavender {

enum class TaskTag { kMlm, kVtm, kRetrieval, kMcQa, kOeQa, kFib, kCaption };

const char* to_string(TaskTag tag);
TaskTag task_tag_from(const std::string& name);

// One fully constructed training/inference instance. Every task family
// reduces to this shape: token ids with [MASK] insertions, per-position
// labels (kIgnoreLabel except at supervised positions), an attention mode,
// and a task tag. The shared MLM head reads out at mask_positions.
struct MaskedExample {
  std::string clip_id;
  std::vector<size_t> frame_indices;  // empty = sample at forward time
  std::vector<int> input_ids;
  size_t real_count = 0;  // positions before padding
  std::vector<size_t> mask_positions;
  std::vector<int> labels;  // one per input position
  AttentionMode mode = AttentionMode::kBidirectional;
  TaskTag tag = TaskTag::kMlm;
  bool skip_training = false;  // multiword open-ended answers
  size_t mc_k = 0;
  size_t mc_correct = 0;
  std::string gold_text;
  std::string example_id;
  std::string decoration = "none";

  void check_invariants() const;
};

struct MlmScheme {
  double rate = 0.15;
  double p_mask = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;
};

// BERT-style corruption over non-special positions: each eligible position
// is independently selected with probability rate, then masked / replaced by
// a random non-special token / kept, with the scheme's proportions. Labels
// carry the original token at selected positions. If nothing was selected
// the whole draw is repeated once; a still-empty example is legal and incurs
// zero loss.
MaskedExample build_mlm(const TokenSeq& seq, const Vocabulary& vocab,
                        const MlmScheme& scheme, Rng& rng);

enum class VtmForce { kRandom, kPositive, kNegative };

// Appends [MASK] after the terminal [SEP]; label is "true" for the kept pair
// or "false" after swapping in another in-batch text (0.5/0.5 under kRandom).
// A forced/drawn negative with no distinct swap candidate falls back to a
// positive and reports it through fell_back.
MaskedExample build_vtm(const std::string& clip_id, const std::string& text,
                        std::span<const std::string> batch_texts,
                        const Vocabulary& vocab, Rng& rng,
                        VtmForce force = VtmForce::kRandom,
                        bool* fell_back = nullptr);

// [CLS] Q [SEP] A0 [SEP] ... A_{k-1} [SEP] [MASK]; the label is the digit
// token of the ground-truth answer index.
MaskedExample build_mc(const std::string& clip_id, const std::string& question,
                       std::span<const std::string> answers, size_t correct,
                       const Vocabulary& vocab);

// [CLS] question [SEP] [MASK]; single-word answers become the label, longer
// answers mark the example skip_training (and score zero at evaluation).
MaskedExample build_oe(const std::string& clip_id, const std::string& question,
                       const std::string& answer, const Vocabulary& vocab);

// Replaces the sentence's single "___" with [MASK] in place.
MaskedExample build_fib(const std::string& clip_id, const std::string& sentence,
                        const std::string& answer, const Vocabulary& vocab);

// Caption-word corruption as in build_mlm, plus the terminal [SEP] is always
// replaced by [MASK] with label [SEP]: generation must learn its stop token,
// and decoding prefixes never contain a visible [SEP] either. seq2seq mode.
MaskedExample build_caption_train(const std::string& clip_id,
                                  const std::string& caption,
                                  const Vocabulary& vocab,
                                  const MlmScheme& scheme, Rng& rng);

enum class DecorationVariant { kNone, kPrompt, kToken };

DecorationVariant decoration_from(const std::string& name);
const char* to_string(DecorationVariant v);
// The task-specific prompt inserted after [CLS] under the prompt variant.
const char* task_prompt(TaskTag tag);
// The learnable task token inserted after [CLS] under the token variant.
int task_token(TaskTag tag);

MaskedExample decorate(const MaskedExample& example, DecorationVariant variant,
                       const Vocabulary& vocab);

// Restricted argmax over the digit tokens {0..k-1}; ties break to the lowest
// index. Invariant to logits outside the digit-token set.
size_t restricted_digit_argmax(std::span<const double> logits_row, size_t k);

struct RankedCandidate {
  std::string id;
  double score;
};

// Descending score; ties by candidate id ascending.
std::vector<RankedCandidate> rank_from_scores(
    std::span<const std::string> ids, std::span<const double> scores);

// Inference-side routing: every readout below goes through the model's one
// shared MLM head (the baseline_* variants use the separately parameterized
// task heads instead, for the task-specific control model).
class TaskEngine {
 public:
  TaskEngine(const Model& model, const Vocabulary& vocab, ClipStore& store);

  // Logits at the example's mask positions, [M x vocab]. Frames: the
  // example's indices when present, else even sampling with config
  // frames_override (0 = model config default).
  Tensor mask_logits(Tape* tape, const MaskedExample& example) const;
  // Full hidden states (video rows then text rows) for custom readouts.
  Tensor encode_example(Tape* tape, const MaskedExample& example) const;

  double score_vtm(const std::string& clip_id, const std::string& text) const;
  std::vector<RankedCandidate> rank_retrieval(
      const std::string& query_text,
      std::span<const std::string> candidate_clip_ids) const;
  std::vector<RankedCandidate> rank_texts(
      const std::string& clip_id, std::span<const std::string> texts) const;

  size_t infer_mc(const MaskedExample& example) const;
  std::string infer_oe(const MaskedExample& example) const;
  std::string decode_caption(const std::string& clip_id,
                             size_t max_steps = 50) const;

  size_t zero_shot_mc(const std::string& clip_id, const std::string& question,
                      std::span<const std::string> answers) const;

  // Baseline (task-specific heads on the [CLS] representation).
  double baseline_score_vtm(const std::string& clip_id,
                            const std::string& text) const;
  size_t baseline_zero_shot_mc(const std::string& clip_id,
                               const std::string& question,
                               std::span<const std::string> answers) const;
  size_t baseline_infer_mc(const std::string& clip_id,
                           const std::string& question,
                           std::span<const std::string> answers) const;
  // Logits over the baseline's closed answer vocabulary.
  std::vector<double> baseline_oe_logits(const std::string& clip_id,
                                         const std::string& question) const;

  void set_frames_override(size_t frames) { frames_override_ = frames; }
  void set_decoration(DecorationVariant v) { decoration_ = v; }

  const Model& model() const { return model_; }
  const Vocabulary& vocab() const { return vocab_; }

 private:
  Tensor cls_hidden(Tape* tape, const std::string& clip_id,
                    const std::string& text, bool append_mask) const;
  PatchGrid grid_for(const MaskedExample& example) const;

  const Model& model_;
  const Vocabulary& vocab_;
  ClipStore& store_;
  size_t frames_override_ = 0;
  DecorationVariant decoration_ = DecorationVariant::kNone;
};

}  // namespace lavender
