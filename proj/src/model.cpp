#include "lavender/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace lavender {

namespace {

using nlohmann::json;

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}
uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t read_u64(std::ifstream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw ConfigError("fusion width " + std::to_string(d) +
                      " must be divisible by head count " +
                      std::to_string(heads));
  }
  if (vocab_size < Vocabulary::kReservedCount) {
    throw ConfigError("vocab_size below reserved token count");
  }
  if (frame_h % patch_h != 0 || frame_w % patch_w != 0) {
    throw ConfigError("frame size must be divisible by patch size");
  }
  if (frames == 0 || frames > temporal_table_len) {
    throw ConfigError("frames must be in [1, temporal_table_len]");
  }
  if (vision_feature_dim != d) {
    throw ConfigError("vision_feature_dim must equal fusion width d");
  }
  if (max_text_len < 2) throw ConfigError("max_text_len too small");
}

std::string ModelConfig::to_json() const {
  json j;
  j["d"] = d;
  j["layers"] = layers;
  j["heads"] = heads;
  j["ffn_mult"] = ffn_mult;
  j["vocab_size"] = vocab_size;
  j["frames"] = frames;
  j["frame_h"] = frame_h;
  j["frame_w"] = frame_w;
  j["patch_h"] = patch_h;
  j["patch_w"] = patch_w;
  j["vision_feature_dim"] = vision_feature_dim;
  j["max_text_len"] = max_text_len;
  j["temporal_table_len"] = temporal_table_len;
  j["ln_eps"] = ln_eps;
  j["init_std"] = init_std;
  j["tie_mlm_output"] = tie_mlm_output;
  j["baseline_heads"] = baseline_heads;
  j["mc_choices"] = mc_choices;
  j["oe_answers"] = oe_answers;
  j["init_seed"] = init_seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig c;
  c.d = j.at("d");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.ffn_mult = j.at("ffn_mult");
  c.vocab_size = j.at("vocab_size");
  c.frames = j.at("frames");
  c.frame_h = j.at("frame_h");
  c.frame_w = j.at("frame_w");
  c.patch_h = j.at("patch_h");
  c.patch_w = j.at("patch_w");
  c.vision_feature_dim = j.at("vision_feature_dim");
  c.max_text_len = j.at("max_text_len");
  c.temporal_table_len = j.at("temporal_table_len");
  c.ln_eps = j.at("ln_eps");
  c.init_std = j.at("init_std");
  c.tie_mlm_output = j.at("tie_mlm_output");
  c.baseline_heads = j.at("baseline_heads");
  c.mc_choices = j.at("mc_choices");
  c.oe_answers = j.at("oe_answers");
  c.init_seed = j.at("init_seed");
  return c;
}

AttentionMask build_attention_matrix(size_t video_len, size_t text_len,
                                     std::span<const uint8_t> text_pad,
                                     AttentionMode mode) {
  if (video_len == 0 && text_len == 0) {
    throw DimensionError("attention matrix needs at least one position");
  }
  if (text_pad.size() != text_len) {
    throw DimensionError("pad flags length must equal text length");
  }
  const size_t n = video_len + text_len;
  AttentionMask mask;
  mask.video_len = video_len;
  mask.text_len = text_len;
  mask.allow.assign(n * n, 0);
  auto real = [&](size_t pos) {
    return pos < video_len || text_pad[pos - video_len] == 0;
  };
  for (size_t i = 0; i < n; ++i) {
    if (!real(i)) continue;
    for (size_t j = 0; j < n; ++j) {
      if (!real(j)) continue;
      bool ok;
      if (mode == AttentionMode::kBidirectional) {
        ok = true;
      } else if (i < video_len) {
        ok = j < video_len;  // video rows see video only
      } else {
        ok = j < video_len || j <= i;  // text row i: video plus text <= i
      }
      if (ok) mask.allow[i * n + j] = 1;
    }
  }
  return mask;
}

Model::Model(const ModelConfig& config) {
  config.validate();
  config_ = config;
  Rng rng(Rng::derive_seed(config.init_seed, "model-init"));
  const size_t d = config.d;
  const size_t ffn = config.d * config.ffn_mult;
  const double s = config.init_std;

  auto weight = [&](std::vector<size_t> shape) {
    return Tensor::randn(std::move(shape), rng, s, true);
  };
  auto zeros = [&](std::vector<size_t> shape) {
    return Tensor::zeros(std::move(shape), true);
  };
  auto ones = [&](std::vector<size_t> shape) {
    return Tensor::full(std::move(shape), 1.0, true);
  };

  register_param("backbone.token_emb", weight({config.vocab_size, d}));
  register_param("backbone.text_pos", weight({config.max_text_len, d}));
  register_param("backbone.vision.proj_w", weight({config.patch_dim(), d}));
  register_param("backbone.vision.proj_b", zeros({d}));
  register_param("backbone.vision.spatial_pos",
                 weight({config.spatial_positions(), d}));
  register_param("backbone.vision.temporal_pos",
                 weight({config.temporal_table_len, d}));
  for (size_t l = 0; l < config.layers; ++l) {
    const std::string p = "backbone.layer" + std::to_string(l) + ".";
    register_param(p + "ln1.g", ones({d}));
    register_param(p + "ln1.b", zeros({d}));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      register_param(p + w, weight({d, d}));
    }
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) {
      register_param(p + b, zeros({d}));
    }
    register_param(p + "ln2.g", ones({d}));
    register_param(p + "ln2.b", zeros({d}));
    register_param(p + "ffn.w1", weight({d, ffn}));
    register_param(p + "ffn.b1", zeros({ffn}));
    register_param(p + "ffn.w2", weight({ffn, d}));
    register_param(p + "ffn.b2", zeros({d}));
  }
  register_param("mlm_head.w1", weight({d, d}));
  register_param("mlm_head.b1", zeros({d}));
  register_param("mlm_head.ln.g", ones({d}));
  register_param("mlm_head.ln.b", zeros({d}));
  if (!config.tie_mlm_output) {
    register_param("mlm_head.w2", weight({d, config.vocab_size}));
  }
  register_param("mlm_head.b2", zeros({config.vocab_size}));

  if (config.baseline_heads) {
    auto head = [&](const std::string& prefix, size_t out) {
      register_param(prefix + "w1", weight({d, d}));
      register_param(prefix + "b1", zeros({d}));
      register_param(prefix + "ln.g", ones({d}));
      register_param(prefix + "ln.b", zeros({d}));
      register_param(prefix + "w2", weight({d, out}));
      register_param(prefix + "b2", zeros({out}));
    };
    head("ts_head.vtm.", 1);
    head("ts_head.mc.", config.mc_choices);
    head("ts_head.oe.", config.oe_answers);
  }
}

void Model::register_param(const std::string& name, Tensor t) {
  index_.emplace(name, params_.size());
  params_.emplace_back(name, std::move(t));
}

Tensor Model::param(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second].second;
}

void Model::zero_grads() const {
  for (const auto& [name, t] : params_) t.zero_grad();
}

Model Model::clone() const {
  Model out;
  out.config_ = config_;
  out.step_ = step_;
  out.index_ = index_;
  out.params_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    out.params_.emplace_back(name, t.clone(true));
  }
  return out;
}

void Model::copy_values_from(const Model& other) {
  if (other.params_.size() != params_.size()) {
    throw ConfigError("model structures differ; cannot copy values");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other.params_[i].second;
    auto& dst = params_[i].second;
    if (params_[i].first != other.params_[i].first ||
        src.shape() != dst.shape()) {
      throw ConfigError("parameter mismatch at " + params_[i].first);
    }
    std::copy(src.values().begin(), src.values().end(), dst.values().begin());
  }
  step_ = other.step_;
}

Tensor Model::embed_video(Tape* tape, const PatchGrid& grid) const {
  VisionParams p{param("backbone.vision.proj_w"),
                 param("backbone.vision.proj_b"),
                 param("backbone.vision.spatial_pos"),
                 param("backbone.vision.temporal_pos")};
  return embed_patches(tape, grid, p);
}

Tensor Model::embed_text(Tape* tape, const TokenSeq& text) const {
  if (text.real_count > config_.max_text_len) {
    throw InputError("text length " + std::to_string(text.real_count) +
                     " exceeds max_text_len " +
                     std::to_string(config_.max_text_len));
  }
  Tensor emb = embedding(tape, param("backbone.token_emb"), text.ids);
  std::vector<size_t> positions(text.ids.size());
  for (size_t i = 0; i < positions.size(); ++i) {
    // pads reuse position 0; they are attention-excluded anyway
    positions[i] = i < text.real_count ? i : 0;
  }
  return add(tape, emb,
             gather_rows(tape, param("backbone.text_pos"), positions));
}

Tensor Model::encode(Tape* tape, const Tensor& video_feats,
                     const TokenSeq& text, AttentionMode mode) const {
  if (video_feats.cols() != config_.d) {
    throw DimensionError("video feature width " +
                         std::to_string(video_feats.cols()) +
                         " does not match fusion width " +
                         std::to_string(config_.d));
  }
  const size_t video_len = video_feats.rows();
  const size_t text_len = text.ids.size();
  std::vector<uint8_t> pad(text_len, 0);
  for (size_t i = 0; i < text_len; ++i) pad[i] = text.is_pad(i) ? 1 : 0;
  const AttentionMask mask =
      build_attention_matrix(video_len, text_len, pad, mode);

  Tensor x;
  {
    Tensor text_emb = embed_text(tape, text);
    std::vector<Tensor> both{video_feats, text_emb};
    x = concat_rows(tape, both);
  }

  const size_t d = config_.d;
  const size_t heads = config_.heads;
  const size_t hd = d / heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  for (size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "backbone.layer" + std::to_string(l) + ".";
    Tensor h = layer_norm(tape, x, param(p + "ln1.g"), param(p + "ln1.b"),
                          config_.ln_eps);
    Tensor q = add(tape, matmul(tape, h, param(p + "attn.wq")),
                   param(p + "attn.bq"));
    Tensor k = add(tape, matmul(tape, h, param(p + "attn.wk")),
                   param(p + "attn.bk"));
    Tensor v = add(tape, matmul(tape, h, param(p + "attn.wv")),
                   param(p + "attn.bv"));
    std::vector<Tensor> ctx_heads;
    ctx_heads.reserve(heads);
    for (size_t hi = 0; hi < heads; ++hi) {
      Tensor qh = slice_cols(tape, q, hi * hd, (hi + 1) * hd);
      Tensor kh = slice_cols(tape, k, hi * hd, (hi + 1) * hd);
      Tensor vh = slice_cols(tape, v, hi * hd, (hi + 1) * hd);
      Tensor scores = scale(tape, matmul_bt(tape, qh, kh), inv_sqrt_hd);
      Tensor attn = masked_softmax_rows(tape, scores, mask.allow);
      ctx_heads.push_back(matmul(tape, attn, vh));
    }
    Tensor ctx = concat_cols(tape, ctx_heads);
    Tensor attn_out = add(tape, matmul(tape, ctx, param(p + "attn.wo")),
                          param(p + "attn.bo"));
    x = add(tape, x, attn_out);

    Tensor g = layer_norm(tape, x, param(p + "ln2.g"), param(p + "ln2.b"),
                          config_.ln_eps);
    Tensor f1 = gelu(tape, add(tape, matmul(tape, g, param(p + "ffn.w1")),
                               param(p + "ffn.b1")));
    Tensor f2 = add(tape, matmul(tape, f1, param(p + "ffn.w2")),
                    param(p + "ffn.b2"));
    x = add(tape, x, f2);
  }
  return x;
}

Tensor Model::head_mlp(Tape* tape, const Tensor& input,
                       const std::string& prefix, const Tensor& out_w,
                       const Tensor& out_b) const {
  Tensor h = gelu(tape, add(tape, matmul(tape, input, param(prefix + "w1")),
                            param(prefix + "b1")));
  Tensor n = layer_norm(tape, h, param(prefix + "ln.g"),
                        param(prefix + "ln.b"), config_.ln_eps);
  return add(tape, matmul(tape, n, out_w), out_b);
}

Tensor Model::mlm_head(Tape* tape, const Tensor& hidden) const {
  if (hidden.cols() != config_.d) {
    throw DimensionError("mlm_head expects width d");
  }
  if (config_.tie_mlm_output) {
    Tensor h =
        gelu(tape, add(tape, matmul(tape, hidden, param("mlm_head.w1")),
                       param("mlm_head.b1")));
    Tensor n = layer_norm(tape, h, param("mlm_head.ln.g"),
                          param("mlm_head.ln.b"), config_.ln_eps);
    return add(tape, matmul_bt(tape, n, param("backbone.token_emb")),
               param("mlm_head.b2"));
  }
  return head_mlp(tape, hidden, "mlm_head.", param("mlm_head.w2"),
                  param("mlm_head.b2"));
}

Tensor Model::baseline_head(Tape* tape, const Tensor& cls_row,
                            BaselineHeadKind kind) const {
  if (!config_.baseline_heads) {
    throw ConfigError("baseline heads are disabled in this model");
  }
  const char* prefix = kind == BaselineHeadKind::kVtmBinary ? "ts_head.vtm."
                       : kind == BaselineHeadKind::kMcClassifier
                           ? "ts_head.mc."
                           : "ts_head.oe.";
  return head_mlp(tape, cls_row, prefix, param(std::string(prefix) + "w2"),
                  param(std::string(prefix) + "b2"));
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint: " + path);
  out.write("LVCK1", 5);
  const std::string cfg = config_.to_json();
  write_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_u64(out, step_);
  write_u32(out, static_cast<uint32_t>(params_.size()));
  for (const auto& [name, t] : params_) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(t.rank()));
    for (const size_t e : t.shape()) write_u64(out, e);
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw InputError("short write to checkpoint: " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read checkpoint: " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "LVCK1", 5) != 0) {
    throw InputError("bad checkpoint magic in " + path);
  }
  const uint64_t cfg_len = read_u64(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  Model model(ModelConfig::from_json(cfg));
  model.step_ = read_u64(in);
  const uint32_t count = read_u32(in);
  if (count != model.params_.size()) {
    throw InputError("checkpoint parameter count mismatch");
  }
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t rank = read_u32(in);
    std::vector<size_t> shape(rank);
    for (auto& e : shape) e = read_u64(in);
    Tensor t = model.param(name);  // throws on unknown name
    if (t.shape() != shape) {
      throw InputError("checkpoint shape mismatch for " + name);
    }
    in.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!in) throw InputError("truncated checkpoint: " + path);
  return model;
}

ParamCountReport param_count(const Model& model) {
  ParamCountReport report;
  for (const auto& [name, t] : model.parameters()) {
    report.total += t.numel();
    if (name.rfind("backbone.", 0) == 0) {
      report.backbone += t.numel();
    } else if (name.rfind("mlm_head.", 0) == 0) {
      report.mlm_head += t.numel();
    } else if (name.rfind("ts_head.", 0) == 0) {
      const std::string head = name.substr(8, name.find('.', 8) - 8);
      report.baseline_heads[head] += t.numel();
    }
  }
  return report;
}

}  // namespace lavender
