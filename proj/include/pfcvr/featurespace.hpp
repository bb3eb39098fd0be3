#pragma once

#include <vector>

#include "pfcvr/config.hpp"
#include "pfcvr/nn.hpp"
#include "pfcvr/tokenizer.hpp"

namespace pfcvr {

// Interleaved RGB raster, values in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_ * 3, 0.0) {}

    double& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    double at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

// Square patches in raster order; each row is one patch, pixels in raster
// order with channels interleaved.
inline Mat patchify(const Image& img, int patch_size) {
    check(patch_size > 0 && img.h % patch_size == 0 && img.w % patch_size == 0,
          "patchify: image not divisible into patches");
    int rows = img.h / patch_size, cols = img.w / patch_size;
    Mat out(rows * cols, patch_size * patch_size * 3);
    for (int pr = 0; pr < rows; ++pr)
        for (int pc = 0; pc < cols; ++pc) {
            double* dst = out.row_ptr(pr * cols + pc);
            for (int y = 0; y < patch_size; ++y)
                for (int x = 0; x < patch_size; ++x)
                    for (int c = 0; c < 3; ++c)
                        *dst++ = img.at(pr * patch_size + y, pc * patch_size + x, c);
        }
    return out;
}

// Per-part patch membership, row k = patch mask of part k.
struct PartMask {
    int parts = 0;
    int patches = 0;
    std::vector<uint8_t> bits;

    PartMask() = default;
    PartMask(int parts_, int patches_)
        : parts(parts_), patches(patches_), bits(static_cast<size_t>(parts_) * patches_, 0) {}

    uint8_t& at(int k, int p) { return bits[static_cast<size_t>(k) * patches + p]; }
    uint8_t at(int k, int p) const { return bits[static_cast<size_t>(k) * patches + p]; }

    int count(int k) const {
        int n = 0;
        for (int p = 0; p < patches; ++p) n += at(k, p);
        return n;
    }
};

// ViT-style encoder: linear patch embedding, learned [CLS] and positions,
// pre-norm blocks, final LayerNorm. Row 0 of the output is the pooled token.
class VisionEncoder {
  public:
    VisionEncoder(const ModelConfig& cfg, Rng& rng)
        : cfg_(cfg),
          patch_embed("vis.patch_embed", cfg.patch_dim(), cfg.embed_dim, rng, 0),
          cls("vis.cls", random_normal_mat(rng, 1, cfg.embed_dim, nn::kInitStd), 0),
          pos("vis.pos",
              random_normal_mat(rng, 1 + cfg.visual_tokens(), cfg.embed_dim, nn::kInitStd), 0),
          mask_embed("vis.mask_embed", random_normal_mat(rng, 1, cfg.embed_dim, nn::kInitStd), 1),
          final_ln("vis.final_ln", cfg.embed_dim, 0) {
        for (int i = 0; i < cfg.num_encoder_layers; ++i)
            blocks.emplace_back("vis.block" + std::to_string(i), cfg.embed_dim, cfg.num_heads,
                                cfg.ffn_hidden(), rng, 0);
    }

    // masked_patches: patch indices (0-based, CLS excluded) whose embeddings
    // are replaced by the learned mask row before position encoding.
    ag::Var encode(ag::Tape& t, const Image& img, const std::vector<int>& masked_patches = {}) {
        check(img.h == cfg_.image_size && img.w == cfg_.image_size,
              "vision encoder: image size mismatch");
        ag::Var x = patch_embed(t, t.constant(patchify(img, cfg_.patch_size)));
        if (!masked_patches.empty()) {
            std::vector<int> zeros(masked_patches.size(), 0);
            ag::Var rep = ag::gather_rows(t.param(mask_embed), zeros);
            x = ag::replace_rows(x, masked_patches, rep);
        }
        x = ag::concat_rows({t.param(cls), x});
        x = ag::add(x, t.param(pos));
        for (auto& blk : blocks) x = blk(t, x);
        return final_ln(t, x);
    }

    void collect(std::vector<Param*>& out) {
        patch_embed.collect(out);
        out.push_back(&cls);
        out.push_back(&pos);
        out.push_back(&mask_embed);
        for (auto& blk : blocks) blk.collect(out);
        final_ln.collect(out);
    }

    const ModelConfig& config() const { return cfg_; }

    ModelConfig cfg_;
    nn::Linear patch_embed;
    Param cls, pos, mask_embed;
    std::vector<nn::EncoderBlock> blocks;
    nn::LayerNorm final_ln;
};

// Token + position embeddings, pre-norm blocks, final LayerNorm. The pooled
// representation is the row at the sequence's [EOS] position.
class TextEncoder {
  public:
    TextEncoder(const ModelConfig& cfg, Rng& rng)
        : cfg_(cfg),
          tok_embed("txt.tok_embed",
                    random_normal_mat(rng, cfg.vocab_size, cfg.embed_dim, nn::kInitStd), 0),
          pos_embed("txt.pos_embed",
                    random_normal_mat(rng, cfg.max_text_len, cfg.embed_dim, nn::kInitStd), 0),
          final_ln("txt.final_ln", cfg.embed_dim, 0) {
        for (int i = 0; i < cfg.num_encoder_layers; ++i)
            blocks.emplace_back("txt.block" + std::to_string(i), cfg.embed_dim, cfg.num_heads,
                                cfg.ffn_hidden(), rng, 0);
    }

    // masked_positions substitute [MASK] before embedding lookup.
    ag::Var encode(ag::Tape& t, const TokenSeq& seq,
                   const std::vector<int>& masked_positions = {}) {
        check(static_cast<int>(seq.ids.size()) == cfg_.max_text_len,
              "text encoder: sequence length mismatch");
        std::vector<int> ids = seq.ids;
        for (int p : masked_positions) {
            check(p >= 0 && p < cfg_.max_text_len, "text encoder: masked position out of range");
            ids[static_cast<size_t>(p)] = kMaskId;
        }
        for (int id : ids)
            check(id >= 0 && id < cfg_.vocab_size, "text encoder: token id outside vocab");
        ag::Var x = ag::gather_rows(t.param(tok_embed), ids);
        x = ag::add(x, t.param(pos_embed));
        for (auto& blk : blocks) x = blk(t, x);
        return final_ln(t, x);
    }

    void collect(std::vector<Param*>& out) {
        out.push_back(&tok_embed);
        out.push_back(&pos_embed);
        for (auto& blk : blocks) blk.collect(out);
        final_ln.collect(out);
    }

    ModelConfig cfg_;
    Param tok_embed, pos_embed;
    std::vector<nn::EncoderBlock> blocks;
    nn::LayerNorm final_ln;
};

// Mean-pools patch tokens (CLS row excluded) under each part's mask.
// Parts with empty masks yield a zero row; `present` reports which rows are real.
inline ag::Var pool_part_features(ag::Tape& t, ag::Var image_tokens, const PartMask& mask,
                                  std::vector<bool>* present = nullptr) {
    check(image_tokens->val.rows == mask.patches + 1,
          "pool_part_features: token count does not match mask patches");
    Mat pool(mask.parts, image_tokens->val.rows);
    if (present) present->assign(static_cast<size_t>(mask.parts), false);
    for (int k = 0; k < mask.parts; ++k) {
        int n = mask.count(k);
        if (n == 0) continue;
        if (present) (*present)[static_cast<size_t>(k)] = true;
        for (int p = 0; p < mask.patches; ++p)
            if (mask.at(k, p)) pool(k, p + 1) = 1.0 / n;
    }
    return ag::matmul(t.constant(pool), image_tokens);
}

}  // namespace pfcvr
