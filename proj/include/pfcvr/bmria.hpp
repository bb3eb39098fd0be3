#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pfcvr/config.hpp"
#include "pfcvr/featurespace.hpp"
#include "pfcvr/nn.hpp"
#include "pfcvr/rng.hpp"
#include "pfcvr/tokenizer.hpp"

namespace pfcvr {

// Which token positions and image patches get masked for one sample. Fully
// determined by (seed, sequence, config), so a plan can be replayed.
struct MaskPlan {
    uint64_t seed = 0;
    std::vector<int> text_positions;  // ascending, indices into the token sequence
    std::vector<int> image_patches;   // ascending, patch indices (CLS excluded)
};

// Rounds half away from zero via llround. Specials are never candidates.
inline MaskPlan make_mask_plan(const ModelConfig& cfg, const TokenSeq& seq, uint64_t seed) {
    MaskPlan plan;
    plan.seed = seed;
    Rng rng(seed);

    std::vector<int> candidates = Tokenizer::maskable_positions(seq);
    int n_text = static_cast<int>(
        std::llround(cfg.text_mask_ratio * static_cast<double>(candidates.size())));
    auto pick_t = rng.sample_without_replacement(static_cast<int>(candidates.size()), n_text);
    plan.text_positions.reserve(pick_t.size());
    for (int i : pick_t) plan.text_positions.push_back(candidates[static_cast<size_t>(i)]);
    std::sort(plan.text_positions.begin(), plan.text_positions.end());

    int n_img = static_cast<int>(
        std::llround(cfg.image_mask_ratio * static_cast<double>(cfg.visual_tokens())));
    plan.image_patches = rng.sample_without_replacement(cfg.visual_tokens(), n_img);
    std::sort(plan.image_patches.begin(), plan.image_patches.end());
    return plan;
}

// Text recovery head: one cross-attention decoder pass of the masked text
// sequence over the intact image tokens, then vocabulary logits at the
// masked positions.
class TextRecoverer {
  public:
    TextRecoverer(const ModelConfig& cfg, Rng& rng)
        : block("mlm.block", cfg.embed_dim, cfg.num_heads, cfg.ffn_hidden(), rng, 1),
          final_ln("mlm.final_ln", cfg.embed_dim, 1),
          head("mlm.head", cfg.embed_dim, cfg.vocab_size, rng, 1) {}

    // Returns |positions| x vocab logits.
    ag::Var recover(ag::Tape& t, ag::Var masked_text_tokens, ag::Var image_tokens,
                    const std::vector<int>& positions) {
        ag::Var x = block(t, masked_text_tokens, image_tokens);
        x = final_ln(t, x);
        return head(t, ag::gather_rows(x, positions));
    }

    void collect(std::vector<Param*>& out) {
        block.collect(out);
        final_ln.collect(out);
        head.collect(out);
    }

    nn::CrossDecoderBlock block;
    nn::LayerNorm final_ln;
    nn::Linear head;
};

// Image recovery head: a stack of cross-attention decoder passes of the
// masked image sequence over the intact text tokens, then raw pixel values
// for each masked patch.
class ImageRecoverer {
  public:
    ImageRecoverer(const ModelConfig& cfg, Rng& rng)
        : final_ln("mim.final_ln", cfg.embed_dim, 1),
          head("mim.head", cfg.embed_dim, cfg.patch_dim(), rng, 1) {
        for (int i = 0; i < cfg.num_mim_decoder_layers; ++i)
            blocks.emplace_back("mim.block" + std::to_string(i), cfg.embed_dim, cfg.num_heads,
                                cfg.ffn_hidden(), rng, 1);
    }

    // patches are patch indices; row 0 of masked_image_tokens is CLS, so the
    // gathered token rows sit at patch index + 1.
    ag::Var recover(ag::Tape& t, ag::Var masked_image_tokens, ag::Var text_tokens,
                    const std::vector<int>& patches) {
        ag::Var x = masked_image_tokens;
        for (auto& blk : blocks) x = blk(t, x, text_tokens);
        x = final_ln(t, x);
        std::vector<int> rows;
        rows.reserve(patches.size());
        for (int p : patches) rows.push_back(p + 1);
        return head(t, ag::gather_rows(x, rows));
    }

    void collect(std::vector<Param*>& out) {
        for (auto& blk : blocks) blk.collect(out);
        final_ln.collect(out);
        head.collect(out);
    }

    std::vector<nn::CrossDecoderBlock> blocks;
    nn::LayerNorm final_ln;
    nn::Linear head;
};

// Ground-truth pixel rows for the masked patches of an image.
inline Mat masked_patch_targets(const Image& img, int patch_size,
                                const std::vector<int>& patches) {
    Mat all = patchify(img, patch_size);
    Mat out(static_cast<int>(patches.size()), all.cols);
    for (size_t i = 0; i < patches.size(); ++i) {
        check(patches[i] >= 0 && patches[i] < all.rows, "masked_patch_targets: patch out of range");
        std::copy(all.row_ptr(patches[i]), all.row_ptr(patches[i]) + all.cols,
                  out.row_ptr(static_cast<int>(i)));
    }
    return out;
}

}  // namespace pfcvr
