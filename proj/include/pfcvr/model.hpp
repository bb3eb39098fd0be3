#pragma once

#include <string>
#include <vector>

#include "pfcvr/bmria.hpp"
#include "pfcvr/config.hpp"
#include "pfcvr/featurespace.hpp"
#include "pfcvr/losses.hpp"
#include "pfcvr/plfa.hpp"

namespace pfcvr {

// Everything forward_batch needs for one sample, already tokenized and with
// the mask plan drawn.
struct ModelSample {
    TokenSeq caption;
    std::vector<TokenSeq> part_texts;  // one per part category
    Image image;
    PartMask parts;  // patch-level, num_parts x L_v
    int label = 0;   // contiguous class index
    MaskPlan plan;
};

struct ForwardOutcome {
    LossTerms terms;
    LossFlags flags;
    ag::Var total = nullptr;
    double id_value = 0.0, sdm_value = 0.0, itc_value = 0.0, biirr_value = 0.0,
           total_value = 0.0;
};

// The retrieval model: dual encoders, part-query alignment, both masked
// reconstruction heads, the shared identity classifier, and the temperature.
// Disabled modules still construct (uniform checkpoints); the enable flags
// only gate their loss terms.
class PfcvrModel {
  public:
    PfcvrModel(const ModelConfig& cfg, int num_classes, uint64_t seed, bool enable_plfa = true,
               bool enable_bmria = true)
        : cfg_(cfg), num_classes_(num_classes), enable_plfa_(enable_plfa),
          enable_bmria_(enable_bmria), rng_(mix_seed(seed, 0x6d6f64656cull)),
          vis(cfg, rng_), txt(cfg, rng_), plfa(cfg, rng_), mlm(cfg, rng_), mim(cfg, rng_),
          classifier("id.head", cfg.embed_dim, num_classes, rng_, 1, /*bias=*/false),
          log_tau("tau.log", Mat::scalar(std::log(cfg.temperature)), 1) {
        check(num_classes >= 1, "model: need at least one identity class");
        cfg.validate();
    }

    const ModelConfig& config() const { return cfg_; }
    int num_classes() const { return num_classes_; }
    bool plfa_enabled() const { return enable_plfa_; }
    bool bmria_enabled() const { return enable_bmria_; }

    std::vector<Param*> parameters() {
        std::vector<Param*> out;
        vis.collect(out);
        txt.collect(out);
        plfa.collect(out);
        mlm.collect(out);
        mim.collect(out);
        classifier.collect(out);
        if (cfg_.learnable_temperature) out.push_back(&log_tau);
        return out;
    }

    // 1/tau as a graph node; learnable when configured, else a constant.
    ag::Var inv_tau(ag::Tape& t) {
        if (cfg_.learnable_temperature)
            return ag::exp(ag::scale(t.param(log_tau), -1.0));
        return t.scalar(1.0 / cfg_.temperature);
    }

    ag::Var itc_inv_tau(ag::Tape& t) {
        if (cfg_.itc_temperature > 0.0) return t.scalar(1.0 / cfg_.itc_temperature);
        return inv_tau(t);
    }

    double current_tau() const {
        return cfg_.learnable_temperature ? std::exp(log_tau.value(0, 0)) : cfg_.temperature;
    }

    // Pooled embeddings for retrieval: image = CLS token, text = EOS token.
    ag::Var encode_image_pooled(ag::Tape& t, const Image& img) {
        return ag::slice_rows(vis.encode(t, img), 0, 1);
    }
    ag::Var encode_text_pooled(ag::Tape& t, const TokenSeq& seq) {
        ag::Var tokens = txt.encode(t, seq);
        return ag::slice_rows(tokens, seq.eos_pos, seq.eos_pos + 1);
    }

    ForwardOutcome forward_batch(ag::Tape& t, const std::vector<ModelSample>& batch) {
        const int n = static_cast<int>(batch.size());
        check(n >= 1, "forward_batch: empty batch");
        std::vector<int> labels;
        labels.reserve(batch.size());
        for (const auto& s : batch) {
            check(s.label >= 0 && s.label < num_classes_, "forward_batch: label out of range");
            labels.push_back(s.label);
        }

        std::vector<ag::Var> img_pooled, txt_pooled;
        std::vector<ag::Var> itc_parts, itc_queries;
        std::vector<ag::Var> mlm_logit_chunks, mim_pred_chunks;
        std::vector<int> mlm_targets;
        std::vector<Mat> mim_target_chunks;

        for (const auto& s : batch) {
            ag::Var img_tokens = vis.encode(t, s.image);
            ag::Var txt_tokens = txt.encode(t, s.caption);
            img_pooled.push_back(ag::slice_rows(img_tokens, 0, 1));
            txt_pooled.push_back(
                ag::slice_rows(txt_tokens, s.caption.eos_pos, s.caption.eos_pos + 1));

            if (enable_plfa_) {
                check(static_cast<int>(s.part_texts.size()) == cfg_.num_parts,
                      "forward_batch: wrong part text count");
                std::vector<ag::Var> part_text_rows;
                for (const TokenSeq& pt : s.part_texts) {
                    ag::Var pt_tokens = txt.encode(t, pt);
                    part_text_rows.push_back(
                        ag::slice_rows(pt_tokens, pt.eos_pos, pt.eos_pos + 1));
                }
                part_text_rows.push_back(txt_tokens);
                ag::Var guide = ag::concat_rows(part_text_rows);
                ag::Var updated = plfa.update_queries(t, guide);
                std::vector<bool> present;
                ag::Var part_feats = pool_part_features(t, img_tokens, s.parts, &present);
                for (int k = 0; k < cfg_.num_parts; ++k) {
                    if (!present[static_cast<size_t>(k)]) continue;
                    itc_parts.push_back(ag::slice_rows(part_feats, k, k + 1));
                    itc_queries.push_back(ag::slice_rows(updated, k, k + 1));
                }
            }

            if (enable_bmria_) {
                if (!s.plan.text_positions.empty()) {
                    ag::Var masked_txt = txt.encode(t, s.caption, s.plan.text_positions);
                    ag::Var logits = mlm.recover(t, masked_txt, img_tokens,
                                                 s.plan.text_positions);
                    mlm_logit_chunks.push_back(logits);
                    for (int p : s.plan.text_positions)
                        mlm_targets.push_back(s.caption.ids[static_cast<size_t>(p)]);
                }
                if (!s.plan.image_patches.empty()) {
                    ag::Var masked_img = vis.encode(t, s.image, s.plan.image_patches);
                    mim_pred_chunks.push_back(
                        mim.recover(t, masked_img, txt_tokens, s.plan.image_patches));
                    mim_target_chunks.push_back(
                        masked_patch_targets(s.image, cfg_.patch_size, s.plan.image_patches));
                }
            }
        }

        ForwardOutcome out;
        ag::Var img_feats = ag::concat_rows(img_pooled);
        ag::Var txt_feats = ag::concat_rows(txt_pooled);
        ag::Var shared_inv_tau = inv_tau(t);

        out.terms.id = id_loss(
            t, {classifier(t, img_feats), classifier(t, txt_feats)}, labels);
        out.terms.sdm = sdm_loss(t, img_feats, txt_feats, labels, shared_inv_tau);

        if (enable_plfa_) {
            if (itc_parts.empty()) {
                out.flags.itc_degenerate = true;
                out.terms.itc = t.scalar(0.0);
            } else {
                out.terms.itc = itc_loss(t, ag::concat_rows(itc_parts),
                                         ag::concat_rows(itc_queries), itc_inv_tau(t),
                                         &out.flags);
            }
        }

        if (enable_bmria_) {
            ag::Var mlm_logits =
                mlm_logit_chunks.empty() ? nullptr : ag::concat_rows(mlm_logit_chunks);
            ag::Var mim_pred =
                mim_pred_chunks.empty() ? nullptr : ag::concat_rows(mim_pred_chunks);
            Mat mim_target;
            if (!mim_target_chunks.empty()) {
                int rows = 0;
                for (const Mat& m : mim_target_chunks) rows += m.rows;
                mim_target = Mat(rows, mim_target_chunks[0].cols);
                int off = 0;
                for (const Mat& m : mim_target_chunks) {
                    std::copy(m.data.begin(), m.data.end(), mim_target.row_ptr(off));
                    off += m.rows;
                }
            }
            out.terms.biirr =
                bmria_loss(t, mlm_logits, mlm_targets, mim_pred, mim_target, &out.flags);
        }

        LossWeights w{cfg_.alpha, cfg_.beta, cfg_.gamma, cfg_.delta};
        out.total = total_loss(t, out.terms, w);
        out.id_value = out.terms.id->val(0, 0);
        out.sdm_value = out.terms.sdm->val(0, 0);
        out.itc_value = out.terms.itc ? out.terms.itc->val(0, 0) : 0.0;
        out.biirr_value = out.terms.biirr ? out.terms.biirr->val(0, 0) : 0.0;
        out.total_value = out.total->val(0, 0);
        return out;
    }

    ModelConfig cfg_;
    int num_classes_;
    bool enable_plfa_;
    bool enable_bmria_;
    Rng rng_;
    VisionEncoder vis;
    TextEncoder txt;
    PlfaModule plfa;
    TextRecoverer mlm;
    ImageRecoverer mim;
    nn::Linear classifier;
    Param log_tau;
};

}  // namespace pfcvr
