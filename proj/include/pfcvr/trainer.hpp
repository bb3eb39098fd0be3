#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pfcvr/checkpoint.hpp"
#include "pfcvr/datagen.hpp"
#include "pfcvr/model.hpp"
#include "pfcvr/optim.hpp"

namespace pfcvr {

inline const Tokenizer& shared_tokenizer() {
    static const Tokenizer tok;
    return tok;
}

struct PreparedDataset {
    std::vector<ModelSample> samples;
    std::vector<int> identities;                 // original identity per sample
    std::vector<std::pair<int, int>> label_map;  // identity -> contiguous class
    int num_classes = 0;
    int truncated_captions = 0;
};

// Loads one split into memory: images, tokenized captions, per-part texts
// (recovered from the caption), and patch-level part masks. Sample labels are
// contiguous class indices over the split's identities. With `augment`, each
// record is followed by its three derived copies, built in memory.
inline PreparedDataset prepare_dataset(const std::string& manifest_path, const ModelConfig& cfg,
                                       const std::string& split, bool with_part_texts = true,
                                       bool augment = false, uint64_t augment_seed = 0) {
    const Tokenizer& tok = shared_tokenizer();
    check(tok.vocab_size() <= cfg.vocab_size,
          "prepare_dataset: config vocab_size smaller than tokenizer vocabulary (" +
              std::to_string(tok.vocab_size()) + ")");
    auto all = load_manifest(manifest_path);
    std::vector<SampleRecord> records;
    for (auto& r : all)
        if (r.split == split) records.push_back(std::move(r));
    check(!records.empty(), "prepare_dataset: no '" + split + "' records in " + manifest_path);

    PreparedDataset out;
    std::map<int, int> classes;
    for (const auto& r : records) classes.emplace(r.identity, 0);
    int next = 0;
    for (auto& [identity, cls] : classes) {
        cls = next++;
        out.label_map.emplace_back(identity, cls);
    }
    out.num_classes = next;

    auto push_sample = [&](const SampleRecord& rec, Image img) {
        ModelSample s;
        s.caption = tok.encode(rec.caption, cfg.max_text_len);
        if (s.caption.truncated) ++out.truncated_captions;
        if (with_part_texts) {
            SyntheticVehicleSpec spec = parse_caption(rec.caption);
            for (int k = 0; k < kNumParts; ++k)
                s.part_texts.push_back(tok.encode(part_text(spec, k), cfg.max_text_len));
        }
        check(img.h == cfg.image_size && img.w == cfg.image_size,
              "prepare_dataset: image size mismatch for " + rec.image_path);
        s.image = std::move(img);
        s.parts = record_part_mask(rec, cfg.image_size, cfg.patch_size);
        s.label = classes.at(rec.identity);
        out.samples.push_back(std::move(s));
        out.identities.push_back(rec.identity);
    };

    for (size_t i = 0; i < records.size(); ++i) {
        const SampleRecord& rec = records[i];
        Image img = read_ppm(resolve_image_path(manifest_path, rec));
        if (augment && split == "train") {
            AugmentOptions aug;
            uint64_t seed = mix_seed(mix_seed(augment_seed, 0x617567ull), static_cast<uint64_t>(i));
            push_sample(rec, img);
            push_sample(rec, apply_gamma(img, aug.gamma_bright));
            push_sample(rec, apply_gamma(img, aug.gamma_dark));
            push_sample(rec, apply_noise(img, aug.noise_sigma, seed));
        } else {
            push_sample(rec, std::move(img));
        }
    }
    if (out.truncated_captions > 0)
        std::fprintf(stderr, "warning: %d captions truncated to %d tokens\n",
                     out.truncated_captions, cfg.max_text_len);
    return out;
}

// Identity-balanced batches: P distinct classes, M instances each. Classes
// with fewer than M samples repeat instances (drawn with replacement).
class PKBatchSampler {
  public:
    PKBatchSampler(const std::vector<int>& labels, int p, int m, uint64_t seed)
        : p_(p), m_(m), rng_(seed) {
        check(p >= 2, "PKBatchSampler: need at least 2 identities per batch");
        check(m >= 1, "PKBatchSampler: need at least 1 instance per identity");
        std::map<int, std::vector<int>> groups;
        for (size_t i = 0; i < labels.size(); ++i)
            groups[labels[i]].push_back(static_cast<int>(i));
        for (auto& [cls, idx] : groups) by_class_.push_back(std::move(idx));
        check(by_class_.size() >= 2, "PKBatchSampler: dataset has fewer than 2 identities");
    }

    std::vector<int> next() {
        int classes = static_cast<int>(by_class_.size());
        int take = std::min(p_, classes);
        std::vector<int> chosen = rng_.sample_without_replacement(classes, take);
        std::vector<int> batch;
        batch.reserve(static_cast<size_t>(take) * m_);
        for (int c : chosen) {
            const std::vector<int>& pool = by_class_[static_cast<size_t>(c)];
            int n = static_cast<int>(pool.size());
            if (n >= m_) {
                for (int i : rng_.sample_without_replacement(n, m_))
                    batch.push_back(pool[static_cast<size_t>(i)]);
            } else {
                for (int j = 0; j < m_; ++j)
                    batch.push_back(pool[static_cast<size_t>(rng_.uniform_int(n))]);
            }
        }
        return batch;
    }

  private:
    int p_, m_;
    Rng rng_;
    std::vector<std::vector<int>> by_class_;
};

struct TrainOptions {
    int overfit_steps = 0;  // >0 switches to single-batch overfitting at constant lr
    int overfit_batch = 4;
    std::string resume_from;
    bool write_checkpoints = true;
    bool echo_progress = false;
};

struct TrainOutcome {
    std::vector<double> total_trace;  // per-step total loss
    std::string final_checkpoint;
    std::string log_path;
    long long steps = 0;
};

// Single-threaded training driver. All randomness (init, batches, masks)
// derives from the run seed, so a fixed seed reproduces the loss trace
// bitwise and resuming from a checkpoint continues it exactly.
class Trainer {
  public:
    explicit Trainer(const RunConfig& rc) : rc_(rc) { rc_.validate(); }

    TrainOutcome run(const TrainOptions& opts = {}) {
        namespace fs = std::filesystem;
        check(!rc_.manifest.empty(), "train: manifest path required");
        check(!rc_.output_dir.empty(), "train: output_dir required");
        fs::create_directories(rc_.output_dir);

        data_ = prepare_dataset(rc_.manifest, rc_.model, "train", /*with_part_texts=*/true,
                                rc_.augment, rc_.seed);
        model_ = std::make_unique<PfcvrModel>(rc_.model, data_.num_classes, rc_.seed,
                                              rc_.enable_plfa, rc_.enable_bmria);
        auto params = model_->parameters();

        long long global_step = 0;
        int start_epoch = 0;
        if (!opts.resume_from.empty()) {
            LoadedCheckpoint ck = load_checkpoint(opts.resume_from);
            check(ck.meta.config_hash == rc_.config_hash(),
                  "train: checkpoint config hash mismatch (" + ck.meta.config_hash + " vs " +
                      rc_.config_hash() + ")");
            ck.apply_to(params);
            start_epoch = static_cast<int>(ck.meta.epoch) + 1;
            global_step = ck.meta.global_step;
        }

        TrainOutcome out;
        out.log_path = (fs::path(rc_.output_dir) / "train_log.jsonl").string();
        std::ofstream log(out.log_path,
                          opts.resume_from.empty() ? std::ios::trunc : std::ios::app);
        check(log.good(), "train: cannot open log " + out.log_path);

        Adam adam;
        uint64_t mask_root = mix_seed(rc_.seed, 0x6d61736bull);
        uint64_t epoch_root = mix_seed(rc_.seed, 0x65706f6368ull);

        auto run_step = [&](const std::vector<int>& batch_idx, int epoch,
                            const std::array<double, 2>& lrs) {
            std::vector<ModelSample> batch;
            batch.reserve(batch_idx.size());
            for (size_t slot = 0; slot < batch_idx.size(); ++slot) {
                ModelSample s = data_.samples[static_cast<size_t>(batch_idx[slot])];
                if (rc_.enable_bmria) {
                    uint64_t ps = mix_seed(mask_root,
                                           static_cast<uint64_t>(global_step) * 4096 + slot);
                    s.plan = make_mask_plan(rc_.model, s.caption, ps);
                }
                batch.push_back(std::move(s));
            }
            ag::Tape tape;
            ForwardOutcome fo = model_->forward_batch(tape, batch);
            tape.backward(fo.total);
            adam.step(tape, lrs);
            char line[512];
            snprintf(line, sizeof(line),
                     "{\"step\":%lld,\"epoch\":%d,\"lr_backbone\":%.17g,\"lr_modules\":%.17g,"
                     "\"id\":%.17g,\"sdm\":%.17g,\"itc\":%.17g,\"biirr\":%.17g,\"total\":%.17g}",
                     global_step, epoch, lrs[0], lrs[1], fo.id_value, fo.sdm_value, fo.itc_value,
                     fo.biirr_value, fo.total_value);
            log << line << "\n";
            out.total_trace.push_back(fo.total_value);
            ++global_step;
        };

        std::vector<int> labels;
        labels.reserve(data_.samples.size());
        for (const auto& s : data_.samples) labels.push_back(s.label);

        if (opts.overfit_steps > 0) {
            int n = std::min<int>(opts.overfit_batch, static_cast<int>(data_.samples.size()));
            std::vector<int> batch_idx;
            for (int i = 0; i < n; ++i) batch_idx.push_back(i);
            std::array<double, 2> lrs{rc_.base_lr, rc_.module_lr};
            for (int step = 0; step < opts.overfit_steps; ++step) {
                run_step(batch_idx, 0, lrs);
                if (opts.echo_progress && step % 50 == 0)
                    std::fprintf(stderr, "overfit step %d total %.6f\n", step,
                                 out.total_trace.back());
            }
        } else {
            int batch_size = rc_.batch_identities * rc_.batch_instances;
            long long steps_per_epoch =
                (static_cast<long long>(data_.samples.size()) + batch_size - 1) / batch_size;
            for (int epoch = start_epoch; epoch < rc_.epochs; ++epoch) {
                PKBatchSampler sampler(labels, rc_.batch_identities, rc_.batch_instances,
                                       mix_seed(epoch_root, static_cast<uint64_t>(epoch)));
                for (long long s = 0; s < steps_per_epoch; ++s) {
                    double epoch_float = epoch + static_cast<double>(s) / steps_per_epoch;
                    run_step(sampler.next(), epoch, scheduled_group_lrs(rc_, epoch_float));
                }
                if (opts.write_checkpoints)
                    save(epoch, global_step,
                         (fs::path(rc_.output_dir) / "checkpoint_last.bin").string());
                if (opts.echo_progress)
                    std::fprintf(stderr, "epoch %d done, total %.6f\n", epoch,
                                 out.total_trace.back());
            }
        }

        out.final_checkpoint = (fs::path(rc_.output_dir) / "checkpoint_final.bin").string();
        if (opts.write_checkpoints)
            save(rc_.epochs - 1, global_step, out.final_checkpoint);
        out.steps = global_step;
        return out;
    }

    PfcvrModel& model() {
        check(model_ != nullptr, "Trainer: run() has not been called");
        return *model_;
    }
    const PreparedDataset& data() const { return data_; }
    const RunConfig& config() const { return rc_; }

    void save(int epoch, long long global_step, const std::string& path) {
        CheckpointMeta meta;
        meta.config_text = rc_.serialize();
        meta.config_hash = rc_.config_hash();
        meta.epoch = epoch;
        meta.global_step = global_step;
        meta.label_map = data_.label_map;
        auto params = model_->parameters();
        save_checkpoint(path, meta, params);
    }

  private:
    RunConfig rc_;
    PreparedDataset data_;
    std::unique_ptr<PfcvrModel> model_;
};

}  // namespace pfcvr
