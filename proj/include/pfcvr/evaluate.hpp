#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfcvr/metrics.hpp"
#include "pfcvr/model.hpp"
#include "pfcvr/trainer.hpp"

namespace pfcvr {

struct EvalReport {
    double rank1 = 0.0, rank5 = 0.0, rank10 = 0.0, map = 0.0;
    int queries = 0, gallery = 0, skipped_queries = 0;
    std::string config_hash;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["rank1"] = rank1;
        j["rank5"] = rank5;
        j["rank10"] = rank10;
        j["map"] = map;
        j["queries"] = queries;
        j["gallery"] = gallery;
        j["skipped_queries"] = skipped_queries;
        j["config_hash"] = config_hash;
        return j;
    }

    static EvalReport from_json(const nlohmann::json& j) {
        EvalReport r;
        for (const char* f : {"rank1", "rank5", "rank10", "map", "queries", "gallery",
                              "skipped_queries", "config_hash"})
            check(j.contains(f), std::string("eval report: missing field ") + f);
        r.rank1 = j["rank1"].get<double>();
        r.rank5 = j["rank5"].get<double>();
        r.rank10 = j["rank10"].get<double>();
        r.map = j["map"].get<double>();
        r.queries = j["queries"].get<int>();
        r.gallery = j["gallery"].get<int>();
        r.skipped_queries = j["skipped_queries"].get<int>();
        r.config_hash = j["config_hash"].get<std::string>();
        return r;
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        check(out.good(), "eval report: cannot open " + path);
        out << to_json().dump(2) << "\n";
        check(out.good(), "eval report: write failed");
    }

    static EvalReport read(const std::string& path) {
        std::ifstream in(path);
        check(in.good(), "eval report: cannot open " + path);
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

namespace detail {

inline void l2_normalize_rows_inplace(Mat& m) {
    for (int r = 0; r < m.rows; ++r) {
        double* row = m.row_ptr(r);
        double n = l2_norm(row, m.cols);
        if (n > 0.0)
            for (int c = 0; c < m.cols; ++c) row[c] /= n;
    }
}

}  // namespace detail

// Text-to-image retrieval over one sample set: every caption queries the
// gallery of every image; a gallery hit is any image of the query's identity.
inline EvalReport evaluate_samples(PfcvrModel& model, const std::vector<ModelSample>& samples,
                                   const std::vector<int>& identities,
                                   const std::string& config_hash) {
    check(!samples.empty(), "evaluate_samples: empty sample set");
    check(samples.size() == identities.size(), "evaluate_samples: identity count mismatch");
    const int n = static_cast<int>(samples.size());
    const int d = model.config().embed_dim;
    Mat txt_feats(n, d), img_feats(n, d);
    for (int i = 0; i < n; ++i) {
        // One throwaway no-grad tape per sample keeps peak memory flat.
        ag::Tape tape;
        tape.grad_enabled = false;
        const ModelSample& s = samples[static_cast<size_t>(i)];
        ag::Var img = model.encode_image_pooled(tape, s.image);
        ag::Var txt = model.encode_text_pooled(tape, s.caption);
        std::copy(img->val.data.begin(), img->val.data.end(), img_feats.row_ptr(i));
        std::copy(txt->val.data.begin(), txt->val.data.end(), txt_feats.row_ptr(i));
    }
    detail::l2_normalize_rows_inplace(txt_feats);
    detail::l2_normalize_rows_inplace(img_feats);

    Mat sim(n, n);
    matmul_nt_into(sim, txt_feats, img_feats, false);

    auto rankings = rank_gallery(sim);
    EvalReport rep;
    rep.queries = n;
    rep.gallery = n;
    rep.rank1 = rank_k(rankings, identities, identities, 1);
    rep.rank5 = rank_k(rankings, identities, identities, 5);
    rep.rank10 = rank_k(rankings, identities, identities, 10);
    rep.map = mean_ap(rankings, identities, identities, &rep.skipped_queries);
    rep.config_hash = config_hash;
    if (rep.skipped_queries > 0)
        std::fprintf(stderr, "warning: %d queries had no gallery match and were skipped\n",
                     rep.skipped_queries);
    return rep;
}

// Rebuilds the model a checkpoint was trained as and restores every tensor.
struct RestoredModel {
    RunConfig rc;
    CheckpointMeta meta;
    std::unique_ptr<PfcvrModel> model;
};

inline RestoredModel restore_model(const std::string& checkpoint_path) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
    RestoredModel out;
    out.rc = RunConfig::parse(ck.meta.config_text);
    out.model = std::make_unique<PfcvrModel>(out.rc.model,
                                             static_cast<int>(ck.meta.label_map.size()),
                                             out.rc.seed, out.rc.enable_plfa,
                                             out.rc.enable_bmria);
    auto params = out.model->parameters();
    ck.apply_to(params);
    out.meta = ck.meta;
    return out;
}

// Full eval path: restore the checkpoint, load the manifest's test split,
// and score text-to-image retrieval.
inline EvalReport evaluate_checkpoint(const std::string& checkpoint_path,
                                      const std::string& manifest_path) {
    RestoredModel rm = restore_model(checkpoint_path);
    PreparedDataset test =
        prepare_dataset(manifest_path, rm.rc.model, "test", /*with_part_texts=*/false);
    return evaluate_samples(*rm.model, test.samples, test.identities, rm.meta.config_hash);
}

}  // namespace pfcvr
