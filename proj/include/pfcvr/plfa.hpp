#pragma once

#include <vector>

#include "pfcvr/config.hpp"
#include "pfcvr/nn.hpp"

namespace pfcvr {

// Part-level fine-grained alignment. Learnable part queries are projected and
// refreshed by one cross-attention pass over textual part evidence; the
// refreshed queries are then contrasted against pooled part image features.
class PlfaModule {
  public:
    PlfaModule(const ModelConfig& cfg, Rng& rng)
        : queries("plfa.queries",
                  random_normal_mat(rng, cfg.num_parts, cfg.embed_dim, nn::kInitStd), 1),
          proj("plfa.proj", cfg.embed_dim, cfg.embed_dim, rng, 1, /*bias=*/false),
          mca("plfa.mca", cfg.embed_dim, cfg.num_heads, rng, 1) {}

    // guide: rows of textual evidence, typically the K pooled part-text
    // features stacked on the global caption's token sequence. One plain MCA
    // application, no residual around it.
    ag::Var update_queries(ag::Tape& t, ag::Var guide) {
        return mca(t, proj(t, t.param(queries)), guide);
    }

    void collect(std::vector<Param*>& out) {
        out.push_back(&queries);
        proj.collect(out);
        mca.collect(out);
    }

    Param queries;
    nn::Linear proj;
    nn::MultiHeadAttention mca;
};

}  // namespace pfcvr
