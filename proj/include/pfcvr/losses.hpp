#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pfcvr/autograd.hpp"

namespace pfcvr {

constexpr double kSdmEps = 1e-8;

struct LossFlags {
    bool itc_degenerate = false;  // fewer than two aligned (sample, part) pairs
    bool mlm_empty = false;
    bool mim_empty = false;
};

// Mean over branches of the per-branch mean cross-entropy against identity
// labels. Each branch passes its own logits through the shared classifier
// before calling this.
inline ag::Var id_loss(ag::Tape& t, const std::vector<ag::Var>& branch_logits,
                       const std::vector<int>& labels) {
    check(!branch_logits.empty(), "id_loss: no branches");
    ag::Var acc = nullptr;
    for (ag::Var logits : branch_logits) {
        ag::Var ce = ag::cross_entropy_rows(logits, labels);
        acc = acc ? ag::add(acc, ce) : ce;
    }
    return ag::scale(acc, 1.0 / static_cast<double>(branch_logits.size()));
}

// Row-normalized same-identity indicator: Q_ij = 1[y_i = y_j] / |{k : y_k = y_i}|.
// Symmetric because the normalizer is the matching row's class count.
inline Mat sdm_targets(const std::vector<int>& labels) {
    const int n = static_cast<int>(labels.size());
    Mat q(n, n);
    for (int i = 0; i < n; ++i) {
        int cnt = 0;
        for (int j = 0; j < n; ++j) cnt += labels[i] == labels[j];
        for (int j = 0; j < n; ++j)
            if (labels[i] == labels[j]) q(i, j) = 1.0 / cnt;
    }
    return q;
}

namespace detail {

// Mean over rows of KL(P_r || Q_r) with P = row_softmax(scaled), both
// distributions epsilon-shifted inside the logs.
inline ag::Var sdm_direction(ag::Tape& t, ag::Var scaled, const Mat& q, double eps) {
    ag::Var p = ag::row_softmax(scaled);
    Mat logq = q;
    for (double& x : logq.data) x = std::log(x + eps);
    ag::Var diff = ag::sub(ag::log_eps(p, eps), t.constant(logq));
    return ag::scale(ag::sum_all(ag::mul(p, diff)), 1.0 / q.rows);
}

}  // namespace detail

// Similarity distribution matching: KL between softmax-ed cosine similarities
// and the identity-match distribution, averaged over both directions.
// `inv_tau` is a 1x1 node holding 1/temperature.
inline ag::Var sdm_loss(ag::Tape& t, ag::Var image_feats, ag::Var text_feats,
                        const std::vector<int>& labels, ag::Var inv_tau,
                        double eps = kSdmEps) {
    const int n = image_feats->val.rows;
    check(n == text_feats->val.rows, "sdm_loss: batch size mismatch");
    check(static_cast<int>(labels.size()) == n, "sdm_loss: label count mismatch");
    check(n >= 1, "sdm_loss: empty batch");
    ag::Var sim = ag::matmul_nt(ag::l2normalize_rows(image_feats),
                                ag::l2normalize_rows(text_feats));
    ag::Var scaled = ag::mul_scalar(sim, inv_tau);
    Mat q = sdm_targets(labels);
    ag::Var i2t = detail::sdm_direction(t, scaled, q, eps);
    ag::Var t2i = detail::sdm_direction(t, ag::transpose(scaled), q, eps);
    return ag::scale(ag::add(i2t, t2i), 0.5);
}

// Symmetric InfoNCE over aligned pairs: S_ij = cos(part_i, query_j)/tau,
// positives on the diagonal. Degenerates to zero below two pairs.
inline ag::Var itc_loss(ag::Tape& t, ag::Var part_feats, ag::Var query_feats, ag::Var inv_tau,
                        LossFlags* flags = nullptr) {
    const int m = part_feats->val.rows;
    check(m == query_feats->val.rows, "itc_loss: pair count mismatch");
    if (m < 2) {
        if (flags) flags->itc_degenerate = true;
        return t.scalar(0.0);
    }
    ag::Var sim = ag::matmul_nt(ag::l2normalize_rows(part_feats),
                                ag::l2normalize_rows(query_feats));
    ag::Var scaled = ag::mul_scalar(sim, inv_tau);
    std::vector<int> diag(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) diag[static_cast<size_t>(i)] = i;
    ag::Var a = ag::cross_entropy_rows(scaled, diag);
    ag::Var b = ag::cross_entropy_rows(ag::transpose(scaled), diag);
    return ag::scale(ag::add(a, b), 0.5);
}

// Bidirectional reconstruction: mean token cross-entropy over masked text
// positions plus mean squared pixel error over masked patches, halved.
// An empty side contributes zero while the other is still halved.
inline ag::Var bmria_loss(ag::Tape& t, ag::Var mlm_logits, const std::vector<int>& mlm_targets,
                          ag::Var mim_pred, const Mat& mim_target,
                          LossFlags* flags = nullptr) {
    bool has_mlm = mlm_logits != nullptr && mlm_logits->val.rows > 0;
    bool has_mim = mim_pred != nullptr && mim_pred->val.rows > 0;
    if (flags) {
        flags->mlm_empty = !has_mlm;
        flags->mim_empty = !has_mim;
    }
    if (!has_mlm && !has_mim) return t.scalar(0.0);
    ag::Var acc = nullptr;
    if (has_mlm) {
        check(static_cast<int>(mlm_targets.size()) == mlm_logits->val.rows,
              "bmria_loss: target count mismatch");
        acc = ag::cross_entropy_rows(mlm_logits, mlm_targets);
    }
    if (has_mim) {
        ag::Var mse = ag::mse_to(mim_pred, mim_target);
        acc = acc ? ag::add(acc, mse) : mse;
    }
    return ag::scale(acc, 0.5);
}

struct LossTerms {
    ag::Var id = nullptr;
    ag::Var sdm = nullptr;
    ag::Var itc = nullptr;
    ag::Var biirr = nullptr;
};

struct LossWeights {
    double alpha = 0.5;
    double beta = 1.0;
    double gamma = 0.2;
    double delta = 0.5;
};

// Weighted sum of the four terms. A non-finite component aborts, naming the
// offender; a null component contributes nothing (disabled module).
inline ag::Var total_loss(ag::Tape& t, const LossTerms& terms, const LossWeights& w) {
    struct Entry {
        const char* name;
        ag::Var var;
        double weight;
    };
    const Entry entries[] = {{"id", terms.id, w.alpha},
                             {"sdm", terms.sdm, w.beta},
                             {"itc", terms.itc, w.gamma},
                             {"biirr", terms.biirr, w.delta}};
    ag::Var acc = nullptr;
    for (const Entry& e : entries) {
        if (!e.var) continue;
        if (!std::isfinite(e.var->val(0, 0)))
            throw std::runtime_error("loss: component '" + std::string(e.name) +
                                     "' is not finite");
        ag::Var term = ag::scale(e.var, e.weight);
        acc = acc ? ag::add(acc, term) : term;
    }
    return acc ? acc : t.scalar(0.0);
}

}  // namespace pfcvr
