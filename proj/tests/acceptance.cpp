// Acceptance gate. Nine behavioral criteria, each printed as one pass/fail
// line with its measured figure and runtime. Exit status is nonzero if any
// criterion fails. Tolerances and budgets are pinned here, not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <pfcvr/pfcvr.hpp>

using namespace pfcvr;
namespace fs = std::filesystem;

namespace {

fs::path g_root;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

// ---- independent scalar references (plain loops, no autograd) ----

double ref_lse(const double* v, int n) {
    double m = v[0];
    for (int i = 1; i < n; ++i) m = std::max(m, v[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

double ref_mean_ce(const Mat& logits, const std::vector<int>& targets) {
    double s = 0.0;
    for (int r = 0; r < logits.rows; ++r)
        s += ref_lse(logits.row_ptr(r), logits.cols) -
             logits(r, targets[static_cast<size_t>(r)]);
    return s / logits.rows;
}

double ref_id(const std::vector<Mat>& branches, const std::vector<int>& labels) {
    double s = 0.0;
    for (const Mat& b : branches) s += ref_mean_ce(b, labels);
    return s / static_cast<double>(branches.size());
}

Mat ref_cosine(const Mat& a, const Mat& b) {
    Mat s(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (int c = 0; c < a.cols; ++c) {
                dot += a(i, c) * b(j, c);
                na += a(i, c) * a(i, c);
                nb += b(j, c) * b(j, c);
            }
            s(i, j) = dot / (std::sqrt(na) * std::sqrt(nb));
        }
    return s;
}

double ref_sdm(const Mat& img, const Mat& txt, const std::vector<int>& labels, double inv_tau,
               double eps) {
    const int n = img.rows;
    Mat q(n, n);
    for (int i = 0; i < n; ++i) {
        int cnt = 0;
        for (int j = 0; j < n; ++j)
            if (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(i)]) ++cnt;
        for (int j = 0; j < n; ++j)
            q(i, j) = labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(i)]
                          ? 1.0 / cnt
                          : 0.0;
    }
    Mat s = ref_cosine(img, txt);
    for (double& v : s.data) v *= inv_tau;

    auto direction = [&](bool transposed) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            std::vector<double> row(static_cast<size_t>(n));
            for (int j = 0; j < n; ++j) row[static_cast<size_t>(j)] = transposed ? s(j, i) : s(i, j);
            double lse = ref_lse(row.data(), n);
            for (int j = 0; j < n; ++j) {
                double p = std::exp(row[static_cast<size_t>(j)] - lse);
                double qv = transposed ? q(j, i) : q(i, j);
                total += p * (std::log(p + eps) - std::log(qv + eps));
            }
        }
        return total / n;
    };
    return 0.5 * (direction(false) + direction(true));
}

double ref_itc(const Mat& parts, const Mat& queries, double inv_tau) {
    const int m = parts.rows;
    if (m < 2) return 0.0;
    Mat s = ref_cosine(parts, queries);
    for (double& v : s.data) v *= inv_tau;
    double a = 0.0, b = 0.0;
    for (int i = 0; i < m; ++i) {
        std::vector<double> col(static_cast<size_t>(m));
        for (int j = 0; j < m; ++j) col[static_cast<size_t>(j)] = s(j, i);
        a += ref_lse(s.row_ptr(i), m) - s(i, i);
        b += ref_lse(col.data(), m) - s(i, i);
    }
    return 0.5 * (a / m + b / m);
}

double ref_bmria(const Mat* logits, const std::vector<int>& targets, const Mat* pred,
                 const Mat* target) {
    bool has_mlm = logits && logits->rows > 0;
    bool has_mim = pred && pred->rows > 0;
    if (!has_mlm && !has_mim) return 0.0;
    double acc = 0.0;
    if (has_mlm) acc += ref_mean_ce(*logits, targets);
    if (has_mim) {
        double s = 0.0;
        for (size_t i = 0; i < pred->size(); ++i) {
            double d = pred->data[i] - target->data[i];
            s += d * d;
        }
        acc += s / static_cast<double>(pred->size());
    }
    return 0.5 * acc;
}

Mat random_mat(Rng& rng, int r, int c, double stddev = 1.0) {
    Mat m(r, c);
    for (double& v : m.data) v = rng.normal(0.0, stddev);
    return m;
}

// ---- criterion 1: loss value oracles ----

Outcome criterion_losses() {
    Rng rng(1001);
    const double tol = 1e-9;
    double worst = 0.0;
    int instances = 0;
    auto record = [&](double impl, double ref) {
        worst = std::max(worst, std::abs(impl - ref));
        ++instances;
        return std::abs(impl - ref) <= tol;
    };

    for (int iter = 0; iter < 120; ++iter) {
        int n = 2 + rng.uniform_int(4);  // N <= 5
        int d = 2 + rng.uniform_int(7);  // d <= 8
        int classes = 1 + rng.uniform_int(n);
        std::vector<int> labels(static_cast<size_t>(n));
        for (int& l : labels) l = rng.uniform_int(classes);
        double tau = (iter % 3 == 0) ? 0.02 : (iter % 3 == 1 ? 0.3 : 1.0);

        {
            Mat a = random_mat(rng, n, classes + 1), b = random_mat(rng, n, classes + 1);
            ag::Tape t;
            double impl =
                id_loss(t, {t.constant(a), t.constant(b)}, labels)->val(0, 0);
            if (!record(impl, ref_id({a, b}, labels)))
                return {false, "id_loss diverged at instance " + std::to_string(iter)};
        }
        {
            Mat img = random_mat(rng, n, d), txt = random_mat(rng, n, d);
            ag::Tape t;
            double impl = sdm_loss(t, t.constant(img), t.constant(txt), labels,
                                   t.scalar(1.0 / tau))
                              ->val(0, 0);
            if (!record(impl, ref_sdm(img, txt, labels, 1.0 / tau, kSdmEps)))
                return {false, "sdm_loss diverged at instance " + std::to_string(iter)};
        }
        {
            int m = iter % 20 == 0 ? rng.uniform_int(2) : 2 + rng.uniform_int(4);
            Mat parts = random_mat(rng, std::max(m, 1), d);
            Mat queries = random_mat(rng, std::max(m, 1), d);
            if (m == 0) {
                parts = Mat(0, d);
                queries = Mat(0, d);
            }
            ag::Tape t;
            LossFlags flags;
            double impl = itc_loss(t, t.constant(parts), t.constant(queries),
                                   t.scalar(1.0 / tau), &flags)
                              ->val(0, 0);
            if (!record(impl, ref_itc(parts, queries, 1.0 / tau)))
                return {false, "itc_loss diverged at instance " + std::to_string(iter)};
            if ((m < 2) != flags.itc_degenerate)
                return {false, "itc_loss degenerate flag wrong"};
        }
        {
            int rows_t = iter % 10 == 0 ? 0 : 1 + rng.uniform_int(5);
            int rows_i = iter % 15 == 0 ? 0 : 1 + rng.uniform_int(5);
            int vocab = 3 + rng.uniform_int(6);
            Mat logits = random_mat(rng, rows_t, vocab);
            std::vector<int> targets(static_cast<size_t>(rows_t));
            for (int& v : targets) v = rng.uniform_int(vocab);
            Mat pred = random_mat(rng, rows_i, d), target = random_mat(rng, rows_i, d);
            ag::Tape t;
            double impl = bmria_loss(t, rows_t ? t.constant(logits) : nullptr, targets,
                                     rows_i ? t.constant(pred) : nullptr, target)
                              ->val(0, 0);
            double ref = ref_bmria(rows_t ? &logits : nullptr, targets,
                                   rows_i ? &pred : nullptr, &target);
            if (!record(impl, ref))
                return {false, "bmria_loss diverged at instance " + std::to_string(iter)};
        }
    }
    if (instances < 4 * 100) return {false, "too few instances"};
    return {true, std::to_string(instances) + " instances, max |diff| " + fmt("%.2e", worst)};
}

// ---- criterion 2: gradient suite ----

struct FdCheck {
    std::vector<Param*> params;
    std::function<ag::Var(ag::Tape&)> fn;

    // Central differences on fresh tapes against one analytic backward pass.
    bool run(double tol, double* worst, std::string* where, const std::string& tag) {
        ag::Tape t;
        ag::Var out = fn(t);
        if (out->val.rows != 1 || out->val.cols != 1) {
            *where = tag + ": non-scalar output";
            return false;
        }
        t.backward(out);
        std::unordered_map<Param*, Mat> grads;
        for (const auto& [p, node] : t.bound_params()) grads[p] = node->grad;
        auto value = [&] {
            ag::Tape fresh;
            return fn(fresh)->val(0, 0);
        };
        bool ok = true;
        for (Param* p : params) {
            Mat g = grads.count(p) ? grads[p] : Mat(p->value.rows, p->value.cols);
            for (int r = 0; r < p->value.rows && ok; ++r)
                for (int c = 0; c < p->value.cols && ok; ++c) {
                    double keep = p->value(r, c);
                    double h = 1e-5 * std::max(1.0, std::abs(keep));
                    p->value(r, c) = keep + h;
                    double fp = value();
                    p->value(r, c) = keep - h;
                    double fm = value();
                    p->value(r, c) = keep;
                    double num = (fp - fm) / (2.0 * h);
                    double an = g(r, c);
                    double rel =
                        std::abs(an - num) / std::max({1.0, std::abs(an), std::abs(num)});
                    *worst = std::max(*worst, rel);
                    if (rel > tol) {
                        std::ostringstream msg;
                        msg << tag << " " << p->name << "(" << r << "," << c
                            << "): analytic " << an << " numeric " << num;
                        *where = msg.str();
                        ok = false;
                    }
                }
        }
        return ok;
    }
};

Outcome criterion_gradients() {
    Rng rng(2002);
    const double tol = 1e-3;
    double worst = 0.0;
    std::string where;

    auto reduce = [](ag::Tape& t, ag::Var x, const Mat& w) {
        return ag::sum_all(ag::mul(x, t.constant(w)));
    };

    {
        Param a("a", random_mat(rng, 3, 4)), b("b", random_mat(rng, 3, 4));
        std::vector<int> labels = {0, 1, 1};
        FdCheck fd{{&a, &b}, [&](ag::Tape& t) {
                       return id_loss(t, {t.param(a), t.param(b)}, labels);
                   }};
        if (!fd.run(tol, &worst, &where, "id")) return {false, where};
    }
    {
        Param img("img", random_mat(rng, 4, 6)), txt("txt", random_mat(rng, 4, 6));
        Param log_tau("log_tau", Mat::scalar(std::log(0.1)));
        std::vector<int> labels = {0, 1, 0, 2};
        FdCheck fd{{&img, &txt, &log_tau}, [&](ag::Tape& t) {
                       ag::Var inv = ag::exp(ag::scale(t.param(log_tau), -1.0));
                       return sdm_loss(t, t.param(img), t.param(txt), labels, inv);
                   }};
        if (!fd.run(tol, &worst, &where, "sdm")) return {false, where};
    }
    {
        Param parts("parts", random_mat(rng, 4, 6)), queries("queries", random_mat(rng, 4, 6));
        Param log_tau("log_tau", Mat::scalar(std::log(0.5)));
        FdCheck fd{{&parts, &queries, &log_tau}, [&](ag::Tape& t) {
                       ag::Var inv = ag::exp(ag::scale(t.param(log_tau), -1.0));
                       return itc_loss(t, t.param(parts), t.param(queries), inv);
                   }};
        if (!fd.run(tol, &worst, &where, "itc")) return {false, where};
    }
    {
        Param logits("logits", random_mat(rng, 3, 7)), pred("pred", random_mat(rng, 2, 12));
        std::vector<int> targets = {1, 4, 6};
        Mat target = random_mat(rng, 2, 12);
        FdCheck fd{{&logits, &pred}, [&](ag::Tape& t) {
                       return bmria_loss(t, t.param(logits), targets, t.param(pred), target);
                   }};
        if (!fd.run(tol, &worst, &where, "bmria")) return {false, where};
    }

    ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    cfg.image_size = 8;
    cfg.patch_size = 4;
    cfg.max_text_len = 12;
    cfg.vocab_size = 16;
    cfg.num_mim_decoder_layers = 2;
    cfg.validate();

    {
        Rng mrng(7);
        PlfaModule plfa(cfg, mrng);
        Param guide("guide", random_mat(rng, 9, cfg.embed_dim));
        Mat w = random_mat(rng, cfg.num_parts, cfg.embed_dim);
        FdCheck fd;
        plfa.collect(fd.params);
        fd.params.push_back(&guide);
        fd.fn = [&](ag::Tape& t) {
            return reduce(t, plfa.update_queries(t, t.param(guide)), w);
        };
        if (!fd.run(tol, &worst, &where, "plfa")) return {false, where};
    }
    {
        Rng mrng(8);
        TextRecoverer mlm(cfg, mrng);
        Param masked("masked", random_mat(rng, 6, cfg.embed_dim, 0.5));
        Param img_tokens("imgtok", random_mat(rng, 5, cfg.embed_dim, 0.5));
        std::vector<int> positions = {1, 3};
        std::vector<int> targets = {5, 9};
        FdCheck fd;
        mlm.collect(fd.params);
        fd.params.push_back(&masked);
        fd.params.push_back(&img_tokens);
        fd.fn = [&](ag::Tape& t) {
            ag::Var logits = mlm.recover(t, t.param(masked), t.param(img_tokens), positions);
            return bmria_loss(t, logits, targets, nullptr, Mat());
        };
        if (!fd.run(tol, &worst, &where, "bmria-text")) return {false, where};
    }
    {
        Rng mrng(9);
        ImageRecoverer mim(cfg, mrng);
        Param masked("maskedimg", random_mat(rng, cfg.visual_tokens() + 1, cfg.embed_dim, 0.5));
        Param txt_tokens("txttok", random_mat(rng, 6, cfg.embed_dim, 0.5));
        std::vector<int> patches = {0, 2};
        Mat target = random_mat(rng, 2, cfg.patch_dim());
        FdCheck fd;
        mim.collect(fd.params);
        fd.params.push_back(&masked);
        fd.params.push_back(&txt_tokens);
        fd.fn = [&](ag::Tape& t) {
            ag::Var pred = mim.recover(t, t.param(masked), t.param(txt_tokens), patches);
            return bmria_loss(t, nullptr, {}, pred, target);
        };
        if (!fd.run(tol, &worst, &where, "bmria-image")) return {false, where};
    }

    return {true, "7 blocks, max rel err " + fmt("%.2e", worst)};
}

// ---- criterion 3: metric oracles ----

Outcome criterion_metrics() {
    Rng rng(3003);
    const double tol = 1e-12;
    double worst = 0.0;

    for (int run = 0; run < 1000; ++run) {
        int nq = 1 + rng.uniform_int(10);
        int ng = 1 + rng.uniform_int(30);
        int classes = 1 + rng.uniform_int(5);
        std::vector<int> q(static_cast<size_t>(nq)), g(static_cast<size_t>(ng));
        for (int& v : q) v = rng.uniform_int(classes);
        for (int& v : g) v = rng.uniform_int(classes);
        Mat sim(nq, ng);
        for (double& v : sim.data) {
            v = rng.uniform();
            if (run % 2 == 0) v = std::round(v * 10.0) / 10.0;  // force ties
        }

        auto rankings = rank_gallery(sim);

        // reference: sort indices by score desc, index asc
        std::vector<std::vector<int>> ref_rank(static_cast<size_t>(nq));
        for (int i = 0; i < nq; ++i) {
            auto& order = ref_rank[static_cast<size_t>(i)];
            order.resize(static_cast<size_t>(ng));
            std::iota(order.begin(), order.end(), 0);
            const double* row = sim.row_ptr(i);
            std::stable_sort(order.begin(), order.end(),
                             [row](int a, int b) { return row[a] > row[b]; });
        }
        if (rankings != ref_rank)
            return {false, "rank_gallery order diverged at run " + std::to_string(run)};

        for (int k : {1, 5, 10}) {
            int hits = 0;
            for (int i = 0; i < nq; ++i)
                for (int j = 0; j < std::min(k, ng); ++j)
                    if (g[static_cast<size_t>(ref_rank[static_cast<size_t>(i)][static_cast<size_t>(j)])] ==
                        q[static_cast<size_t>(i)]) {
                        ++hits;
                        break;
                    }
            double ref = static_cast<double>(hits) / nq;
            double impl = rank_k(rankings, q, g, k);
            worst = std::max(worst, std::abs(impl - ref));
            if (std::abs(impl - ref) > tol)
                return {false, "rank_" + std::to_string(k) + " diverged at run " +
                                   std::to_string(run)};
        }

        double ref_sum = 0.0;
        int used = 0, ref_skipped = 0;
        for (int i = 0; i < nq; ++i) {
            int m = 0;
            double ap = 0.0;
            for (int j = 0; j < ng; ++j) {
                int idx = ref_rank[static_cast<size_t>(i)][static_cast<size_t>(j)];
                if (g[static_cast<size_t>(idx)] == q[static_cast<size_t>(i)]) {
                    ++m;
                    ap += static_cast<double>(m) / (j + 1);
                }
            }
            if (m == 0) {
                ++ref_skipped;
                continue;
            }
            ref_sum += ap / m;
            ++used;
        }
        double ref_map = used ? ref_sum / used : 0.0;
        int skipped = 0;
        double impl_map = mean_ap(rankings, q, g, &skipped);
        worst = std::max(worst, std::abs(impl_map - ref_map));
        if (std::abs(impl_map - ref_map) > tol || skipped != ref_skipped)
            return {false, "mean_ap diverged at run " + std::to_string(run)};
    }

    // matches at ranks 1 and 3 with two relevant items: AP = (1 + 2/3)/2 = 5/6
    Mat sim(1, 3);
    sim(0, 0) = 0.9;
    sim(0, 1) = 0.7;
    sim(0, 2) = 0.5;
    double ap = mean_ap(rank_gallery(sim), {7}, {7, 9, 7});
    if (ap != (1.0 + 2.0 / 3.0) / 2.0) return {false, "hand case AP != 5/6 exactly"};

    return {true, "1000 runs, max |diff| " + fmt("%.2e", worst) + ", hand AP 5/6 exact"};
}

// ---- criterion 4: mask-ratio exactness ----

Outcome criterion_mask_plans() {
    ModelConfig cfg;  // paper defaults: 576 patches, ratios 0.25 / 0.15
    Rng rng(4004);
    Tokenizer tok;
    const long long want_patches = std::llround(cfg.image_mask_ratio * cfg.visual_tokens());

    for (int i = 0; i < 1000; ++i) {
        SyntheticVehicleSpec spec = random_vehicle_spec(rng);
        TokenSeq seq = tok.encode(make_caption(spec, rng), cfg.max_text_len);
        MaskPlan plan = make_mask_plan(cfg, seq, 9000 + i);

        if (static_cast<long long>(plan.image_patches.size()) != want_patches)
            return {false, "image mask count " + std::to_string(plan.image_patches.size()) +
                               " != " + std::to_string(want_patches)};

        int maskable = 0;
        for (int id : seq.ids)
            if (!is_special_token(id)) ++maskable;
        long long want_text = std::llround(cfg.text_mask_ratio * maskable);
        if (static_cast<long long>(plan.text_positions.size()) != want_text)
            return {false, "text mask count " + std::to_string(plan.text_positions.size()) +
                               " != " + std::to_string(want_text) + " at plan " +
                               std::to_string(i)};

        for (int p : plan.text_positions) {
            if (p < 0 || p >= cfg.max_text_len) return {false, "text position out of range"};
            if (is_special_token(seq.ids[static_cast<size_t>(p)]))
                return {false, "special token masked at plan " + std::to_string(i)};
        }
        for (size_t k = 1; k < plan.text_positions.size(); ++k)
            if (plan.text_positions[k] <= plan.text_positions[k - 1])
                return {false, "text positions not strictly increasing"};
        for (size_t k = 0; k < plan.image_patches.size(); ++k) {
            int p = plan.image_patches[k];
            if (p < 0 || p >= cfg.visual_tokens()) return {false, "patch out of range"};
            if (k > 0 && p <= plan.image_patches[k - 1])
                return {false, "patches not strictly increasing"};
        }
    }
    return {true, "1000 plans, |M_I| = " + std::to_string(want_patches) +
                      " always, |M_T| exact, no specials"};
}

// ---- criterion 5: augmentation multiplicity ----

Outcome criterion_augmentation() {
    fs::path dir = g_root / "augment";
    fs::create_directories(dir);
    DatasetOptions opts;
    opts.num_ids = 8;
    opts.seed = 77;
    opts.image_size = 32;
    opts.out_dir = dir.string();
    GeneratedDataset ds = generate_dataset(opts);

    size_t train_n = 0, test_n = 0;
    for (const auto& r : ds.records) (r.split == "train" ? train_n : test_n)++;

    auto expanded = augment_manifest(ds.records, ds.manifest_path, 5);
    if (expanded.size() != 4 * train_n + test_n)
        return {false, "expanded to " + std::to_string(expanded.size()) + ", want " +
                           std::to_string(4 * train_n + test_n)};

    size_t i = 0;
    for (const auto& src : ds.records) {
        if (record_to_json(expanded[i]).dump() != record_to_json(src).dump())
            return {false, "source record altered at index " + std::to_string(i)};
        ++i;
        if (src.split != "train") continue;
        for (int v = 0; v < 3; ++v, ++i) {
            const SampleRecord& var = expanded[i];
            if (var.identity != src.identity) return {false, "variant identity changed"};
            if (var.caption != src.caption) return {false, "variant caption changed"};
            if (var.split != "train") return {false, "variant split changed"};
            if (var.part_masks.size() != src.part_masks.size())
                return {false, "variant mask count changed"};
            for (size_t k = 0; k < src.part_masks.size(); ++k)
                if (var.part_masks[k].grid.to_hex() != src.part_masks[k].grid.to_hex())
                    return {false, "variant grid differs bit-wise"};
            if (var.image_path == src.image_path) return {false, "variant reuses image path"};
        }
    }
    return {true, std::to_string(train_n) + " train records -> " +
                      std::to_string(4 * train_n) + ", grids and labels bit-exact"};
}

// ---- criterion 6: overfit one batch at smoke scale ----

Outcome criterion_overfit() {
    fs::path data_dir = g_root / "overfit_data";
    fs::path run_dir = g_root / "overfit_run";
    fs::create_directories(data_dir);

    DatasetOptions dopts;
    dopts.num_ids = 6;
    dopts.images_per_id = 1;  // four distinct-identity train samples
    dopts.seed = 11;
    dopts.image_size = 64;
    dopts.out_dir = data_dir.string();
    GeneratedDataset ds = generate_dataset(dopts);

    RunConfig rc;
    rc.model = ModelConfig::smoke();
    rc.base_lr = 1e-2;
    rc.module_lr = 1e-2;
    rc.seed = 5;
    rc.manifest = ds.manifest_path;
    rc.output_dir = run_dir.string();

    TrainOptions opts;
    opts.overfit_steps = 300;
    opts.overfit_batch = 4;
    opts.write_checkpoints = false;

    Trainer trainer(rc);
    TrainOutcome out = trainer.run(opts);
    double first = out.total_trace.front();
    int reached = -1;
    for (size_t i = 0; i < out.total_trace.size(); ++i)
        if (std::isfinite(out.total_trace[i]) && out.total_trace[i] < 0.1 * first) {
            reached = static_cast<int>(i);
            break;
        }
    if (reached < 0)
        return {false, "loss " + fmt("%.4f", first) + " -> " +
                           fmt("%.4f", out.total_trace.back()) +
                           ", never below 10% of step 0 within 300 steps"};

    const PreparedDataset& data = trainer.data();
    if (data.samples.size() != 4) return {false, "expected exactly 4 train samples"};
    EvalReport rep = evaluate_samples(trainer.model(), data.samples, data.identities, "");
    if (rep.rank1 != 1.0) return {false, "rank1 " + fmt("%.3f", rep.rank1) + " != 1.0"};

    return {true, "loss " + fmt("%.3f", first) + " -> " + fmt("%.4f", out.total_trace.back()) +
                      ", below 10% at step " + std::to_string(reached) + ", rank1 1.0"};
}

// ---- criterion 7: ablation direction over seeds ----

Outcome criterion_ablation_direction() {
    fs::path data_dir = g_root / "ablation_data";
    fs::create_directories(data_dir);
    DatasetOptions dopts;
    dopts.num_ids = 50;
    dopts.seed = 1234;
    dopts.image_size = 32;
    dopts.out_dir = data_dir.string();
    GeneratedDataset ds = generate_dataset(dopts);

    ModelConfig model;
    model.embed_dim = 16;
    model.num_heads = 2;
    model.image_size = 32;
    model.patch_size = 8;
    model.max_text_len = 64;
    model.num_encoder_layers = 1;
    model.num_mim_decoder_layers = 1;
    model.validate();
    PreparedDataset test = prepare_dataset(ds.manifest_path, model, "test", false);

    auto arm_rank1 = [&](bool enable_modules, uint64_t seed, int slot) {
        RunConfig rc;
        rc.model = model;
        rc.epochs = 12;
        rc.warmup_epochs = 2;
        rc.base_lr = 1e-3;
        rc.module_lr = 3e-3;
        rc.batch_identities = 2;
        rc.batch_instances = 2;
        rc.seed = seed;
        rc.enable_plfa = enable_modules;
        rc.enable_bmria = enable_modules;
        rc.manifest = ds.manifest_path;
        rc.output_dir = (g_root / ("ablation_run_" + std::to_string(slot))).string();
        TrainOptions opts;
        opts.write_checkpoints = false;
        Trainer trainer(rc);
        trainer.run(opts);
        return evaluate_samples(trainer.model(), test.samples, test.identities, "").rank1;
    };

    const uint64_t seeds[] = {1, 2, 3};
    double base_sum = 0.0, full_sum = 0.0;
    std::string per_seed;
    for (int i = 0; i < 3; ++i) {
        double base = arm_rank1(false, seeds[i], 2 * i);
        double full = arm_rank1(true, seeds[i], 2 * i + 1);
        base_sum += base;
        full_sum += full;
        per_seed += " [seed " + std::to_string(seeds[i]) + ": " + fmt("%.3f", base) + " vs " +
                    fmt("%.3f", full) + "]";
    }
    double base_mean = base_sum / 3.0, full_mean = full_sum / 3.0;
    std::string detail = "baseline mean rank1 " + fmt("%.4f", base_mean) +
                         ", +PLFA+BMRIA mean rank1 " + fmt("%.4f", full_mean) + per_seed;
    if (full_mean < base_mean) return {false, detail};
    return {true, detail};
}

// ---- criterion 8: determinism and checkpoint round trip ----

Outcome criterion_determinism() {
    fs::path data_dir = g_root / "det_data";
    fs::create_directories(data_dir);
    DatasetOptions dopts;
    dopts.num_ids = 5;
    dopts.seed = 21;
    dopts.image_size = 32;
    dopts.out_dir = data_dir.string();
    GeneratedDataset ds = generate_dataset(dopts);

    auto run_once = [&](const std::string& out_name, TrainOutcome* out, Trainer** keep) {
        RunConfig rc;
        rc.model.embed_dim = 16;
        rc.model.num_heads = 2;
        rc.model.image_size = 32;
        rc.model.patch_size = 8;
        rc.model.max_text_len = 64;
        rc.model.num_encoder_layers = 1;
        rc.model.num_mim_decoder_layers = 1;
        rc.epochs = 2;
        rc.warmup_epochs = 2;
        rc.base_lr = 1e-3;
        rc.module_lr = 1e-3;
        rc.seed = 99;
        rc.manifest = ds.manifest_path;
        rc.output_dir = (g_root / out_name).string();
        static std::vector<std::unique_ptr<Trainer>> keepers;
        keepers.push_back(std::make_unique<Trainer>(rc));
        *out = keepers.back()->run();
        *keep = keepers.back().get();
    };

    TrainOutcome o1, o2;
    Trainer *t1 = nullptr, *t2 = nullptr;
    run_once("det_run1", &o1, &t1);
    run_once("det_run2", &o2, &t2);
    if (o1.total_trace != o2.total_trace)
        return {false, "loss traces differ between identical runs"};

    PreparedDataset test = prepare_dataset(ds.manifest_path, t1->config().model, "test", false);
    EvalReport live =
        evaluate_samples(t1->model(), test.samples, test.identities,
                         t1->config().config_hash());
    EvalReport restored = evaluate_checkpoint(o1.final_checkpoint, ds.manifest_path);
    if (live.rank1 != restored.rank1 || live.rank5 != restored.rank5 ||
        live.rank10 != restored.rank10 || live.map != restored.map ||
        live.config_hash != restored.config_hash)
        return {false, "restored checkpoint evaluates differently"};

    return {true, std::to_string(o1.total_trace.size()) +
                      " steps bitwise equal, restored eval identical (rank1 " +
                      fmt("%.3f", live.rank1) + ", mAP " + fmt("%.3f", live.map) + ")"};
}

// ---- criterion 9: default-config conformance ----

Outcome criterion_defaults() {
    RunConfig rc;
    struct NumCheck {
        const char* name;
        double got, want;
    };
    const NumCheck checks[] = {
        {"embed_dim", static_cast<double>(rc.model.embed_dim), 512},
        {"num_heads", static_cast<double>(rc.model.num_heads), 8},
        {"max_text_len", static_cast<double>(rc.model.max_text_len), 77},
        {"image_size", static_cast<double>(rc.model.image_size), 384},
        {"patch_size", static_cast<double>(rc.model.patch_size), 16},
        {"image_mask_ratio", rc.model.image_mask_ratio, 0.25},
        {"text_mask_ratio", rc.model.text_mask_ratio, 0.15},
        {"alpha", rc.model.alpha, 0.5},
        {"beta", rc.model.beta, 1.0},
        {"gamma", rc.model.gamma, 0.2},
        {"delta", rc.model.delta, 0.5},
        {"epochs", static_cast<double>(rc.epochs), 60},
        {"warmup_epochs", static_cast<double>(rc.warmup_epochs), 5},
        {"base_lr", rc.base_lr, 1e-5},
        {"module_lr", rc.module_lr, 5e-5},
        {"warmup_start_lr", rc.warmup_start_lr, 1e-6},
    };
    for (const auto& c : checks)
        if (c.got != c.want)
            return {false, std::string(c.name) + " = " + fmt("%.17g", c.got) + ", want " +
                               fmt("%.17g", c.want)};

    RunConfig back = RunConfig::parse(rc.serialize());
    if (back.serialize() != rc.serialize())
        return {false, "default config does not round-trip through its text form"};
    if (back.config_hash() != rc.config_hash())
        return {false, "default config hash unstable across round trip"};

    return {true, "16 constants exact, serialize/parse round trip stable"};
}

}  // namespace

int main() {
    g_root = fs::temp_directory_path() / "pfcvr_acceptance";
    fs::remove_all(g_root);
    fs::create_directories(g_root);

    struct Criterion {
        int id;
        const char* name;
        double budget_s;  // 0 = no pinned budget
        std::function<Outcome()> body;
    };
    const std::vector<Criterion> criteria = {
        {1, "loss oracle equivalence (tol 1e-9)", 10.0, criterion_losses},
        {2, "gradient suite (rel tol 1e-3)", 60.0, criterion_gradients},
        {3, "metric oracle agreement (tol 1e-12)", 0.0, criterion_metrics},
        {4, "mask-ratio exactness", 0.0, criterion_mask_plans},
        {5, "augmentation multiplicity", 0.0, criterion_augmentation},
        {6, "overfit one batch", 300.0, criterion_overfit},
        {7, "ablation direction over 3 seeds", 1800.0, criterion_ablation_direction},
        {8, "determinism and round trip", 0.0, criterion_determinism},
        {9, "default config conformance", 0.0, criterion_defaults},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        double start = now_s();
        Outcome out;
        try {
            out = c.body();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        double elapsed = now_s() - start;
        if (out.pass && c.budget_s > 0.0 && elapsed > c.budget_s) {
            out.pass = false;
            out.detail += " [over budget: " + fmt("%.1f", elapsed) + "s > " +
                          fmt("%.0f", c.budget_s) + "s]";
        }
        std::printf("criterion %d: %s  %s (%s, %.1fs)\n", c.id, out.pass ? "PASS" : "FAIL",
                    c.name, out.detail.c_str(), elapsed);
        std::fflush(stdout);
        if (!out.pass) ++failed;
    }

    if (failed == 0) {
        std::printf("acceptance: 9/9 criteria passed\n");
        fs::remove_all(g_root);
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED (artifacts in %s)\n", failed,
                g_root.string().c_str());
    return 1;
}
