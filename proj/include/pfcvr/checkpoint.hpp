#pragma once

#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pfcvr/autograd.hpp"

namespace pfcvr {

// Checkpoints are raw little-endian dumps for bitwise round-trips on one
// machine; doubles are stored as their in-memory bytes, never formatted.
namespace ckpt_detail {

inline void put_i64(std::ofstream& out, long long v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void put_str(std::ofstream& out, const std::string& s) {
    put_i64(out, static_cast<long long>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void put_mat(std::ofstream& out, const Mat& m) {
    put_i64(out, m.rows);
    put_i64(out, m.cols);
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
}

inline long long get_i64(std::ifstream& in) {
    long long v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    check(in.good(), "checkpoint: truncated file");
    return v;
}

inline std::string get_str(std::ifstream& in) {
    long long n = get_i64(in);
    check(n >= 0 && n < (1ll << 32), "checkpoint: bad string length");
    std::string s(static_cast<size_t>(n), '\0');
    in.read(s.data(), n);
    check(in.good(), "checkpoint: truncated string");
    return s;
}

inline Mat get_mat(std::ifstream& in) {
    long long r = get_i64(in), c = get_i64(in);
    check(r >= 0 && c >= 0 && r * c < (1ll << 34), "checkpoint: bad matrix shape");
    Mat m(static_cast<int>(r), static_cast<int>(c));
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    check(in.good() || in.eof(), "checkpoint: truncated matrix");
    check(static_cast<size_t>(in.gcount()) == m.size() * sizeof(double),
          "checkpoint: truncated matrix");
    return m;
}

constexpr char kMagic[9] = "PFCVRCK1";

}  // namespace ckpt_detail

struct CheckpointMeta {
    std::string config_text;
    std::string config_hash;
    long long epoch = 0;
    long long global_step = 0;
    std::vector<std::pair<int, int>> label_map;  // identity -> class index
};

inline void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                            const std::vector<Param*>& params) {
    using namespace ckpt_detail;
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "save_checkpoint: cannot open " + path);
    out.write(kMagic, 8);
    put_str(out, meta.config_text);
    put_str(out, meta.config_hash);
    put_i64(out, meta.epoch);
    put_i64(out, meta.global_step);
    put_i64(out, static_cast<long long>(meta.label_map.size()));
    for (const auto& [identity, cls] : meta.label_map) {
        put_i64(out, identity);
        put_i64(out, cls);
    }
    put_i64(out, static_cast<long long>(params.size()));
    for (const Param* p : params) {
        put_str(out, p->name);
        put_i64(out, p->group);
        put_i64(out, p->adam_t);
        put_mat(out, p->value);
        put_mat(out, p->m);
        put_mat(out, p->v);
    }
    check(out.good(), "save_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    CheckpointMeta meta;
    struct Entry {
        int group = 0;
        long long adam_t = 0;
        Mat value, m, v;
    };
    std::map<std::string, Entry> params;

    // Strict: every model parameter must be present with matching shape and
    // group, and the checkpoint must carry nothing else.
    void apply_to(const std::vector<Param*>& model_params) const {
        check(model_params.size() == params.size(),
              "checkpoint: parameter count mismatch (model " +
                  std::to_string(model_params.size()) + ", file " +
                  std::to_string(params.size()) + ")");
        for (Param* p : model_params) {
            auto it = params.find(p->name);
            check(it != params.end(), "checkpoint: missing parameter " + p->name);
            const Entry& e = it->second;
            check(e.value.same_shape(p->value), "checkpoint: shape mismatch for " + p->name);
            check(e.group == p->group, "checkpoint: group mismatch for " + p->name);
            p->value = e.value;
            p->m = e.m;
            p->v = e.v;
            p->adam_t = e.adam_t;
        }
    }
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    using namespace ckpt_detail;
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    check(in.good() && std::string(magic, 8) == std::string(kMagic, 8),
          "load_checkpoint: bad magic in " + path);
    LoadedCheckpoint ck;
    ck.meta.config_text = get_str(in);
    ck.meta.config_hash = get_str(in);
    ck.meta.epoch = get_i64(in);
    ck.meta.global_step = get_i64(in);
    long long n_labels = get_i64(in);
    check(n_labels >= 0, "load_checkpoint: bad label count");
    for (long long i = 0; i < n_labels; ++i) {
        long long identity = get_i64(in), cls = get_i64(in);
        ck.meta.label_map.emplace_back(static_cast<int>(identity), static_cast<int>(cls));
    }
    long long n_params = get_i64(in);
    check(n_params >= 0, "load_checkpoint: bad param count");
    for (long long i = 0; i < n_params; ++i) {
        std::string name = get_str(in);
        LoadedCheckpoint::Entry e;
        e.group = static_cast<int>(get_i64(in));
        e.adam_t = get_i64(in);
        e.value = get_mat(in);
        e.m = get_mat(in);
        e.v = get_mat(in);
        check(ck.params.emplace(name, std::move(e)).second,
              "load_checkpoint: duplicate parameter " + name);
    }
    return ck;
}

}  // namespace pfcvr
