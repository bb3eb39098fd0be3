#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pfcvr/matrix.hpp"

namespace pfcvr {

// Shortest round-trip decimal form (std::to_chars), so serialized configs are
// stable and parse back to the identical double.
inline std::string num_to_text(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// "key = value" lines; '#' starts a comment; duplicate keys rejected.
inline std::map<std::string, std::string> parse_flat_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        check(eq != std::string::npos, "config: malformed line (expected key = value): " + line);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        check(!key.empty(), "config: empty key");
        check(kv.find(key) == kv.end(), "config: duplicate key: " + key);
        kv[key] = val;
    }
    return kv;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        check(pos == v.size(), "config: trailing characters in value for " + key);
        return d;
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("config: invalid number for " + key + ": " + v);
    }
}

inline int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long d = std::stoll(v, &pos);
        check(pos == v.size(), "config: trailing characters in value for " + key);
        return static_cast<int>(d);
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("config: invalid integer for " + key + ": " + v);
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: invalid boolean for " + key + ": " + v);
}

}  // namespace detail

// Architecture and loss hyperparameters. Defaults follow the reference
// training recipe (512-dim, 8 heads, 384px images, 77-token text).
struct ModelConfig {
    int embed_dim = 512;
    int num_heads = 8;
    int num_parts = 6;
    int image_size = 384;
    int patch_size = 16;
    int max_text_len = 77;
    int vocab_size = 256;
    int num_encoder_layers = 2;
    int num_mim_decoder_layers = 3;
    double image_mask_ratio = 0.25;
    double text_mask_ratio = 0.15;
    double alpha = 0.5;   // ID loss weight
    double beta = 1.0;    // SDM loss weight
    double gamma = 0.2;   // ITC loss weight
    double delta = 0.5;   // BiIRR loss weight
    double temperature = 0.02;
    double itc_temperature = 0.0;  // 0 = share `temperature`
    bool learnable_temperature = false;

    int visual_tokens() const {
        int side = image_size / patch_size;
        return side * side;
    }
    int patch_dim() const { return patch_size * patch_size * 3; }
    int ffn_hidden() const { return 4 * embed_dim; }
    double itc_tau() const { return itc_temperature > 0.0 ? itc_temperature : temperature; }

    void validate() const {
        check(embed_dim > 0, "config: embed_dim must be positive");
        check(num_heads > 0, "config: num_heads must be positive");
        check(embed_dim % num_heads == 0, "config: embed_dim not divisible by num_heads");
        check(num_parts > 0, "config: num_parts must be positive");
        check(image_size > 0 && patch_size > 0, "config: image/patch size must be positive");
        check(image_size % patch_size == 0, "config: image_size not divisible by patch_size");
        check(max_text_len > 0, "config: max_text_len must be positive");
        check(vocab_size > 0, "config: vocab_size must be positive");
        check(num_encoder_layers > 0, "config: num_encoder_layers must be positive");
        check(num_mim_decoder_layers > 0, "config: num_mim_decoder_layers must be positive");
        check(image_mask_ratio >= 0.0 && image_mask_ratio < 1.0,
              "config: image_mask_ratio must be in [0,1)");
        check(text_mask_ratio >= 0.0 && text_mask_ratio < 1.0,
              "config: text_mask_ratio must be in [0,1)");
        check(alpha >= 0 && beta >= 0 && gamma >= 0 && delta >= 0,
              "config: loss weights must be non-negative");
        check(temperature > 0.0, "config: temperature must be positive");
        check(itc_temperature >= 0.0, "config: itc_temperature must be non-negative");
    }

    std::string serialize() const {
        std::ostringstream out;
        out << "embed_dim = " << embed_dim << "\n"
            << "num_heads = " << num_heads << "\n"
            << "num_parts = " << num_parts << "\n"
            << "image_size = " << image_size << "\n"
            << "patch_size = " << patch_size << "\n"
            << "max_text_len = " << max_text_len << "\n"
            << "vocab_size = " << vocab_size << "\n"
            << "num_encoder_layers = " << num_encoder_layers << "\n"
            << "num_mim_decoder_layers = " << num_mim_decoder_layers << "\n"
            << "image_mask_ratio = " << num_to_text(image_mask_ratio) << "\n"
            << "text_mask_ratio = " << num_to_text(text_mask_ratio) << "\n"
            << "alpha = " << num_to_text(alpha) << "\n"
            << "beta = " << num_to_text(beta) << "\n"
            << "gamma = " << num_to_text(gamma) << "\n"
            << "delta = " << num_to_text(delta) << "\n"
            << "temperature = " << num_to_text(temperature) << "\n"
            << "itc_temperature = " << num_to_text(itc_temperature) << "\n"
            << "learnable_temperature = " << (learnable_temperature ? "true" : "false") << "\n";
        return out.str();
    }

    // Applies `kv` onto this config, consuming recognized keys. Returns keys
    // it did not recognize so callers layering more fields can claim them.
    std::map<std::string, std::string> apply(std::map<std::string, std::string> kv) {
        auto take = [&kv](const char* key) {
            auto it = kv.find(key);
            if (it == kv.end()) return std::pair<bool, std::string>{false, ""};
            std::string v = it->second;
            kv.erase(it);
            return std::pair<bool, std::string>{true, v};
        };
        using detail::to_bool;
        using detail::to_double;
        using detail::to_int;
        if (auto [ok, v] = take("embed_dim"); ok) embed_dim = to_int("embed_dim", v);
        if (auto [ok, v] = take("num_heads"); ok) num_heads = to_int("num_heads", v);
        if (auto [ok, v] = take("num_parts"); ok) num_parts = to_int("num_parts", v);
        if (auto [ok, v] = take("image_size"); ok) image_size = to_int("image_size", v);
        if (auto [ok, v] = take("patch_size"); ok) patch_size = to_int("patch_size", v);
        if (auto [ok, v] = take("max_text_len"); ok) max_text_len = to_int("max_text_len", v);
        if (auto [ok, v] = take("vocab_size"); ok) vocab_size = to_int("vocab_size", v);
        if (auto [ok, v] = take("num_encoder_layers"); ok)
            num_encoder_layers = to_int("num_encoder_layers", v);
        if (auto [ok, v] = take("num_mim_decoder_layers"); ok)
            num_mim_decoder_layers = to_int("num_mim_decoder_layers", v);
        if (auto [ok, v] = take("image_mask_ratio"); ok)
            image_mask_ratio = to_double("image_mask_ratio", v);
        if (auto [ok, v] = take("text_mask_ratio"); ok)
            text_mask_ratio = to_double("text_mask_ratio", v);
        if (auto [ok, v] = take("alpha"); ok) alpha = to_double("alpha", v);
        if (auto [ok, v] = take("beta"); ok) beta = to_double("beta", v);
        if (auto [ok, v] = take("gamma"); ok) gamma = to_double("gamma", v);
        if (auto [ok, v] = take("delta"); ok) delta = to_double("delta", v);
        if (auto [ok, v] = take("temperature"); ok) temperature = to_double("temperature", v);
        if (auto [ok, v] = take("itc_temperature"); ok)
            itc_temperature = to_double("itc_temperature", v);
        if (auto [ok, v] = take("learnable_temperature"); ok)
            learnable_temperature = to_bool("learnable_temperature", v);
        return kv;
    }

    static ModelConfig parse(const std::string& text) {
        ModelConfig cfg;
        auto rest = cfg.apply(detail::parse_flat_kv(text));
        check(rest.empty(), rest.empty() ? "" : "config: unknown key: " + rest.begin()->first);
        cfg.validate();
        return cfg;
    }

    // Desk-scale preset used by CI and the ablation smoke runs.
    static ModelConfig smoke() {
        ModelConfig cfg;
        cfg.embed_dim = 32;
        cfg.num_heads = 8;
        cfg.image_size = 64;
        cfg.patch_size = 8;
        cfg.num_encoder_layers = 2;
        cfg.num_mim_decoder_layers = 2;
        return cfg;
    }
};

// Full training run description: model + optimizer schedule + data wiring.
struct RunConfig {
    ModelConfig model;
    double base_lr = 1e-5;          // backbone encoders
    double module_lr = 5e-5;        // randomly initialized modules
    double warmup_start_lr = 1e-6;  // linear warmup origin
    int warmup_epochs = 5;
    int epochs = 60;
    int batch_identities = 4;  // P
    int batch_instances = 2;   // M
    uint64_t seed = 0;
    bool augment = false;
    bool enable_plfa = true;
    bool enable_bmria = true;
    std::string manifest;
    std::string output_dir;

    void validate() const {
        model.validate();
        check(base_lr > 0 && module_lr > 0 && warmup_start_lr > 0,
              "config: learning rates must be positive");
        check(warmup_epochs >= 0, "config: warmup_epochs must be non-negative");
        check(epochs > 0, "config: epochs must be positive");
        check(batch_identities >= 2, "config: batch_identities must be >= 2");
        check(batch_instances >= 1, "config: batch_instances must be >= 1");
    }

    std::string serialize() const {
        std::ostringstream out;
        out << model.serialize()
            << "base_lr = " << num_to_text(base_lr) << "\n"
            << "module_lr = " << num_to_text(module_lr) << "\n"
            << "warmup_start_lr = " << num_to_text(warmup_start_lr) << "\n"
            << "warmup_epochs = " << warmup_epochs << "\n"
            << "epochs = " << epochs << "\n"
            << "batch_identities = " << batch_identities << "\n"
            << "batch_instances = " << batch_instances << "\n"
            << "seed = " << seed << "\n"
            << "augment = " << (augment ? "true" : "false") << "\n"
            << "enable_plfa = " << (enable_plfa ? "true" : "false") << "\n"
            << "enable_bmria = " << (enable_bmria ? "true" : "false") << "\n"
            << "manifest = " << manifest << "\n"
            << "output_dir = " << output_dir << "\n";
        return out.str();
    }

    static RunConfig parse(const std::string& text) {
        RunConfig cfg;
        auto kv = cfg.model.apply(detail::parse_flat_kv(text));
        auto take = [&kv](const char* key) {
            auto it = kv.find(key);
            if (it == kv.end()) return std::pair<bool, std::string>{false, ""};
            std::string v = it->second;
            kv.erase(it);
            return std::pair<bool, std::string>{true, v};
        };
        using detail::to_bool;
        using detail::to_double;
        using detail::to_int;
        if (auto [ok, v] = take("base_lr"); ok) cfg.base_lr = to_double("base_lr", v);
        if (auto [ok, v] = take("module_lr"); ok) cfg.module_lr = to_double("module_lr", v);
        if (auto [ok, v] = take("warmup_start_lr"); ok)
            cfg.warmup_start_lr = to_double("warmup_start_lr", v);
        if (auto [ok, v] = take("warmup_epochs"); ok)
            cfg.warmup_epochs = to_int("warmup_epochs", v);
        if (auto [ok, v] = take("epochs"); ok) cfg.epochs = to_int("epochs", v);
        if (auto [ok, v] = take("batch_identities"); ok)
            cfg.batch_identities = to_int("batch_identities", v);
        if (auto [ok, v] = take("batch_instances"); ok)
            cfg.batch_instances = to_int("batch_instances", v);
        if (auto [ok, v] = take("seed"); ok)
            cfg.seed = static_cast<uint64_t>(std::stoull(v));
        if (auto [ok, v] = take("augment"); ok) cfg.augment = to_bool("augment", v);
        if (auto [ok, v] = take("enable_plfa"); ok) cfg.enable_plfa = to_bool("enable_plfa", v);
        if (auto [ok, v] = take("enable_bmria"); ok)
            cfg.enable_bmria = to_bool("enable_bmria", v);
        if (auto [ok, v] = take("manifest"); ok) cfg.manifest = v;
        if (auto [ok, v] = take("output_dir"); ok) cfg.output_dir = v;
        check(kv.empty(), kv.empty() ? "" : "config: unknown key: " + kv.begin()->first);
        cfg.validate();
        return cfg;
    }

    // Fingerprint over model + training hyperparameters. Filesystem locations
    // are excluded so moving a run directory does not orphan its artifacts.
    std::string config_hash() const {
        std::ostringstream out;
        out << model.serialize()
            << "base_lr = " << num_to_text(base_lr) << "\n"
            << "module_lr = " << num_to_text(module_lr) << "\n"
            << "warmup_start_lr = " << num_to_text(warmup_start_lr) << "\n"
            << "warmup_epochs = " << warmup_epochs << "\n"
            << "epochs = " << epochs << "\n"
            << "batch_identities = " << batch_identities << "\n"
            << "batch_instances = " << batch_instances << "\n"
            << "seed = " << seed << "\n"
            << "augment = " << (augment ? "true" : "false") << "\n"
            << "enable_plfa = " << (enable_plfa ? "true" : "false") << "\n"
            << "enable_bmria = " << (enable_bmria ? "true" : "false") << "\n";
        uint64_t h = fnv1a64(out.str());
        char buf[17];
        snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return std::string(buf);
    }
};

}  // namespace pfcvr
