// Command-line front end: dataset generation, training, retrieval evaluation,
// and the four-arm ablation smoke run.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <pfcvr/pfcvr.hpp>

namespace fs = std::filesystem;
using namespace pfcvr;

namespace {

// Relative output paths land under $PFCVR_OUTPUT_ROOT when it is set.
std::string resolve_output(const std::string& path) {
    if (path.empty()) return path;
    const char* root = std::getenv("PFCVR_OUTPUT_ROOT");
    if (!root || !*root) return path;
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(root) / p).string();
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot open " + path + " for writing");
    out << text;
    check(out.good(), "write failed: " + path);
}

struct GenerateArgs {
    int ids = 0;
    int images_per_id = 0;
    uint64_t seed = 0;
    int image_size = 64;
    std::string out;
    bool augment = false;
};

int cmd_generate(const GenerateArgs& a) {
    DatasetOptions opts;
    opts.num_ids = a.ids;
    opts.images_per_id = a.images_per_id;
    opts.seed = a.seed;
    opts.image_size = a.image_size;
    opts.out_dir = resolve_output(a.out);
    GeneratedDataset ds = generate_dataset(opts);

    int train_n = 0, test_n = 0;
    for (const auto& r : ds.records) (r.split == "train" ? train_n : test_n)++;
    std::cout << "manifest: " << ds.manifest_path << "\n"
              << "identities: " << a.ids << "  train records: " << train_n
              << "  test records: " << test_n << "\n";

    if (a.augment) {
        auto expanded = augment_manifest(ds.records, ds.manifest_path, mix_seed(a.seed, 0x617567));
        std::string aug_path = (fs::path(opts.out_dir) / "manifest_augmented.jsonl").string();
        write_manifest(expanded, aug_path);
        std::cout << "augmented manifest: " << aug_path << " (" << expanded.size()
                  << " records)\n";
    }
    return 0;
}

// Option handles for everything that layers on top of a config file. Only
// flags the user actually passed override the file (checked via count()).
struct RunConfigOpts {
    RunConfig values;
    bool full_scale = false;
    std::string config_file;

    CLI::Option* embed_dim = nullptr;
    CLI::Option* num_heads = nullptr;
    CLI::Option* image_size = nullptr;
    CLI::Option* patch_size = nullptr;
    CLI::Option* max_text_len = nullptr;
    CLI::Option* encoder_layers = nullptr;
    CLI::Option* mim_layers = nullptr;
    CLI::Option* image_mask_ratio = nullptr;
    CLI::Option* text_mask_ratio = nullptr;
    CLI::Option* alpha = nullptr;
    CLI::Option* beta = nullptr;
    CLI::Option* gamma = nullptr;
    CLI::Option* delta = nullptr;
    CLI::Option* temperature = nullptr;
    CLI::Option* itc_temperature = nullptr;
    CLI::Option* learnable_tau = nullptr;
    CLI::Option* base_lr = nullptr;
    CLI::Option* module_lr = nullptr;
    CLI::Option* warmup_start_lr = nullptr;
    CLI::Option* warmup_epochs = nullptr;
    CLI::Option* epochs = nullptr;
    CLI::Option* batch_p = nullptr;
    CLI::Option* batch_m = nullptr;
    CLI::Option* seed = nullptr;
    CLI::Option* augment = nullptr;
    CLI::Option* no_plfa = nullptr;
    CLI::Option* no_bmria = nullptr;
    CLI::Option* manifest = nullptr;
    CLI::Option* out = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "config file (as written to a run directory)");
        cmd->add_flag("--full", full_scale,
                      "full-scale architecture defaults instead of the desk-scale preset");
        auto& v = values;
        embed_dim = cmd->add_option("--embed-dim", v.model.embed_dim, "embedding width");
        num_heads = cmd->add_option("--heads", v.model.num_heads, "attention heads");
        image_size = cmd->add_option("--image-size", v.model.image_size, "input image side");
        patch_size = cmd->add_option("--patch-size", v.model.patch_size, "patch side");
        max_text_len = cmd->add_option("--max-text-len", v.model.max_text_len, "token budget");
        encoder_layers =
            cmd->add_option("--encoder-layers", v.model.num_encoder_layers, "encoder depth");
        mim_layers = cmd->add_option("--mim-decoder-layers", v.model.num_mim_decoder_layers,
                                     "image recovery decoder depth");
        image_mask_ratio =
            cmd->add_option("--image-mask-ratio", v.model.image_mask_ratio, "patch mask ratio");
        text_mask_ratio =
            cmd->add_option("--text-mask-ratio", v.model.text_mask_ratio, "token mask ratio");
        alpha = cmd->add_option("--alpha", v.model.alpha, "identity loss weight");
        beta = cmd->add_option("--beta", v.model.beta, "similarity distribution loss weight");
        gamma = cmd->add_option("--gamma", v.model.gamma, "part contrastive loss weight");
        delta = cmd->add_option("--delta", v.model.delta, "reconstruction loss weight");
        temperature = cmd->add_option("--temperature", v.model.temperature, "softmax temperature");
        itc_temperature = cmd->add_option("--itc-temperature", v.model.itc_temperature,
                                          "separate part-contrastive temperature (0 = shared)");
        learnable_tau = cmd->add_flag("--learnable-temperature", v.model.learnable_temperature,
                                      "learn the temperature");
        base_lr = cmd->add_option("--base-lr", v.base_lr, "backbone learning rate");
        module_lr = cmd->add_option("--module-lr", v.module_lr, "new-module learning rate");
        warmup_start_lr =
            cmd->add_option("--warmup-start-lr", v.warmup_start_lr, "warmup origin");
        warmup_epochs = cmd->add_option("--warmup-epochs", v.warmup_epochs, "warmup span");
        epochs = cmd->add_option("--epochs", v.epochs, "training epochs");
        batch_p = cmd->add_option("--batch-p", v.batch_identities, "identities per batch");
        batch_m = cmd->add_option("--batch-m", v.batch_instances, "instances per identity");
        seed = cmd->add_option("--seed", v.seed, "run seed");
        augment = cmd->add_flag("--augment", v.augment, "4x train-set augmentation");
        no_plfa = cmd->add_flag("--no-plfa", "disable part-query alignment");
        no_bmria = cmd->add_flag("--no-bmria", "disable masked reconstruction");
        manifest = cmd->add_option("--manifest", v.manifest, "dataset manifest");
        out = cmd->add_option("--out", v.output_dir, "run output directory");
    }

    // Layering: desk-scale preset (or --full) -> --config file -> explicit flags.
    RunConfig build() const {
        RunConfig rc;
        if (!full_scale) rc.model = ModelConfig::smoke();
        if (!config_file.empty()) rc = RunConfig::parse(read_text_file(config_file));
        const auto& v = values;
        if (embed_dim->count()) rc.model.embed_dim = v.model.embed_dim;
        if (num_heads->count()) rc.model.num_heads = v.model.num_heads;
        if (image_size->count()) rc.model.image_size = v.model.image_size;
        if (patch_size->count()) rc.model.patch_size = v.model.patch_size;
        if (max_text_len->count()) rc.model.max_text_len = v.model.max_text_len;
        if (encoder_layers->count()) rc.model.num_encoder_layers = v.model.num_encoder_layers;
        if (mim_layers->count()) rc.model.num_mim_decoder_layers = v.model.num_mim_decoder_layers;
        if (image_mask_ratio->count()) rc.model.image_mask_ratio = v.model.image_mask_ratio;
        if (text_mask_ratio->count()) rc.model.text_mask_ratio = v.model.text_mask_ratio;
        if (alpha->count()) rc.model.alpha = v.model.alpha;
        if (beta->count()) rc.model.beta = v.model.beta;
        if (gamma->count()) rc.model.gamma = v.model.gamma;
        if (delta->count()) rc.model.delta = v.model.delta;
        if (temperature->count()) rc.model.temperature = v.model.temperature;
        if (itc_temperature->count()) rc.model.itc_temperature = v.model.itc_temperature;
        if (learnable_tau->count()) rc.model.learnable_temperature = true;
        if (base_lr->count()) rc.base_lr = v.base_lr;
        if (module_lr->count()) rc.module_lr = v.module_lr;
        if (warmup_start_lr->count()) rc.warmup_start_lr = v.warmup_start_lr;
        if (warmup_epochs->count()) rc.warmup_epochs = v.warmup_epochs;
        if (epochs->count()) rc.epochs = v.epochs;
        if (batch_p->count()) rc.batch_identities = v.batch_identities;
        if (batch_m->count()) rc.batch_instances = v.batch_instances;
        if (seed->count()) rc.seed = v.seed;
        if (augment->count()) rc.augment = true;
        if (no_plfa->count()) rc.enable_plfa = false;
        if (no_bmria->count()) rc.enable_bmria = false;
        if (manifest->count()) rc.manifest = v.manifest;
        if (out->count()) rc.output_dir = v.output_dir;
        rc.output_dir = resolve_output(rc.output_dir);
        return rc;
    }
};

struct TrainArgs {
    int overfit_steps = 0;
    int overfit_batch = 4;
    std::string resume_from;
    bool progress = false;
};

int cmd_train(const RunConfigOpts& cfg_opts, const TrainArgs& a) {
    RunConfig rc = cfg_opts.build();
    check(!rc.manifest.empty(), "train: --manifest required");
    check(!rc.output_dir.empty(), "train: --out required");
    rc.validate();

    fs::create_directories(rc.output_dir);
    write_text_file((fs::path(rc.output_dir) / "config.txt").string(), rc.serialize());
    std::cout << "config hash: " << rc.config_hash() << "\n";

    TrainOptions opts;
    opts.overfit_steps = a.overfit_steps;
    opts.overfit_batch = a.overfit_batch;
    opts.resume_from = a.resume_from;
    opts.echo_progress = a.progress;

    Trainer trainer(rc);
    TrainOutcome outcome = trainer.run(opts);
    std::cout << "steps: " << outcome.steps << "\n"
              << "final total loss: " << outcome.total_trace.back() << "\n"
              << "log: " << outcome.log_path << "\n"
              << "checkpoint: " << outcome.final_checkpoint << "\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string manifest;
    std::string out = "eval_report.json";
    std::string config_file;
    bool force = false;
};

int cmd_eval(const EvalArgs& a) {
    RestoredModel rm = restore_model(a.checkpoint);
    if (!a.config_file.empty()) {
        RunConfig given = RunConfig::parse(read_text_file(a.config_file));
        if (given.config_hash() != rm.meta.config_hash) {
            std::string msg = "config hash mismatch: checkpoint " + rm.meta.config_hash +
                              " vs --config " + given.config_hash();
            check(a.force, msg + " (pass --force to evaluate anyway)");
            std::cerr << "warning: " << msg << "\n";
        }
    }
    PreparedDataset test =
        prepare_dataset(a.manifest, rm.rc.model, "test", /*with_part_texts=*/false);
    EvalReport report =
        evaluate_samples(*rm.model, test.samples, test.identities, rm.meta.config_hash);

    std::string out_path = resolve_output(a.out);
    report.write(out_path);
    std::cout << "queries: " << report.queries << "  gallery: " << report.gallery << "\n"
              << "rank1: " << report.rank1 << "  rank5: " << report.rank5
              << "  rank10: " << report.rank10 << "  mAP: " << report.map << "\n"
              << "report: " << out_path << "\n";
    return 0;
}

struct AblateArgs {
    std::string manifest;
    std::string out;
    int ids = 12;
    int images_per_id = 0;
    uint64_t seed = 7;
    int epochs = 6;
    double base_lr = 1e-3;
    double module_lr = 3e-3;
    bool full_scale = false;
};

int cmd_ablate(const AblateArgs& a) {
    check(!a.out.empty(), "ablate: --out required");
    std::string out_dir = resolve_output(a.out);
    fs::create_directories(out_dir);

    RunConfig base;
    if (!a.full_scale) base.model = ModelConfig::smoke();
    base.epochs = a.epochs;
    base.base_lr = a.base_lr;
    base.module_lr = a.module_lr;
    base.warmup_epochs = std::min(base.warmup_epochs, std::max(a.epochs / 2, 1));
    base.seed = a.seed;

    std::string manifest = a.manifest;
    if (manifest.empty()) {
        DatasetOptions dopts;
        dopts.num_ids = a.ids;
        dopts.images_per_id = a.images_per_id;
        dopts.seed = a.seed;
        dopts.image_size = base.model.image_size;
        dopts.out_dir = (fs::path(out_dir) / "data").string();
        manifest = generate_dataset(dopts).manifest_path;
        std::cout << "generated dataset: " << manifest << "\n";
    }
    base.manifest = manifest;

    struct Arm {
        const char* name;
        bool plfa, bmria, augment;
    };
    // Row order mirrors the ablation table: each arm adds one piece.
    const Arm arms[] = {
        {"baseline", false, false, false},
        {"plfa", true, false, false},
        {"plfa_bmria", true, true, false},
        {"plfa_bmria_augment", true, true, true},
    };

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::vector<std::string> hashes;
    for (const Arm& arm : arms) {
        RunConfig rc = base;
        rc.enable_plfa = arm.plfa;
        rc.enable_bmria = arm.bmria;
        rc.augment = arm.augment;
        rc.output_dir = (fs::path(out_dir) / arm.name).string();
        fs::create_directories(rc.output_dir);
        write_text_file((fs::path(rc.output_dir) / "config.txt").string(), rc.serialize());

        std::cout << "arm " << arm.name << " (hash " << rc.config_hash() << ") ..." << std::flush;
        Trainer trainer(rc);
        TrainOutcome outcome = trainer.run();
        EvalReport report = evaluate_checkpoint(outcome.final_checkpoint, manifest);
        std::cout << " rank1 " << report.rank1 << "\n";

        nlohmann::ordered_json row;
        row["arm"] = arm.name;
        row["config_hash"] = rc.config_hash();
        row["rank1"] = report.rank1;
        row["rank5"] = report.rank5;
        row["rank10"] = report.rank10;
        row["map"] = report.map;
        row["queries"] = report.queries;
        row["gallery"] = report.gallery;
        rows.push_back(row);
        hashes.push_back(rc.config_hash());
    }
    for (size_t i = 0; i < hashes.size(); ++i)
        for (size_t j = i + 1; j < hashes.size(); ++j)
            check(hashes[i] != hashes[j], "ablate: config hashes collide across arms");

    std::string report_path = (fs::path(out_dir) / "ablation_report.json").string();
    write_text_file(report_path, rows.dump(2) + "\n");

    std::cout << "\n" << std::left;
    std::cout.width(22);
    std::cout << "arm";
    for (const char* col : {"rank1", "rank5", "rank10", "mAP"}) {
        std::cout.width(10);
        std::cout << col;
    }
    std::cout << "config_hash\n";
    for (const auto& row : rows) {
        std::cout.width(22);
        std::cout << row["arm"].get<std::string>();
        for (const char* col : {"rank1", "rank5", "rank10", "map"}) {
            std::cout.width(10);
            std::cout << row[col].get<double>();
        }
        std::cout << row["config_hash"].get<std::string>() << "\n";
    }
    std::cout << "report: " << report_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"part-aware text-to-image vehicle retrieval toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* cmd_gen = app.add_subcommand("generate", "emit a synthetic part-annotated dataset");
    cmd_gen->add_option("--ids", gen.ids, "number of vehicle identities (>= 2)")->required();
    cmd_gen->add_option("--images-per-id", gen.images_per_id,
                        "instances per identity (0 = sampled 2-5)");
    cmd_gen->add_option("--seed", gen.seed, "generator seed");
    cmd_gen->add_option("--image-size", gen.image_size, "rendered image side");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();
    cmd_gen->add_flag("--augment", gen.augment, "also write a 4x-augmented train manifest");

    RunConfigOpts train_cfg;
    TrainArgs train_args;
    auto* cmd_tr = app.add_subcommand("train", "train a retrieval model");
    train_cfg.attach(cmd_tr);
    cmd_tr->add_option("--overfit-one-batch", train_args.overfit_steps,
                       "memorize one batch for N steps at constant lr");
    cmd_tr->add_option("--overfit-batch", train_args.overfit_batch,
                       "samples in the overfit batch");
    cmd_tr->add_option("--resume", train_args.resume_from, "checkpoint to resume from");
    cmd_tr->add_flag("--progress", train_args.progress, "echo per-step losses");

    EvalArgs eval_args;
    auto* cmd_ev = app.add_subcommand("eval", "score text-to-image retrieval on the test split");
    cmd_ev->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint")->required();
    cmd_ev->add_option("--manifest", eval_args.manifest, "dataset manifest")->required();
    cmd_ev->add_option("--out", eval_args.out, "report path (default eval_report.json)");
    cmd_ev->add_option("--config", eval_args.config_file, "config file to hash-check against");
    cmd_ev->add_flag("--force", eval_args.force, "evaluate despite a config hash mismatch");

    AblateArgs ab;
    auto* cmd_ab = app.add_subcommand("ablate", "run the four-arm component ablation");
    cmd_ab->add_option("--manifest", ab.manifest, "existing manifest (default: generate one)");
    cmd_ab->add_option("--out", ab.out, "output directory")->required();
    cmd_ab->add_option("--ids", ab.ids, "identities when generating");
    cmd_ab->add_option("--images-per-id", ab.images_per_id, "instances per identity");
    cmd_ab->add_option("--seed", ab.seed, "shared seed for data and all arms");
    cmd_ab->add_option("--epochs", ab.epochs, "epochs per arm");
    cmd_ab->add_option("--base-lr", ab.base_lr, "backbone learning rate");
    cmd_ab->add_option("--module-lr", ab.module_lr, "new-module learning rate");
    cmd_ab->add_flag("--full", ab.full_scale, "full-scale architecture");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gen->parsed()) return cmd_generate(gen);
        if (cmd_tr->parsed()) return cmd_train(train_cfg, train_args);
        if (cmd_ev->parsed()) return cmd_eval(eval_args);
        if (cmd_ab->parsed()) return cmd_ablate(ab);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
