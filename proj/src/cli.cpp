// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "nbfusion/ablation.hpp"
#include "nbfusion/checkpoint.hpp"
#include "nbfusion/embedding_io.hpp"
#include "nbfusion/errors.hpp"
#include "nbfusion/model.hpp"

namespace nbf {

namespace {

namespace fs = std::filesystem;

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

EmbeddingDataset load_dataset(const std::string& data_dir, std::uint32_t d_i, std::uint32_t d_t,
                              std::size_t classes) {
    const EmbeddingDims expected{d_i, d_t};
    auto train = load_embeddings((fs::path(data_dir) / "train.nbemb").string(), expected);
    auto val = load_embeddings((fs::path(data_dir) / "val.nbemb").string(), expected);
    return EmbeddingDataset::from_records(std::move(train), std::move(val), d_i, d_t, classes);
}

struct CommonOpts {
    std::string config_path;
    RunConfig resolve() const {
        return config_path.empty() ? RunConfig{} : parse_config_file(config_path);
    }
};

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir, std::ostream& out) {
    ensure_dir(out_dir);
    const SynthDataset ds = generate(cfg.synth);
    const fs::path dir(out_dir);
    save_embeddings((dir / "train.nbemb").string(), ds.train, static_cast<std::uint32_t>(cfg.synth.d_i),
                    static_cast<std::uint32_t>(cfg.synth.d_t));
    save_embeddings((dir / "val.nbemb").string(), ds.val, static_cast<std::uint32_t>(cfg.synth.d_i),
                    static_cast<std::uint32_t>(cfg.synth.d_t));
    std::size_t corrupted = 0;
    for (const auto* split : {&ds.train, &ds.val}) {
        for (const EmbeddingRecord& rec : *split) corrupted += rec.noisy ? 1 : 0;
    }
    write_text_file(dir / "manifest.txt",
                    render_manifest(cfg.synth, ds.train.size(), ds.val.size(), corrupted));
    out << "wrote " << ds.train.size() << " train / " << ds.val.size() << " val records to " << out_dir
        << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    if (cfg.data_dir.empty()) throw ConfigError("train: --data is required");
    if (cfg.out_dir.empty()) throw ConfigError("train: --out is required");
    ensure_dir(cfg.out_dir);

    EmbeddingDataset data =
        load_dataset(cfg.data_dir, static_cast<std::uint32_t>(cfg.synth.d_i),
                     static_cast<std::uint32_t>(cfg.synth.d_t), cfg.synth.classes);
    if (cfg.ablation.precorrupt_text_level > 0.0) {
        precorrupt_text(data, cfg.ablation.precorrupt_text_level, cfg.synth.seed);
    }

    PrmfConfig mcfg;
    mcfg.d_i = cfg.synth.d_i;
    mcfg.d_t = cfg.synth.d_t;
    mcfg.classes = cfg.synth.classes;
    mcfg.separate_image_head = cfg.separate_image_head;
    FusionClassifier model(mcfg, cfg.ablation, cfg.train.seed);

    const std::string resolved = render_config(cfg);
    write_text_file(fs::path(cfg.out_dir) / "config.txt", resolved);

    const TrainResult result = train_classifier(model, data, cfg.train, cfg.resolved_schedule());
    std::string log_text;
    for (const EpochRecord& rec : result.log) {
        const std::string line = rec.to_line();
        out << line << "\n";
        log_text += line + "\n";
    }
    write_text_file(fs::path(cfg.out_dir) / "log.txt", log_text);

    model.save((fs::path(cfg.out_dir) / "model.nbck").string(), digest_hex(resolved));

    const EvalResult eval = evaluate_classifier(model, data.val);
    write_text_file(fs::path(cfg.out_dir) / "metrics.txt", eval.report.to_record());
    out << eval.report.to_record();
    if (eval.has_alpha) {
        out << "mean_alpha_clean=" << eval.mean_alpha_clean
            << " mean_alpha_noisy=" << eval.mean_alpha_noisy << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& out_dir,
             const std::string& split, std::ostream& out) {
    FusionClassifier model = FusionClassifier::load(checkpoint);
    EmbeddingDataset data = load_dataset(data_dir, static_cast<std::uint32_t>(model.config().d_i),
                                         static_cast<std::uint32_t>(model.config().d_t),
                                         model.config().classes);
    if (model.flags().precorrupt_text_level > 0.0) {
        precorrupt_text(data, model.flags().precorrupt_text_level, 0);
    }
    const auto& records = split == "train" ? data.train : data.val;
    const EvalResult eval = evaluate_classifier(model, records);
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_text_file(fs::path(out_dir) / "metrics.txt", eval.report.to_record());
    }
    out << eval.report.to_record();
    if (eval.has_alpha) {
        out << "mean_alpha_clean=" << eval.mean_alpha_clean
            << " mean_alpha_noisy=" << eval.mean_alpha_noisy << "\n";
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double eps, double tolerance, std::size_t max_coords,
                  std::ostream& out) {
    GradCheckOptions opts;
    opts.eps = eps;
    opts.tolerance = tolerance;
    opts.max_coords_per_param = max_coords;
    const GradCheckReport report = verify_full_model_gradients(seed, opts);
    out << report.to_string();
    return report.pass ? 0 : 1;
}

int cmd_ablate(const RunConfig& cfg, std::size_t seeds, std::size_t jobs, std::ostream& out) {
    const AblationResult result = run_ablation_suite(cfg, seeds, jobs);
    out << result.table_text;
    if (!cfg.out_dir.empty()) {
        ensure_dir(cfg.out_dir);
        write_text_file(fs::path(cfg.out_dir) / "ablation.txt", result.table_text);
        write_text_file(fs::path(cfg.out_dir) / "config.txt", render_config(cfg));
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal fusion training and evaluation toolkit"};
    app.require_subcommand(1);

    CommonOpts common;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic embedding dataset");
    std::string gen_out;
    std::optional<std::uint64_t> gen_seed;
    std::optional<std::size_t> gen_spc;
    std::optional<double> gen_noise_rate, gen_noise_level, gen_delta_img, gen_delta_txt, gen_sigma;
    gen->add_option("--config", common.config_path, "Run configuration file");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--samples-per-class", gen_spc, "Samples per class");
    gen->add_option("--noise-rate", gen_noise_rate, "Fraction of corrupted text vectors");
    gen->add_option("--noise-level", gen_noise_level, "Corruption strength for that fraction");
    gen->add_option("--delta-img", gen_delta_img, "Image-space class separation");
    gen->add_option("--delta-txt", gen_delta_txt, "Text-space class separation");
    gen->add_option("--sigma", gen_sigma, "Within-class standard deviation");

    // train
    auto* train = app.add_subcommand("train", "Train a fusion model on an embedding dataset");
    std::string train_data, train_out;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::size_t> train_epochs, train_batch;
    std::optional<double> train_lr;
    bool fl_no_text = false, fl_no_visual = false, fl_no_prmf = false, fl_no_curr = false,
         fl_no_conf = false;
    train->add_option("--config", common.config_path, "Run configuration file");
    train->add_option("--data", train_data, "Dataset directory (train.nbemb / val.nbemb)");
    train->add_option("--out", train_out, "Output directory");
    train->add_option("--seed", train_seed, "Training seed");
    train->add_option("--epochs", train_epochs, "Epoch count");
    train->add_option("--batch-size", train_batch, "Batch size");
    train->add_option("--lr", train_lr, "Learning rate");
    train->add_flag("--disable-text-branch", fl_no_text, "Image-only variant");
    train->add_flag("--disable-visual-branch", fl_no_visual, "Text-only variant");
    train->add_flag("--disable-prmf", fl_no_prmf, "Concat + affine fusion variant");
    train->add_flag("--disable-curriculum", fl_no_curr, "Constant lambda = 1");
    train->add_flag("--disable-confidence", fl_no_conf, "Fixed alpha = 0.5");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_ck, eval_data, eval_out, eval_split = "val";
    eval->add_option("--checkpoint", eval_ck, "Model checkpoint (.nbck)")->required();
    eval->add_option("--data", eval_data, "Dataset directory")->required();
    eval->add_option("--out", eval_out, "Output directory for metrics.txt");
    eval->add_option("--split", eval_split, "Split to evaluate: val or train")
        ->check(CLI::IsMember({"val", "train"}));

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Verify full-model gradients by central differences");
    std::uint64_t gc_seed = 42;
    double gc_eps = 1e-5, gc_tol = 1e-4;
    std::size_t gc_max_coords = 0;
    gc->add_option("--seed", gc_seed, "Model/sample seed");
    gc->add_option("--eps", gc_eps, "Perturbation size");
    gc->add_option("--tolerance", gc_tol, "Maximum relative error");
    gc->add_option("--max-coords", gc_max_coords, "Coordinate cap per parameter (0 = all)");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run the leave-one-out ablation table");
    std::string abl_out;
    std::size_t abl_seeds = 5, abl_jobs = 1;
    std::optional<std::uint64_t> abl_seed;
    std::optional<std::size_t> abl_spc, abl_epochs;
    std::optional<double> abl_noise_rate;
    ablate->add_option("--config", common.config_path, "Run configuration file");
    ablate->add_option("--out", abl_out, "Output directory");
    ablate->add_option("--seeds", abl_seeds, "Number of seeds to average over");
    ablate->add_option("--jobs", abl_jobs, "Parallel worker threads");
    ablate->add_option("--seed", abl_seed, "Base seed");
    ablate->add_option("--samples-per-class", abl_spc, "Samples per class");
    ablate->add_option("--epochs", abl_epochs, "Epoch count");
    ablate->add_option("--noise-rate", abl_noise_rate, "Fraction of corrupted text vectors");

    std::vector<std::string> argv(args);
    try {
        std::reverse(argv.begin(), argv.end());
        app.parse(argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) {
            RunConfig cfg = common.resolve();
            if (gen_seed) cfg.synth.seed = *gen_seed;
            if (gen_spc) cfg.synth.samples_per_class = *gen_spc;
            if (gen_noise_rate) cfg.synth.noise_rate = *gen_noise_rate;
            if (gen_noise_level) cfg.synth.noise_level = *gen_noise_level;
            if (gen_delta_img) cfg.synth.delta_img = *gen_delta_img;
            if (gen_delta_txt) cfg.synth.delta_txt = *gen_delta_txt;
            if (gen_sigma) cfg.synth.sigma = *gen_sigma;
            cfg.synth.validate();
            return cmd_gen_data(cfg, gen_out, out);
        }
        if (train->parsed()) {
            RunConfig cfg = common.resolve();
            if (!train_data.empty()) cfg.data_dir = train_data;
            if (!train_out.empty()) cfg.out_dir = train_out;
            if (train_seed) cfg.train.seed = *train_seed;
            if (train_epochs) cfg.train.epochs = *train_epochs;
            if (train_batch) cfg.train.batch_size = *train_batch;
            if (train_lr) cfg.train.learning_rate = *train_lr;
            cfg.ablation.disable_text_branch |= fl_no_text;
            cfg.ablation.disable_visual_branch |= fl_no_visual;
            cfg.ablation.disable_prmf |= fl_no_prmf;
            cfg.ablation.disable_curriculum |= fl_no_curr;
            cfg.ablation.disable_confidence |= fl_no_conf;
            cfg.validate();
            return cmd_train(cfg, out);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_ck, eval_data, eval_out, eval_split, out);
        }
        if (gc->parsed()) {
            return cmd_gradcheck(gc_seed, gc_eps, gc_tol, gc_max_coords, out);
        }
        if (ablate->parsed()) {
            RunConfig cfg = common.resolve();
            if (!abl_out.empty()) cfg.out_dir = abl_out;
            if (abl_seed) {
                cfg.synth.seed = *abl_seed;
                cfg.train.seed = *abl_seed;
            }
            if (abl_spc) cfg.synth.samples_per_class = *abl_spc;
            if (abl_epochs) cfg.train.epochs = *abl_epochs;
            if (abl_noise_rate) cfg.synth.noise_rate = *abl_noise_rate;
            cfg.validate();
            return cmd_ablate(cfg, abl_seeds, abl_jobs, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no subcommand\n" << app.help();
    return 2;
}

}  // namespace nbf
