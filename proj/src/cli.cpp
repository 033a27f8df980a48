#include "amp/cli.hpp"

#include "amp/collapse_lab.hpp"
#include "amp/config.hpp"
#include "amp/explainer.hpp"
#include "amp/gradcheck.hpp"
#include "amp/trainer.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace amp::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file || !file.write(content.data(), static_cast<std::streamsize>(content.size())))
        throw IOFailure("cannot write " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IOFailure("cannot create output directory " + dir);
}

void dump_effective_config(const CliConfig& cfg, const std::string& out_dir) {
    write_text((fs::path(out_dir) / "run-config.toml").string(), cfg.to_file().dump());
}

// Shared option block. Values land in `cfg` after apply_overrides().
struct CommonOpts {
    CliConfig cfg;
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* classes_opt = nullptr;
    CLI::Option* channels_opt = nullptr;
    CLI::Option* height_opt = nullptr;
    CLI::Option* width_opt = nullptr;
    CLI::Option* parts_opt = nullptr;
    CLI::Option* scale_opt = nullptr;
    CLI::Option* noise_opt = nullptr;
    CLI::Option* samples_opt = nullptr;
    CLI::Option* depth_opt = nullptr;
    CLI::Option* k_opt = nullptr;
    CLI::Option* epochs_opt = nullptr;
    CLI::Option* batch_opt = nullptr;
    CLI::Option* lr_max_opt = nullptr;
    CLI::Option* lr_min_opt = nullptr;
    CLI::Option* lambda_opt = nullptr;
    CLI::Option* gamma1_opt = nullptr;
    CLI::Option* gamma2_opt = nullptr;
    CLI::Option* ckpt_every_opt = nullptr;

    int classes = 0, channels = 0, height = 0, width = 0, parts = 0, samples = 0;
    double part_scale = 0.0, noise = 0.0;
    int depth = 0, k = 0, epochs = 0, batch = 0, ckpt_every = 0;
    double lr_max = 0.0, lr_min = 0.0, lambda = 0.0, gamma1 = 0.0, gamma2 = 0.0;

    void add_to(CLI::App* cmd, bool out_required) {
        cmd->add_option("--config", config_path, "TOML config file; flags override it");
        auto* out = cmd->add_option("--out", out_dir, "Output directory");
        if (out_required)
            out->required();
        seed_opt = cmd->add_option("--seed", seed, "Base seed for the run");

        classes_opt = cmd->add_option("--classes", classes, "Synthetic classes");
        channels_opt = cmd->add_option("--channels", channels, "Input channels");
        height_opt = cmd->add_option("--height", height, "Grid height");
        width_opt = cmd->add_option("--width", width, "Grid width");
        parts_opt = cmd->add_option("--parts", parts, "Planted parts per class");
        scale_opt = cmd->add_option("--part-scale", part_scale, "Part vector scale");
        noise_opt = cmd->add_option("--noise", noise, "Within-class noise level");
        samples_opt = cmd->add_option("--samples", samples, "Samples per class");

        depth_opt = cmd->add_option("--depth", depth, "Feature dimension D");
        k_opt = cmd->add_option("--k", k, "Directions per class");
        epochs_opt = cmd->add_option("--epochs", epochs, "Training epochs");
        batch_opt = cmd->add_option("--batch", batch, "Batch size");
        lr_max_opt = cmd->add_option("--lr-max", lr_max, "Peak learning rate");
        lr_min_opt = cmd->add_option("--lr-min", lr_min, "Final learning rate");
        lambda_opt = cmd->add_option("--lambda", lambda, "Sparsity weight");
        gamma1_opt = cmd->add_option("--gamma1", gamma1, "Spatial entropy weight");
        gamma2_opt = cmd->add_option("--gamma2", gamma2, "Overlap weight");
        ckpt_every_opt = cmd->add_option("--checkpoint-every", ckpt_every,
                                         "Checkpoint period in epochs (0 = off)");
    }

    void apply_overrides() {
        if (!config_path.empty())
            cfg.apply(ConfigFile::parse_file(config_path));
        if (seed_opt->count()) {
            cfg.data.seed = seed;
            cfg.train.seed = seed;
        }
        if (classes_opt->count()) cfg.data.classes = classes;
        if (channels_opt->count()) cfg.data.channels = channels;
        if (height_opt->count()) cfg.data.height = height;
        if (width_opt->count()) cfg.data.width = width;
        if (parts_opt->count()) cfg.data.parts = parts;
        if (scale_opt->count()) cfg.data.part_scale = part_scale;
        if (noise_opt->count()) cfg.data.noise = noise;
        if (samples_opt->count()) cfg.data.samples_per_class = samples;
        if (depth_opt->count()) cfg.depth = depth;
        if (k_opt->count()) cfg.train.k = k;
        if (epochs_opt->count()) cfg.train.epochs = epochs;
        if (batch_opt->count()) cfg.train.batch_size = batch;
        if (lr_max_opt->count()) cfg.train.lr_max = lr_max;
        if (lr_min_opt->count()) cfg.train.lr_min = lr_min;
        if (lambda_opt->count()) cfg.train.weights.lambda = lambda;
        if (gamma1_opt->count()) cfg.train.weights.gamma1 = gamma1;
        if (gamma2_opt->count()) cfg.train.weights.gamma2 = gamma2;
        if (ckpt_every_opt->count()) cfg.train.checkpoint_every = ckpt_every;
    }
};

// Train/test pair with shared planted structure and disjoint noise streams.
std::pair<SyntheticSpec, SyntheticSpec> split_specs(const CliConfig& cfg) {
    SyntheticSpec train_spec = cfg.data;
    SyntheticSpec test_spec = cfg.data;
    const auto s32 = static_cast<std::uint32_t>(cfg.data.seed);
    train_spec.seed = make_seed(s32, s32);
    test_spec.seed = make_seed(s32, s32 + 0x7e57u);
    return {train_spec, test_spec};
}

std::string training_log_tsv(const std::vector<EpochReport>& reports) {
    std::string out =
        "epoch\tce\tsem\toverlap\tsparse\ttotal\taccuracy\tmean_rank\tmax_residual\n";
    for (std::size_t e = 0; e < reports.size(); ++e) {
        const EpochReport& r = reports[e];
        double mean_rank = 0.0;
        for (int rank : r.active_ranks)
            mean_rank += rank;
        mean_rank /= r.active_ranks.empty() ? 1.0 : static_cast<double>(r.active_ranks.size());
        out += std::to_string(e) + "\t" + fmt(r.mean_loss.ce) + "\t" + fmt(r.mean_loss.sem) +
               "\t" + fmt(r.mean_loss.overlap) + "\t" + fmt(r.mean_loss.sparse) + "\t" +
               fmt(r.mean_loss.total) + "\t" + fmt(r.accuracy) + "\t" + fmt(mean_rank) +
               "\t" + fmt(r.max_residual) + "\n";
    }
    return out;
}

int cmd_gen_data(CommonOpts& opts) {
    opts.apply_overrides();
    ensure_dir(opts.out_dir);
    const auto [train_spec, test_spec] = split_specs(opts.cfg);

    const Dataset train_data = gen_synthetic(train_spec);
    const Dataset test_data = gen_synthetic(test_spec);
    write_ampd(train_data, (fs::path(opts.out_dir) / "train.ampd").string());
    write_ampd(test_data, (fs::path(opts.out_dir) / "test.ampd").string());
    dump_effective_config(opts.cfg, opts.out_dir);

    std::cout << "wrote " << train_data.size() << " train and " << test_data.size()
              << " test samples (" << train_data.classes << " classes, "
              << train_data.channels << "x" << train_data.height << "x"
              << train_data.width << ") to " << opts.out_dir << "\n";
    return 0;
}

int cmd_train(CommonOpts& opts, const std::string& data_path) {
    opts.apply_overrides();
    ensure_dir(opts.out_dir);
    const Dataset data = read_ampd(data_path);

    ModelState state = init_model(data.classes, opts.cfg.depth, data.channels, opts.cfg.train);
    const TrainingConfig& tc = opts.cfg.train;
    const std::vector<EpochReport> reports =
        train(state, data, tc, [&](const ModelState& st, const EpochReport& r) {
            if (tc.checkpoint_every > 0 && st.epoch % tc.checkpoint_every == 0)
                save_checkpoint(st, (fs::path(opts.out_dir) /
                                     ("checkpoint_epoch_" + std::to_string(st.epoch) + ".ampc"))
                                        .string());
            std::cout << "epoch " << st.epoch << " loss " << r.mean_loss.total << " acc "
                      << r.accuracy << " residual " << r.max_residual << "\n";
        });

    save_checkpoint(state, (fs::path(opts.out_dir) / "checkpoint.ampc").string());
    write_text((fs::path(opts.out_dir) / "training_log.tsv").string(),
               training_log_tsv(reports));
    dump_effective_config(opts.cfg, opts.out_dir);

    const EpochReport& last = reports.back();
    std::cout << "final: loss " << last.mean_loss.total << " accuracy " << last.accuracy
              << " max residual " << last.max_residual << "\n";
    return 0;
}

int cmd_eval(CommonOpts& opts, const std::string& data_path, const std::string& ckpt_path) {
    opts.apply_overrides();
    const Dataset data = read_ampd(data_path);
    const ModelState state = load_checkpoint(ckpt_path);
    const EvalResult result = evaluate(state, data, opts.cfg.train.weights);

    std::string text;
    text += "accuracy\t" + fmt(result.accuracy) + "\n";
    text += "ce\t" + fmt(result.mean_loss.ce) + "\n";
    text += "sem\t" + fmt(result.mean_loss.sem) + "\n";
    text += "overlap\t" + fmt(result.mean_loss.overlap) + "\n";
    text += "sparse\t" + fmt(result.mean_loss.sparse) + "\n";
    text += "total\t" + fmt(result.mean_loss.total) + "\n";
    std::cout << text;
    if (!opts.out_dir.empty()) {
        ensure_dir(opts.out_dir);
        write_text((fs::path(opts.out_dir) / "eval.txt").string(), text);
        dump_effective_config(opts.cfg, opts.out_dir);
    }
    return 0;
}

int cmd_explain(CommonOpts& opts, const std::string& cache_path, const std::string& data_path,
                const std::string& ckpt_path, int index, int forced_class) {
    opts.apply_overrides();
    ensure_dir(opts.out_dir);
    const ModelState state = load_checkpoint(ckpt_path);
    const Dataset cache_data = read_ampd(cache_path);
    const Dataset query_data = data_path.empty() ? cache_data : read_ampd(data_path);
    if (index < 0 || index >= query_data.size())
        throw BadSpec("explain: sample index out of range");

    const FeatureCache cache = build_cache(state, cache_data);
    const Explanation expl =
        explain(query_data.samples[index].raw, state, cache, forced_class);

    export_explanation_json(expl, (fs::path(opts.out_dir) / "explanation.json").string());
    for (const PartEvidence& part : expl.parts)
        export_heatmap_pgm(part.heatmap, (fs::path(opts.out_dir) / part.heatmap_file).string());
    dump_effective_config(opts.cfg, opts.out_dir);

    std::cout << "predicted class " << expl.predicted_class << " with "
              << expl.parts.size() << " active parts, total evidence "
              << expl.total_evidence << "\n";
    for (const PartEvidence& part : expl.parts)
        std::cout << "  direction " << part.direction << " capacity " << part.capacity
                  << " peak (" << part.peak_h << "," << part.peak_w << ") contribution "
                  << part.contribution << " patch sample " << part.patch.sample << " ("
                  << part.patch.h << "," << part.patch.w << ")\n";
    return 0;
}

int cmd_gradcheck(CommonOpts& opts, int states) {
    opts.apply_overrides();
    const GradCheckResult result = run_gradient_oracle(opts.cfg.train.seed, states);

    std::string text;
    for (const GradCheckEntry& e : result.entries)
        text += e.term + "\t" + e.group + "\t" + fmt(e.max_error) + "\n";
    text += "max\t*\t" + fmt(result.max_error) + "\n";
    std::cout << text;
    std::cout << "max relative error " << fmt(result.max_error) << " over "
              << result.states << " states\n";
    if (!opts.out_dir.empty()) {
        ensure_dir(opts.out_dir);
        write_text((fs::path(opts.out_dir) / "gradcheck.txt").string(), text);
        dump_effective_config(opts.cfg, opts.out_dir);
    }
    if (result.max_error > 1e-5) {
        std::cerr << "gradient check FAILED (max relative error > 1e-5)\n";
        return 3;
    }
    return 0;
}

int cmd_collapse_demo(CommonOpts& opts, int epochs, int k) {
    opts.apply_overrides();
    ensure_dir(opts.out_dir);

    SyntheticSpec spec = opts.cfg.data;
    const auto s32 = static_cast<std::uint32_t>(spec.seed);
    spec.seed = make_seed(s32, s32);
    const CollapseReport report = collapse_demo(spec, epochs, k);

    std::string tsv =
        "epoch\tbaseline_ce\tbaseline_acc\tmin_stable_rank\tmean_stable_rank\t"
        "mean_cosine\twithin_trace\tetf_deviation\tamp_mean_rank\tamp_residual\n";
    for (const CollapseEpochRow& r : report.rows)
        tsv += std::to_string(r.epoch) + "\t" + fmt(r.baseline_ce) + "\t" +
               fmt(r.baseline_accuracy) + "\t" + fmt(r.min_stable_rank) + "\t" +
               fmt(r.mean_stable_rank) + "\t" + fmt(r.mean_cosine) + "\t" +
               fmt(r.within_trace) + "\t" + fmt(r.etf_deviation) + "\t" +
               fmt(r.amp_mean_rank) + "\t" + fmt(r.amp_residual) + "\n";
    write_text((fs::path(opts.out_dir) / "collapse_report.tsv").string(), tsv);
    dump_effective_config(opts.cfg, opts.out_dir);

    std::cout << "final baseline stable ranks:";
    for (double r : report.final_stable_ranks)
        std::cout << " " << r;
    std::cout << "\nfinal baseline prototype cosines:";
    for (double c : report.final_cosines)
        std::cout << " " << c;
    std::cout << "\nbaseline accuracy " << report.baseline_accuracy << ", tr(Sigma_W) "
              << report.final_within_trace << ", ETF deviation "
              << report.final_etf_deviation << "\n";
    std::cout << "constrained model residual " << report.final_amp_residual
              << ", active ranks:";
    for (int r : report.final_amp_ranks)
        std::cout << " " << r;
    std::cout << ", accuracy " << report.amp_accuracy << "\n";
    return 0;
}

int cmd_sweep(CommonOpts& opts, const std::string& param, const std::string& values_csv) {
    opts.apply_overrides();
    ensure_dir(opts.out_dir);
    if (param != "lambda" && param != "gamma1" && param != "gamma2" && param != "k")
        throw BadSpec("sweep: --param must be one of lambda, gamma1, gamma2, k");

    std::vector<double> values;
    std::stringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            values.push_back(std::stod(item));
    if (values.empty())
        throw BadSpec("sweep: no values given");

    const auto [train_spec, test_spec] = split_specs(opts.cfg);
    const Dataset train_data = gen_synthetic(train_spec);
    const Dataset test_data = gen_synthetic(test_spec);

    std::string tsv = "param\tvalue\ttest_accuracy\tmean_rank\n";
    std::cout << param << "\taccuracy\tmean_rank\n";
    for (double v : values) {
        TrainingConfig tc = opts.cfg.train;
        if (param == "lambda")
            tc.weights.lambda = v;
        else if (param == "gamma1")
            tc.weights.gamma1 = v;
        else if (param == "gamma2")
            tc.weights.gamma2 = v;
        else
            tc.k = static_cast<int>(v);

        ModelState state = init_model(train_data.classes, opts.cfg.depth,
                                      train_data.channels, tc);
        train(state, train_data, tc);
        const EvalResult result = evaluate(state, test_data, tc.weights);
        double mean_rank = 0.0;
        for (const ClassSubspace& sub : state.subspaces)
            mean_rank += active_set(sub.capacity).rank();
        mean_rank /= state.classes();

        tsv += param + "\t" + fmt(v) + "\t" + fmt(result.accuracy) + "\t" +
               fmt(mean_rank) + "\n";
        std::cout << fmt(v) << "\t" << fmt(result.accuracy) << "\t" << fmt(mean_rank)
                  << "\n";
    }
    write_text((fs::path(opts.out_dir) / "sweep.tsv").string(), tsv);
    dump_effective_config(opts.cfg, opts.out_dir);
    return 0;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Stiefel-constrained prototype classifier with proximal rank "
                 "calibration, spatial gauge fixing, and a collapse lab"};
    app.require_subcommand(1);

    CommonOpts gen_opts, train_opts, eval_opts, explain_opts, grad_opts, demo_opts, sweep_opts;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic train/test pair");
    gen_opts.add_to(gen, true);

    auto* tr = app.add_subcommand("train", "Train a model on an AMPD dataset");
    std::string train_data_path;
    tr->add_option("--data", train_data_path, "Training AMPD file")->required();
    train_opts.add_to(tr, true);

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_data_path, eval_ckpt_path;
    ev->add_option("--data", eval_data_path, "AMPD file")->required();
    ev->add_option("--checkpoint", eval_ckpt_path, "AMPC checkpoint")->required();
    eval_opts.add_to(ev, false);

    auto* ex = app.add_subcommand("explain", "Export an explanation for one sample");
    std::string ex_cache_path, ex_data_path, ex_ckpt_path;
    int ex_index = 0;
    int ex_class = -1;
    ex->add_option("--cache-data", ex_cache_path, "Training AMPD backing the patch cache")
        ->required();
    ex->add_option("--data", ex_data_path, "AMPD file to explain from (default: cache data)");
    ex->add_option("--checkpoint", ex_ckpt_path, "AMPC checkpoint")->required();
    ex->add_option("--index", ex_index, "Sample index")->required();
    ex->add_option("--class", ex_class, "Explain this class instead of the prediction");
    explain_opts.add_to(ex, true);

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient oracle");
    int gc_states = 20;
    gc->add_option("--states", gc_states, "Number of random states");
    grad_opts.add_to(gc, false);

    auto* demo = app.add_subcommand("collapse-demo",
                                    "Contrast free prototypes against constrained bases");
    int demo_epochs = 80;
    int demo_k = 5;
    demo->add_option("--demo-epochs", demo_epochs, "Epochs for both runs");
    demo->add_option("--demo-k", demo_k, "Prototypes / directions per class");
    demo_opts.add_to(demo, true);
    // Collapse-pressure defaults; flags still override. A single grid cell
    // makes every patch the part patch.
    demo_opts.cfg.data.classes = 6;
    demo_opts.cfg.data.channels = 16;
    demo_opts.cfg.data.height = 1;
    demo_opts.cfg.data.width = 1;
    demo_opts.cfg.data.parts = 1;
    demo_opts.cfg.data.noise = 0.01;
    demo_opts.cfg.data.samples_per_class = 30;

    auto* sw = app.add_subcommand("sweep", "Train across one hyperparameter axis");
    std::string sw_param, sw_values;
    sw->add_option("--param", sw_param, "lambda | gamma1 | gamma2 | k")->required();
    sw->add_option("--values", sw_values, "Comma-separated values")->required();
    sweep_opts.add_to(sw, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_opts);
        if (tr->parsed())
            return cmd_train(train_opts, train_data_path);
        if (ev->parsed())
            return cmd_eval(eval_opts, eval_data_path, eval_ckpt_path);
        if (ex->parsed())
            return cmd_explain(explain_opts, ex_cache_path, ex_data_path, ex_ckpt_path,
                               ex_index, ex_class);
        if (gc->parsed())
            return cmd_gradcheck(grad_opts, gc_states);
        if (demo->parsed())
            return cmd_collapse_demo(demo_opts, demo_epochs, demo_k);
        if (sw->parsed())
            return cmd_sweep(sweep_opts, sw_param, sw_values);
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return 3;
    } catch (const NonFinite& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace amp::cli
