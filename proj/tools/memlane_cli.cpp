#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "memlane/memlane.hpp"
#include "memlane/model_gradcheck.hpp"

namespace {

using namespace memlane;

struct GenOptions {
    std::uint64_t seed = 42;
    int sequences = 8;
    int length = 30;
    int size = 64;
    bool augment = false;
    std::string out = "dataset.mgrd";
};

void run_gen(const GenOptions& o) {
    SceneParams sp;
    sp.seed = o.seed;
    sp.num_sequences = o.sequences;
    sp.frames_per_sequence = o.length;
    sp.image_size = o.size;
    auto samples = generate(sp);
    if (o.augment) samples = flip_augment(samples);
    save_dataset(o.out, samples);
    std::cout << "wrote " << samples.size() << " sequences to " << o.out << "\n";
}

struct TrainOptions {
    std::string data;
    std::string pipeline = "sequential";
    int epochs = 30;
    double lr = 1e-3;
    double p_slow = 0.7;
    int seq_len = 6;
    std::uint64_t seed = 0;
    double clip_norm = 0.0;
    int checkpoint_every = 0;
    std::string out = "model.mgwt";
    std::string loss_csv;
};

int dataset_image_size(const std::vector<SequenceSample>& dataset) {
    const auto& f = dataset.front().frames.front();
    if (f.dim(1) != f.dim(2))
        throw ArgumentError("dataset images must be square, got " + shape_str(f.shape()));
    return f.dim(1);
}

void run_train(const TrainOptions& o) {
    auto dataset = load_dataset(o.data);
    if (dataset.empty()) throw ArgumentError("train: dataset '" + o.data + "' is empty");
    ArchitectureConfig arch = ArchitectureConfig::desk();
    arch.input_size = dataset_image_size(dataset);

    TrainConfig tc;
    tc.pipeline = parse_pipeline(o.pipeline);
    tc.seq_len = o.seq_len;
    tc.p_slow = o.p_slow;
    tc.epochs = o.epochs;
    tc.lr = o.lr;
    tc.seed = o.seed;
    tc.clip_norm = o.clip_norm;
    tc.validate();

    EpochCallback on_epoch = [&](int epoch, double mean_loss, ModelParams<float>& params) {
        std::printf("epoch %d/%d mean_loss=%.6f\n", epoch, o.epochs, mean_loss);
        std::fflush(stdout);
        if (o.checkpoint_every > 0 && epoch % o.checkpoint_every == 0) {
            char suffix[32];
            std::snprintf(suffix, sizeof suffix, ".epoch%03d", epoch);
            save_checkpoint(o.out + suffix, params);
        }
    };
    TrainResult result = train(dataset, tc, arch, on_epoch);
    save_checkpoint(o.out, result.params);
    const std::string loss_path = o.loss_csv.empty() ? o.out + ".loss.csv" : o.loss_csv;
    write_loss_csv(result.epoch_losses, loss_path);
    std::cout << "wrote checkpoint to " << o.out << " and loss log to " << loss_path << "\n";
}

struct EvalOptions {
    std::string model;
    std::string data;
    std::string policy = "always-slow";
    bool clear_on_slow = true;
    std::uint64_t policy_seed = 0;
    std::string name;
    std::string csv_out;
    std::string masks_out;
    std::string schedule_out;
};

void run_eval(const EvalOptions& o) {
    auto dataset = load_dataset(o.data);
    if (dataset.empty()) throw ArgumentError("eval: dataset '" + o.data + "' is empty");
    ArchitectureConfig cfg = peek_checkpoint_config(o.model, dataset_image_size(dataset));
    ModelParams<float> params = load_checkpoint(o.model, cfg);

    Policy policy = parse_policy(o.policy);
    policy.clear_on_slow = o.clear_on_slow;
    policy.seed = o.policy_seed;

    const std::string name =
        o.name.empty() ? std::filesystem::path(o.model).stem().string() : o.name;
    MetricsRow row = evaluate(params, dataset, policy, name);
    std::printf("name=%s strategy=%s avg_iou=%.4f avg_fps=%.2f temporal_consistency=%.4f\n",
                row.name.c_str(), row.strategy.c_str(), row.avg_iou, row.avg_fps,
                row.temporal_consistency);

    if (!o.csv_out.empty()) write_metrics_csv({row}, o.csv_out);
    if (!o.masks_out.empty() || !o.schedule_out.empty()) {
        Schedule combined;
        if (!o.masks_out.empty()) std::filesystem::create_directories(o.masks_out);
        for (std::size_t s = 0; s < dataset.size(); ++s) {
            StreamResult r = run_stream(dataset[s].frames, params, policy);
            if (!o.masks_out.empty()) {
                for (std::size_t t = 0; t < r.masks.size(); ++t) {
                    char file[64];
                    std::snprintf(file, sizeof file, "seq%03zu_frame%03zu.pgm", s, t);
                    export_mask(r.masks[t], (std::filesystem::path(o.masks_out) / file).string());
                }
            }
            combined.insert(combined.end(), r.schedule.begin(), r.schedule.end());
        }
        if (!o.schedule_out.empty()) write_schedule_csv(combined, o.schedule_out);
    }
}

struct ProfileOptions {
    std::string model;
    std::string policy = "one-in:10";
    int frames = 300;
    int warmup = 10;
    int size = 64;
    std::uint64_t policy_seed = 0;
    std::uint64_t frame_seed = 7;
};

void run_profile(const ProfileOptions& o) {
    if (o.warmup >= o.frames)
        throw ArgumentError("profile: warmup " + std::to_string(o.warmup) +
                            " must be smaller than frames " + std::to_string(o.frames));
    ArchitectureConfig cfg = peek_checkpoint_config(o.model, o.size);
    ModelParams<float> params = load_checkpoint(o.model, cfg);
    Policy policy = parse_policy(o.policy);
    policy.seed = o.policy_seed;

    SceneParams sp;
    sp.seed = o.frame_seed;
    sp.num_sequences = 1;
    sp.frames_per_sequence = o.frames;
    sp.image_size = o.size;
    auto samples = generate(sp);
    const double fps = profile_fps(samples.front().frames, params, policy, o.warmup);
    std::printf("avg_fps=%.2f\n", fps);
}

struct GradcheckOptions {
    int size = 16;
    std::uint64_t seed = 1;
    std::string precision = "double";
    int samples = 64;
    double tolerance = 1e-4;
    bool full = false;
};

int run_gradcheck(const GradcheckOptions& o) {
    ArchitectureConfig cfg = ArchitectureConfig::desk();
    cfg.input_size = o.size;
    cfg.validate();
    ModelGradCheck result =
        model_grad_check(cfg, o.seed, o.full ? 0 : static_cast<std::size_t>(o.samples));
    const GradCheckReport& report = result.report;
    std::printf("base point relu margin %.2e (h=1e-5)\n", result.relu_margin);
    for (const auto& e : report.params) {
        std::printf("%-24s checked %3zu/%-6zu max_rel_err=%.3e", e.name.c_str(), e.checked,
                    e.total, e.max_rel_err);
        if (e.below_resolution > 0)
            std::printf("  (%zu below fd resolution, worst abs %.2e)", e.below_resolution,
                        e.max_small_abs_err);
        if (e.skipped_nonsmooth > 0)
            std::printf("  (%zu probes skipped at relu kinks)", e.skipped_nonsmooth);
        std::printf("\n");
    }
    std::printf("max_rel_err=%.6e (worst: %s)\n", report.max_rel_err,
                report.worst_param.c_str());
    if (report.passed(o.tolerance)) {
        std::printf("PASS: all gradients within tolerance %.1e\n", o.tolerance);
        return 0;
    }
    std::printf("FAIL: gradients exceed tolerance %.1e (max_rel_err=%.6e, worst abs below "
                "resolution %.3e)\n",
                o.tolerance, report.max_rel_err, report.max_small_abs_err);
    return 1;
}

// Expands "--config FILE" into --key=value tokens inserted right after the
// subcommand name. Every option uses take-last precedence, so flags given on
// the command line override file values, which override defaults. Unknown
// keys surface as unrecognized-argument errors.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;

    std::ifstream in(path);
    if (!in) throw ArgumentError("config: cannot open '" + path + "'");
    std::vector<std::string> expanded;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        line = line.substr(start);
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ArgumentError("config: expected key=value, got '" + line + "'");
        expanded.push_back("--" + line.substr(0, eq) + "=" + line.substr(eq + 1));
    }
    if (args.empty()) return args;
    args.insert(args.begin() + 1, expanded.begin(), expanded.end());
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("MEMLANE_THREADS")) {
        memlane::set_kernel_threads(std::atoi(env));
    }

    CLI::App app{"memlane: memory-guided road segmentation on synthetic road video"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    GenOptions gen;
    auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic road-video dataset (MGRD)");
    cmd_gen->add_option("--seed", gen.seed, "generator seed");
    cmd_gen->add_option("--sequences", gen.sequences, "number of sequences");
    cmd_gen->add_option("--length", gen.length, "frames per sequence");
    cmd_gen->add_option("--size", gen.size, "square image size");
    cmd_gen->add_flag("--augment", gen.augment, "append horizontally flipped copies");
    cmd_gen->add_option("--out", gen.out, "output MGRD path");

    TrainOptions train_opt;
    auto* cmd_train = app.add_subcommand("train", "train a model (MGWT checkpoint + loss CSV)");
    cmd_train->add_option("--data", train_opt.data, "input MGRD dataset")->required();
    cmd_train->add_option("--pipeline", train_opt.pipeline, "batched|sequential")
        ->check(CLI::IsMember({"batched", "sequential"}));
    cmd_train->add_option("--epochs", train_opt.epochs, "training epochs");
    cmd_train->add_option("--lr", train_opt.lr, "Adam learning rate");
    cmd_train->add_option("--p-slow", train_opt.p_slow, "probability of the slow extractor");
    cmd_train->add_option("--seq-len", train_opt.seq_len, "frames per training sequence");
    cmd_train->add_option("--seed", train_opt.seed, "training seed");
    cmd_train->add_option("--clip-norm", train_opt.clip_norm, "global grad-norm clip (0 = off)");
    cmd_train->add_option("--checkpoint-every", train_opt.checkpoint_every,
                          "emit an intermediate checkpoint every N epochs (0 = off)");
    cmd_train->add_option("--out", train_opt.out, "output MGWT path");
    cmd_train->add_option("--loss-csv", train_opt.loss_csv, "loss log path (default <out>.loss.csv)");

    EvalOptions eval_opt;
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    cmd_eval->add_option("--model", eval_opt.model, "MGWT checkpoint")->required();
    cmd_eval->add_option("--data", eval_opt.data, "MGRD dataset")->required();
    cmd_eval->add_option("--policy", eval_opt.policy,
                         "always-fast|always-slow|one-in:N|randn:THETA");
    cmd_eval->add_flag("--clear-on-slow,!--no-clear-on-slow", eval_opt.clear_on_slow,
                       "zero the memory before each slow frame (default on)");
    cmd_eval->add_option("--policy-seed", eval_opt.policy_seed, "PRNG seed for randn policies");
    cmd_eval->add_option("--name", eval_opt.name, "model name for the report row");
    cmd_eval->add_option("--csv-out", eval_opt.csv_out, "append-style metrics CSV path");
    cmd_eval->add_option("--masks-out", eval_opt.masks_out, "directory for predicted-mask PGMs");
    cmd_eval->add_option("--schedule-out", eval_opt.schedule_out, "per-frame schedule CSV path");

    ProfileOptions prof;
    auto* cmd_profile = app.add_subcommand("profile", "measure streaming FPS of a checkpoint");
    cmd_profile->add_option("--model", prof.model, "MGWT checkpoint")->required();
    cmd_profile->add_option("--policy", prof.policy,
                            "always-fast|always-slow|one-in:N|randn:THETA");
    cmd_profile->add_option("--frames", prof.frames, "frames to stream");
    cmd_profile->add_option("--warmup", prof.warmup, "frames excluded from timing");
    cmd_profile->add_option("--size", prof.size, "square image size of synthesized frames");
    cmd_profile->add_option("--policy-seed", prof.policy_seed, "PRNG seed for randn policies");
    cmd_profile->add_option("--frame-seed", prof.frame_seed, "seed of the synthesized stream");

    GradcheckOptions gc;
    auto* cmd_gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of every parameter tensor");
    cmd_gradcheck->add_option("--size", gc.size, "square input size (divisible by 8)");
    cmd_gradcheck->add_option("--seed", gc.seed, "init and input seed");
    cmd_gradcheck->add_option("--precision", gc.precision, "verification precision")
        ->check(CLI::IsMember({"double"}));
    cmd_gradcheck->add_option("--samples", gc.samples, "max checked entries per tensor")
        ->check(CLI::PositiveNumber);
    cmd_gradcheck->add_option("--tolerance", gc.tolerance, "max relative error to pass");
    cmd_gradcheck->add_flag("--full", gc.full, "check every entry of every tensor");

    // Flat key=value config per subcommand; flags beat file values, unknown
    // keys are errors (see expand_config_args).
    std::string config_path;
    for (CLI::App* sub : {cmd_gen, cmd_train, cmd_eval, cmd_profile, cmd_gradcheck}) {
        sub->add_option("--config", config_path, "flat key=value config file ('#' comments)");
    }

    int exit_code = 0;
    cmd_gen->callback([&] { run_gen(gen); });
    cmd_train->callback([&] { run_train(train_opt); });
    cmd_eval->callback([&] { run_eval(eval_opt); });
    cmd_profile->callback([&] { run_profile(prof); });
    cmd_gradcheck->callback([&] { exit_code = run_gradcheck(gc); });

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const memlane::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
