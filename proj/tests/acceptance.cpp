// Acceptance harness: runs every acceptance criterion end to end against the
// built CLI and the library, printing one PASS/FAIL line per criterion.
//
// Usage: memlane_acceptance <path-to-memlane-cli> [workdir]

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "memlane/memlane.hpp"
#include "memlane/model_gradcheck.hpp"
#include "oracles.hpp"

using namespace memlane;
namespace fs = std::filesystem;

namespace {

// Identical training budget and optimizer settings for every benchmark
// model. The learning rate sits below the library default: at 1e-3 the
// high-capacity extractor's loss collapses and then diverges mid-run (an
// LSTM-BPTT blowup the clip flag exists for), while 5e-4 with clip 10
// converges monotonically for every model and seed.
constexpr int kBenchmarkEpochs = 30;
constexpr double kBenchmarkLr = 5e-4;
constexpr double kBenchmarkClip = 10.0;
constexpr int kTrainSequences = 32;
constexpr int kEvalSequences = 8;
constexpr std::uint64_t kBenchmarkSeed = 42;

std::string g_cli;
std::string g_work;

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " 2>&1";
    CmdResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
    const int status = pclose(pipe);
    r.exit_code = WEXITSTATUS(status);
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

// Shared benchmark artifacts, built once and reused across criteria.
struct Benchmark {
    std::vector<SequenceSample> train_split;
    std::vector<SequenceSample> eval_split;

    struct TrainedModel {
        ModelParams<float> params;
        std::vector<double> epoch_losses;
    };
    std::map<std::string, TrainedModel> models;

    static Benchmark& get() {
        static Benchmark b = make();
        return b;
    }

    static Benchmark make() {
        Benchmark b;
        SceneParams sp;
        sp.seed = kBenchmarkSeed;
        sp.num_sequences = kTrainSequences + kEvalSequences;
        sp.frames_per_sequence = 30;
        sp.image_size = 64;
        auto all = generate(sp);
        b.train_split.assign(all.begin(), all.begin() + kTrainSequences);
        b.eval_split.assign(all.begin() + kTrainSequences, all.end());
        return b;
    }

    TrainedModel& model(const std::string& key, double p_slow, std::uint64_t seed) {
        auto it = models.find(key);
        if (it != models.end()) return it->second;
        TrainConfig tc;
        tc.pipeline = Pipeline::Sequential;
        tc.epochs = kBenchmarkEpochs;
        tc.p_slow = p_slow;
        tc.seed = seed;
        tc.lr = kBenchmarkLr;
        tc.clip_norm = kBenchmarkClip;
        ArchitectureConfig arch = ArchitectureConfig::desk();
        const double t0 = now_s();
        TrainResult r = train(train_split, tc, arch);
        std::fprintf(stderr, "  [bench] trained %s in %.1fs (final loss %.4f)\n", key.c_str(),
                     now_s() - t0, r.epoch_losses.back());
        TrainedModel m{std::move(r.params), std::move(r.epoch_losses)};
        return models.emplace(key, std::move(m)).first->second;
    }
};

struct Result {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------------------

Result criterion1_gradcheck() {
    const double t0 = now_s();
    auto r = run_cli("gradcheck --size 16 --seed 1");
    const double elapsed = now_s() - t0;
    double max_err = -1.0;
    std::istringstream lines(r.output);
    std::string line;
    while (std::getline(lines, line)) {
        const auto pos = line.find("max_rel_err=");
        if (pos == 0) max_err = std::stod(line.substr(pos + 12));
    }
    const bool ok = r.exit_code == 0 && max_err >= 0.0 && max_err < 1e-4 && elapsed < 300.0;
    return {ok, fmt("max_rel_err=%.3e exit=%d runtime=%.1fs", max_err, r.exit_code, elapsed)};
}

Result criterion2_conv_oracle() {
    const double t0 = now_s();
    SplitMix64 rng(2026);
    std::size_t cases = 0;
    double worst = 0.0;
    for (int n : {1, 2})
        for (int ci : {1, 2, 3})
            for (int co : {1, 2, 3})
                for (int h = 1; h <= 5; ++h)
                    for (int w = 1; w <= 5; ++w)
                        for (int kh = 1; kh <= 3; ++kh)
                            for (int kw = 1; kw <= 3; ++kw)
                                for (int stride : {1, 2})
                                    for (int pad : {0, 1}) {
                                        if (h + 2 * pad < kh || w + 2 * pad < kw) continue;
                                        auto x = Tensor<double>::zeros({n, ci, h, w});
                                        auto wt = Tensor<double>::zeros({co, ci, kh, kw});
                                        auto b = Tensor<double>::zeros({co});
                                        oracle::fill_uniform(x, rng);
                                        oracle::fill_uniform(wt, rng);
                                        oracle::fill_uniform(b, rng);
                                        auto got = conv2d(x, wt, b, stride, pad);
                                        auto ref = oracle::conv2d_direct(x, wt, b, stride, pad);
                                        const double d = oracle::max_abs_diff(got, ref);
                                        worst = std::max(worst, d);
                                        ++cases;
                                        if (d > 1e-6)
                                            return {false,
                                                    fmt("conv mismatch %.3e at case %zu", d, cases)};
                                    }

    // Adjoint identity on 100 seeded random cases.
    double worst_adj = 0.0;
    for (int trial = 0; trial < 100;) {
        const int ci = 1 + static_cast<int>(rng.next_u64() % 3);
        const int co = 1 + static_cast<int>(rng.next_u64() % 3);
        const int h = 2 + static_cast<int>(rng.next_u64() % 4);
        const int w = 2 + static_cast<int>(rng.next_u64() % 4);
        const int k = 1 + static_cast<int>(rng.next_u64() % 3);
        const int stride = 1 + static_cast<int>(rng.next_u64() % 2);
        const int pad = static_cast<int>(rng.next_u64() % 2);
        if (h + 2 * pad < k || w + 2 * pad < k) continue;
        // Compatible shapes only: the stride must tile the padded extent so
        // the transpose maps back onto exactly [H,W].
        if ((h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0) continue;
        const int ho = (h + 2 * pad - k) / stride + 1;
        const int wo = (w + 2 * pad - k) / stride + 1;
        auto x = Tensor<double>::zeros({1, ci, h, w});
        auto y = Tensor<double>::zeros({1, co, ho, wo});
        auto wt = Tensor<double>::zeros({co, ci, k, k});
        oracle::fill_uniform(x, rng);
        oracle::fill_uniform(y, rng);
        oracle::fill_uniform(wt, rng);
        auto zb_co = Tensor<double>::zeros({co});
        auto zb_ci = Tensor<double>::zeros({ci});
        const double lhs = oracle::inner_product(conv2d(x, wt, zb_co, stride, pad), y);
        const double rhs = oracle::inner_product(x, conv_transpose2d(y, wt, zb_ci, stride, pad));
        const double rel = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-12});
        worst_adj = std::max(worst_adj, rel);
        ++trial;
    }
    const double elapsed = now_s() - t0;
    const bool ok = worst <= 1e-6 && worst_adj <= 1e-5 && elapsed < 60.0;
    return {ok, fmt("%zu sweep cases (worst %.2e), adjoint worst %.2e, runtime=%.1fs", cases,
                    worst, worst_adj, elapsed)};
}

MetricsRow eval_model(ModelParams<float>& params, const Policy& policy, const std::string& name) {
    return evaluate(params, Benchmark::get().eval_split, policy, name);
}

Result criterion3_capacity_ordering() {
    auto& bench = Benchmark::get();
    int ordering_holds = 0;
    bool floor_holds = true;
    std::string detail;
    for (std::uint64_t seed : {kBenchmarkSeed, kBenchmarkSeed + 1, kBenchmarkSeed + 2}) {
        auto& fast = bench.model("fast-only-" + std::to_string(seed), 0.0, seed);
        auto& slow = bench.model("slow-only-" + std::to_string(seed), 1.0, seed);
        Policy slow_policy = Policy::always_slow();
        slow_policy.clear_on_slow = false;  // stateful baseline, matches training
        const MetricsRow fast_row = eval_model(fast.params, Policy::always_fast(), "fast-only");
        const MetricsRow slow_row = eval_model(slow.params, slow_policy, "slow-only");
        if (slow_row.avg_iou >= fast_row.avg_iou) ++ordering_holds;
        if (fast_row.avg_iou < 0.75 || slow_row.avg_iou < 0.75) floor_holds = false;
        detail += fmt("[seed %llu: slow %.4f vs fast %.4f] ",
                      static_cast<unsigned long long>(seed), slow_row.avg_iou, fast_row.avg_iou);
    }
    const bool ok = ordering_holds >= 2 && floor_holds;
    return {ok, detail + fmt("ordering on %d/3 seeds, floor %s", ordering_holds,
                             floor_holds ? "held" : "broken")};
}

// One 240-frame stream (the eval split concatenated), warmup 10, best of two
// runs per policy: steady-state throughput, robust against measurement-order
// effects such as frequency ramping.
double benchmark_fps(ModelParams<float>& params, const Policy& policy) {
    static std::vector<Tensor<float>> frames = [] {
        std::vector<Tensor<float>> all;
        for (const auto& s : Benchmark::get().eval_split)
            all.insert(all.end(), s.frames.begin(), s.frames.end());
        return all;
    }();
    double best = 0.0;
    for (int run = 0; run < 2; ++run)
        best = std::max(best, profile_fps(frames, params, policy, 10));
    return best;
}

Result criterion4_interleaving_value() {
    auto& bench = Benchmark::get();
    auto& interleaved = bench.model("interleaved-" + std::to_string(kBenchmarkSeed), 0.7,
                                    kBenchmarkSeed);
    auto& fast = bench.model("fast-only-" + std::to_string(kBenchmarkSeed), 0.0, kBenchmarkSeed);

    const MetricsRow fast_row = eval_model(fast.params, Policy::always_fast(), "fast-only");
    const MetricsRow mix_row = eval_model(interleaved.params, Policy::one_in(10), "interleaved");
    const double fps_mix = benchmark_fps(interleaved.params, Policy::one_in(10));
    const double fps_slow = benchmark_fps(interleaved.params, Policy::always_slow());
    const double fps_fast = benchmark_fps(interleaved.params, Policy::always_fast());

    const bool iou_ok = mix_row.avg_iou >= fast_row.avg_iou - 0.02;
    const double vs_slow = fps_mix / fps_slow;
    const double vs_fast = fps_mix / fps_fast;
    const bool fps_ok = vs_slow >= 2.0 && vs_fast >= 0.7;
    return {iou_ok && fps_ok,
            fmt("IoU %.4f vs fast-only %.4f (margin 0.02); FPS %.1f = %.2fx slow (need >=2.0), "
                "%.2fx fast (need >=0.7)",
                mix_row.avg_iou, fast_row.avg_iou, fps_mix, vs_slow, vs_fast)};
}

Result criterion5_speed_claim() {
    auto& bench = Benchmark::get();
    auto& interleaved = bench.model("interleaved-" + std::to_string(kBenchmarkSeed), 0.7,
                                    kBenchmarkSeed);
    const std::string model_path = g_work + "/interleaved.mgwt";
    save_checkpoint(model_path, interleaved.params);

    auto parse_fps = [](const CmdResult& r) -> double {
        const auto pos = r.output.find("avg_fps=");
        return pos == std::string::npos ? -1.0 : std::stod(r.output.substr(pos + 8));
    };
    auto mix = run_cli("profile --model " + model_path + " --policy one-in:10 --frames 240 --warmup 10");
    auto slow = run_cli("profile --model " + model_path + " --policy always-slow --frames 240 --warmup 10");
    auto fastr = run_cli("profile --model " + model_path + " --policy always-fast --frames 240 --warmup 10");
    const double fps_mix = parse_fps(mix);
    const double fps_slow = parse_fps(slow);
    const double fps_fast = parse_fps(fastr);
    if (fps_mix <= 0 || fps_slow <= 0 || fps_fast <= 0)
        return {false, "cmd_profile failed: " + mix.output + slow.output + fastr.output};
    const double ratio = fps_mix / fps_slow;

    // Mixture-cost cross-check (informational): one-in-10 cost vs the
    // 0.9/0.1 blend of the pure paths.
    const double cost_blend = 0.9 / fps_fast + 0.1 / fps_slow;
    const double blend_err = std::abs(1.0 / fps_mix - cost_blend) * fps_mix;
    return {ratio >= 2.0,
            fmt("cmd_profile fps: one-in:10 %.1f, always-slow %.1f, always-fast %.1f; ratio "
                "%.2fx (need >=2.0); mixture-cost deviation %.1f%%",
                fps_mix, fps_slow, fps_fast, ratio, 100.0 * blend_err)};
}

Result criterion6_policy_exactness() {
    SplitMix64 rng(0);
    int slow_count = 0;
    for (int t = 0; t < 100; ++t)
        slow_count += decide(Policy::one_in(10), t, rng) == ExtractorKind::Slow;
    if (slow_count != 10) return {false, fmt("one-in:10 ran slow %d times over 100", slow_count)};

    Policy rt = Policy::rand_threshold(0.9, 1234);
    SplitMix64 policy_rng = substream(rt.seed, 0x706f6c696379ULL);
    int rt_slow = 0;
    for (int t = 0; t < 10000; ++t)
        rt_slow += decide(rt, t, policy_rng) == ExtractorKind::Slow;

    // Exact central 99% interval of Binomial(9999, 0.1), computed in-test.
    const int n = 9999;
    const long double p = 0.1L;
    std::vector<long double> pmf(static_cast<std::size_t>(n) + 1);
    pmf[0] = std::pow(1.0L - p, n);
    for (int k = 0; k < n; ++k)
        pmf[static_cast<std::size_t>(k) + 1] = pmf[static_cast<std::size_t>(k)] *
                                               (static_cast<long double>(n - k) / (k + 1)) *
                                               (p / (1.0L - p));
    int lo = 0, hi = n;
    long double cdf = 0.0L;
    for (int k = 0; k <= n; ++k) {
        cdf += pmf[static_cast<std::size_t>(k)];
        if (cdf >= 0.005L) {
            lo = k;
            break;
        }
    }
    cdf = 0.0L;
    for (int k = 0; k <= n; ++k) {
        cdf += pmf[static_cast<std::size_t>(k)];
        if (cdf >= 0.995L) {
            hi = k;
            break;
        }
    }
    const int draws = rt_slow - 1;  // frame 0 is the forced bootstrap
    const bool ok = draws >= lo && draws <= hi;
    return {ok, fmt("one-in:10 exact (10/100); randn>0.9 slow draws %d in 99%% interval [%d,%d]",
                    draws, lo, hi)};
}

Result criterion7_determinism() {
    const std::string d1 = g_work + "/det1.mgrd", d2 = g_work + "/det2.mgrd";
    auto g1 = run_cli("gen --seed 11 --sequences 2 --length 12 --size 16 --out " + d1);
    auto g2 = run_cli("gen --seed 11 --sequences 2 --length 12 --size 16 --out " + d2);
    if (g1.exit_code != 0 || g2.exit_code != 0) return {false, "cmd_gen failed"};
    if (slurp(d1) != slurp(d2)) return {false, "cmd_gen outputs differ across runs"};

    const std::string m1 = g_work + "/det1.mgwt", m2 = g_work + "/det2.mgwt";
    const std::string targs = " --data " + d1 + " --epochs 2 --seed 3 --p-slow 0.7 --out ";
    auto t1 = run_cli("train" + targs + m1);
    auto t2 = run_cli("train" + targs + m2);
    if (t1.exit_code != 0 || t2.exit_code != 0) return {false, "cmd_train failed: " + t1.output};
    if (slurp(m1) != slurp(m2)) return {false, "cmd_train checkpoints differ across runs"};

    // run_stream replay with a fixed policy seed.
    ArchitectureConfig cfg = ArchitectureConfig::desk();
    cfg.input_size = 16;
    auto params = load_checkpoint(m1, cfg);
    SceneParams sp;
    sp.seed = 5;
    sp.num_sequences = 1;
    sp.frames_per_sequence = 20;
    sp.image_size = 16;
    auto frames = generate(sp).front().frames;
    Policy policy = Policy::rand_threshold(0.8, 99);
    auto a = run_stream(frames, params, policy);
    auto b = run_stream(frames, params, policy);
    for (std::size_t t = 0; t < a.schedule.size(); ++t) {
        if (a.schedule[t].kind != b.schedule[t].kind || a.schedule[t].cleared != b.schedule[t].cleared)
            return {false, "run_stream schedules differ across replays"};
        if (a.masks[t].values() != b.masks[t].values())
            return {false, "run_stream masks differ across replays"};
    }
    return {true, "MGRD and MGWT byte-identical across runs; run_stream replay identical"};
}

Result criterion8_metric_correctness() {
    // Brute-force equivalence over all 65,536 pairs of 8-pixel masks.
    for (unsigned a = 0; a < 256; ++a)
        for (unsigned b = 0; b < 256; ++b) {
            auto ta = Tensor<float>::zeros({1, 2, 4});
            auto tb = Tensor<float>::zeros({1, 2, 4});
            int inter = 0, uni = 0;
            for (int i = 0; i < 8; ++i) {
                const bool pa = (a >> i) & 1u;
                const bool pb = (b >> i) & 1u;
                if (pa) ta.values()[static_cast<std::size_t>(i)] = 1.0f;
                if (pb) tb.values()[static_cast<std::size_t>(i)] = 1.0f;
                inter += pa && pb;
                uni += pa || pb;
            }
            const double expect = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
            if (iou(ta, tb) != expect)
                return {false, fmt("iou mismatch on masks a=%u b=%u", a, b)};
        }

    auto empty = Tensor<float>::zeros({1, 2, 2});
    if (iou(empty, empty) != 1.0) return {false, "empty/empty != 1.0"};

    // The three worked examples.
    auto same = Tensor<float>::from_vector({1, 2, 2}, {1, 0, 1, 0});
    if (iou(same, same) != 1.0) return {false, "identity example failed"};
    auto l = Tensor<float>::from_vector({1, 2, 2}, {1, 0, 1, 0});
    auto r = Tensor<float>::from_vector({1, 2, 2}, {0, 1, 0, 1});
    if (iou(l, r) != 0.0) return {false, "disjoint example failed"};
    auto top = Tensor<float>::zeros({1, 4, 4});
    auto left = Tensor<float>::zeros({1, 4, 4});
    for (int row = 0; row < 4; ++row)
        for (int col = 0; col < 4; ++col) {
            if (row < 2) top.values()[static_cast<std::size_t>(row) * 4 + col] = 1.0f;
            if (col < 2) left.values()[static_cast<std::size_t>(row) * 4 + col] = 1.0f;
        }
    if (std::abs(iou(top, left) - 1.0 / 3.0) > 1e-15) return {false, "1/3 example failed"};
    return {true, "65,536-case brute-force equivalence, empty convention, worked examples"};
}

// Returns (pass-structurally, detail); the inequality itself is reported,
// not gated.
Result criterion9_tc_report() {
    auto& bench = Benchmark::get();
    auto& fast = bench.model("fast-only-" + std::to_string(kBenchmarkSeed), 0.0, kBenchmarkSeed);
    auto& interleaved = bench.model("interleaved-" + std::to_string(kBenchmarkSeed), 0.7,
                                    kBenchmarkSeed);
    const MetricsRow fast_row = eval_model(fast.params, Policy::always_fast(), "fast-only");
    const MetricsRow mix_row = eval_model(interleaved.params, Policy::one_in(10), "interleaved");

    std::vector<MetricsRow> rows{fast_row, mix_row};
    write_metrics_csv(rows, g_work + "/tc_report.csv");
    const bool expectation = mix_row.temporal_consistency > fast_row.temporal_consistency;
    return {true, fmt("TC(interleaved one-in:10)=%.4f vs TC(fast-only)=%.4f -> expectation %s "
                      "(reported, not gated; CSV at %s)",
                      mix_row.temporal_consistency, fast_row.temporal_consistency,
                      expectation ? "HELD" : "FAILED", (g_work + "/tc_report.csv").c_str())};
}

Result criterion10_training_sanity() {
    // Overfit one batched sample within 200 steps. Fast-extractor-only
    // training with a hot clipped learning rate memorizes hardest; the slow
    // stack stays untouched, which is fine for a capacity sanity check.
    auto& bench = Benchmark::get();
    ArchitectureConfig arch = ArchitectureConfig::desk();
    auto params = init_params<float>(arch, 3);
    auto opt = AdamState<float>::init(params.parameter_list(), 3e-3);
    SplitMix64 rng(929);
    auto seq = make_training_sequence(bench.train_split.front(), Pipeline::Batched, 0, 6);
    float loss = 1e9f;
    int steps = 0;
    for (; steps < 200; ++steps) {
        loss = train_sequence(seq, params, opt, rng, 0.0, /*clip_norm=*/1.0);
        if (loss < 0.1f) break;
    }
    const bool overfit_ok = loss < 0.1f;

    // Strictly decreasing epoch-mean loss over the first 5 epochs of the
    // standard interleaved run.
    auto& interleaved = bench.model("interleaved-" + std::to_string(kBenchmarkSeed), 0.7,
                                    kBenchmarkSeed);
    bool decreasing = interleaved.epoch_losses.size() >= 5;
    for (std::size_t e = 1; e < 5 && e < interleaved.epoch_losses.size(); ++e)
        if (!(interleaved.epoch_losses[e] < interleaved.epoch_losses[e - 1])) decreasing = false;
    std::string curve;
    for (std::size_t e = 0; e < 5 && e < interleaved.epoch_losses.size(); ++e)
        curve += fmt("%.4f ", interleaved.epoch_losses[e]);
    return {overfit_ok && decreasing,
            fmt("overfit loss %.4f after %d steps (need <0.1); first epochs [%s]%s", loss,
                steps + 1, curve.c_str(), decreasing ? " strictly decreasing" : " NOT decreasing")};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: memlane_acceptance <path-to-cli> [workdir]\n");
        return 2;
    }
    g_cli = argv[1];
    g_work = argc > 2 ? argv[2] : (fs::temp_directory_path() / "memlane_acceptance").string();
    fs::create_directories(g_work);

    struct Criterion {
        int id;
        const char* title;
        std::function<Result()> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "gradient correctness (cmd_gradcheck, 16x16, <1e-4, <5min)", criterion1_gradcheck},
        {2, "convolution oracle equivalence and adjoint identity", criterion2_conv_oracle},
        {3, "capacity ordering on the standard benchmark", criterion3_capacity_ordering},
        {4, "interleaving value (IoU and FPS ratios)", criterion4_interleaving_value},
        {5, "speed claim sanity via cmd_profile", criterion5_speed_claim},
        {6, "policy schedule exactness", criterion6_policy_exactness},
        {7, "determinism of gen/train/run_stream", criterion7_determinism},
        {8, "metric correctness (IoU brute force)", criterion8_metric_correctness},
        {9, "temporal-consistency report", criterion9_tc_report},
        {10, "training sanity (overfit + loss curve)", criterion10_training_sanity},
    };

    int failures = 0;
    std::vector<std::string> lines;
    for (const auto& c : criteria) {
        const double t0 = now_s();
        Result r;
        try {
            r = c.fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed = now_s() - t0;
        const std::string line = fmt("[%s] criterion %d: %s — %s (%.1fs)",
                                     r.pass ? "PASS" : "FAIL", c.id, c.title, r.detail.c_str(),
                                     elapsed);
        std::puts(line.c_str());
        std::fflush(stdout);
        lines.push_back(line);
        if (!r.pass) ++failures;
    }
    std::printf("\n%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
                criteria.size());
    return failures == 0 ? 0 : 1;
}
