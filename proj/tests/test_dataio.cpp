#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "memlane/dataio.hpp"
#include "memlane/datagen.hpp"
#include "memlane/model.hpp"
#include "oracles.hpp"

using namespace memlane;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("memlane_test_" + name)).string();
}

std::string slurp(const std::string& path) { return detail::read_file(path); }

std::vector<SequenceSample> tiny_dataset(std::uint64_t seed, int n, int frames, int size) {
    SceneParams p;
    p.seed = seed;
    p.num_sequences = n;
    p.frames_per_sequence = frames;
    p.image_size = size;
    return generate(p);
}

}  // namespace

TEST_CASE("MGRD round-trip is bitwise exact", "[dataio][mgrd]") {
    auto samples = tiny_dataset(42, 2, 3, 16);
    const std::string path = temp_path("roundtrip.mgrd");
    save_dataset(path, samples);
    auto loaded = load_dataset(path);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t t = 0; t < samples[i].frames.size(); ++t) {
            REQUIRE(loaded[i].frames[t].values() == samples[i].frames[t].values());
            REQUIRE(loaded[i].masks[t].values() == samples[i].masks[t].values());
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("MGRD header arithmetic", "[dataio][mgrd]") {
    auto samples = tiny_dataset(1, 2, 3, 16);
    const std::string path = temp_path("size.mgrd");
    save_dataset(path, samples);
    const auto bytes = slurp(path);
    // 24-byte header + per sequence 3 frames of (3*16*16 float32 + 16*16 u8).
    REQUIRE(bytes.size() == 24u + 2u * 3u * (3u * 16 * 16 * 4 + 16u * 16));
    REQUIRE(bytes.substr(0, 4) == "MGRD");
    REQUIRE(static_cast<unsigned char>(bytes[4]) == 1);  // version LE
    REQUIRE(static_cast<unsigned char>(bytes[8]) == 2);  // num_sequences LE
    REQUIRE(static_cast<unsigned char>(bytes[12]) == 3); // frames
    REQUIRE(static_cast<unsigned char>(bytes[16]) == 16); // height
    REQUIRE(static_cast<unsigned char>(bytes[20]) == 16); // width
    std::filesystem::remove(path);
}

TEST_CASE("MGRD corruption raises distinct errors", "[dataio][mgrd][errors]") {
    auto samples = tiny_dataset(2, 1, 2, 16);
    const std::string path = temp_path("corrupt.mgrd");
    save_dataset(path, samples);
    const std::string good = slurp(path);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    detail::write_file(path, bad_magic);
    REQUIRE_THROWS_AS(load_dataset(path), BadMagicError);

    std::string bad_version = good;
    bad_version[4] = 9;
    detail::write_file(path, bad_version);
    REQUIRE_THROWS_AS(load_dataset(path), VersionError);

    detail::write_file(path, good.substr(0, good.size() - 100));
    REQUIRE_THROWS_AS(load_dataset(path), TruncatedError);

    detail::write_file(path, good + "zz");
    REQUIRE_THROWS_AS(load_dataset(path), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("MGWT round-trip preserves forward outputs bitwise", "[dataio][mgwt]") {
    ArchitectureConfig cfg = ArchitectureConfig::desk();
    cfg.input_size = 16;
    auto params = init_params<float>(cfg, 1);
    const std::string path = temp_path("weights.mgwt");
    save_checkpoint(path, params);
    auto loaded = load_checkpoint(path, cfg);

    bool identical = true;
    auto names = params.parameter_names();
    for (const auto& n : names) {
        if (params.find(n)->values() != loaded.find(n)->values()) identical = false;
    }
    REQUIRE(identical);

    SplitMix64 rng(5);
    auto img = Tensor<float>::zeros({3, 16, 16});
    oracle::fill_uniform(img, rng, 0.0, 1.0);
    auto s0 = MemoryState<float>::zeros(cfg);
    auto [l1, n1] = forward_frame(img, ExtractorKind::Slow, s0, params);
    auto [l2, n2] = forward_frame(img, ExtractorKind::Slow, s0, loaded);
    REQUIRE(l1.values() == l2.values());

    // Save-load-save produces identical bytes.
    const std::string path2 = temp_path("weights2.mgwt");
    save_checkpoint(path2, loaded);
    REQUIRE(slurp(path) == slurp(path2));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("MGWT rejects missing and unknown parameters", "[dataio][mgwt][errors]") {
    ArchitectureConfig cfg = ArchitectureConfig::desk();
    cfg.input_size = 16;
    auto params = init_params<float>(cfg, 2);
    const std::string path = temp_path("entries.mgwt");
    save_checkpoint(path, params);
    std::string bytes = slurp(path);

    // Append a bogus entry and bump the count: unknown-parameter error.
    std::string extra = bytes;
    std::string entry;
    detail::put_u16(entry, 12);
    entry += "extra.weight";
    entry.push_back(1);
    detail::put_u32(entry, 1);
    detail::put_f32(entry, 3.5f);
    extra += entry;
    extra[6] = static_cast<char>(static_cast<unsigned char>(extra[6]) + 1);
    detail::write_file(path, extra);
    REQUIRE_THROWS_MATCHES(load_checkpoint(path, cfg), IoError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("extra.weight")));

    // Drop the trailing entry without fixing the count: truncated error.
    detail::write_file(path, bytes.substr(0, bytes.size() - 5));
    REQUIRE_THROWS_AS(load_checkpoint(path, cfg), TruncatedError);

    // Remove the final entry (decoder.final.bias: 2+18+1+4+4 bytes) and fix
    // the count: the loader names the missing parameter.
    std::string missing = bytes.substr(0, bytes.size() - 29);
    missing[6] = static_cast<char>(static_cast<unsigned char>(missing[6]) - 1);
    detail::write_file(path, missing);
    REQUIRE_THROWS_MATCHES(load_checkpoint(path, cfg), IoError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("decoder.final.bias")));

    // A config expecting different shapes reports the offending parameter.
    detail::write_file(path, bytes);
    ArchitectureConfig wider = cfg;
    wider.feature_channels = 48;
    REQUIRE_THROWS_MATCHES(load_checkpoint(path, wider), ShapeError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("fast.conv4.weight")));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint config inference", "[dataio][mgwt]") {
    ArchitectureConfig cfg = ArchitectureConfig::desk();
    cfg.feature_channels = 24;
    cfg.memory_channels = 12;
    auto params = init_params<float>(cfg, 3);
    const std::string path = temp_path("peek.mgwt");
    save_checkpoint(path, params);
    auto inferred = peek_checkpoint_config(path, 64);
    REQUIRE(inferred.feature_channels == 24);
    REQUIRE(inferred.memory_channels == 12);
    REQUIRE(inferred.downsample == 8);
    REQUIRE(inferred.input_size == 64);
    std::filesystem::remove(path);
}

TEST_CASE("PGM export thresholds strictly above 0.5", "[dataio][pgm]") {
    auto pred = Tensor<float>::from_vector({1, 2, 2}, {0.9f, 0.5f, 0.500001f, 0.1f});
    const std::string path = temp_path("mask.pgm");
    export_mask(pred, path);
    const std::string bytes = slurp(path);
    REQUIRE(bytes == std::string("P5\n2 2\n255\n") + '\xff' + '\x00' + '\xff' + '\x00');

    auto hot = Tensor<float>::full({1, 2, 2}, 0.9f);
    export_mask(hot, path);
    const std::string all = slurp(path);
    for (std::size_t i = all.size() - 4; i < all.size(); ++i)
        REQUIRE(static_cast<unsigned char>(all[i]) == 255);
    std::filesystem::remove(path);
}

TEST_CASE("PGM golden bytes for a seeded case", "[dataio][pgm][golden]") {
    SplitMix64 rng = substream(123, 0);
    auto pred = Tensor<float>::zeros({1, 6, 5});
    for (auto& v : pred.values()) v = static_cast<float>(rng.uniform());
    const std::string path = temp_path("golden.pgm");
    export_mask(pred, path);
    REQUIRE(slurp(path) == slurp(std::string(MEMLANE_GOLDEN_DIR) + "/mask_seeded.pgm"));
    std::filesystem::remove(path);
}

TEST_CASE("metrics CSV layout", "[dataio][csv]") {
    const std::string path = temp_path("metrics.csv");
    write_metrics_csv({}, path);
    REQUIRE(slurp(path) == "name,strategy,avg_iou,avg_fps,temporal_consistency\n");

    std::vector<MetricsRow> rows{
        {"baseline-slow", "always-slow", 0.915, 46.18, 1.0},
        {"interleaved", "one-in:10", 0.88, 146.02, 0.9876},
    };
    write_metrics_csv(rows, path);
    REQUIRE(slurp(path) == slurp(std::string(MEMLANE_GOLDEN_DIR) + "/metrics.csv"));
    std::filesystem::remove(path);
}

TEST_CASE("schedule CSV layout", "[dataio][csv]") {
    Schedule schedule{
        {0, ExtractorKind::Slow, true, 0.0125},
        {1, ExtractorKind::Fast, false, 0.0025},
    };
    const std::string path = temp_path("schedule.csv");
    write_schedule_csv(schedule, path);
    REQUIRE(slurp(path) ==
            "frame,kind,cleared,latency_s\n"
            "0,slow,1,0.012500000\n"
            "1,fast,0,0.002500000\n");
    std::filesystem::remove(path);
}

TEST_CASE("loss CSV rows", "[dataio][csv]") {
    const std::string path = temp_path("loss.csv");
    write_loss_csv({0.69, 0.42}, path);
    REQUIRE(slurp(path) ==
            "epoch,mean_loss\n"
            "1,0.690000\n"
            "2,0.420000\n");
    std::filesystem::remove(path);
}
