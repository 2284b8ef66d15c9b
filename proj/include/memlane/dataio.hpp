#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "memlane/datagen.hpp"
#include "memlane/errors.hpp"
#include "memlane/inference.hpp"
#include "memlane/metrics.hpp"
#include "memlane/model.hpp"
#include "memlane/tensor.hpp"

namespace memlane {
namespace detail {

// Explicit little-endian packing; the on-disk formats are platform-independent.
inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class ByteReader {
public:
    ByteReader(const std::string& data, const std::string& what) : data_(data), what_(what) {}

    std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | (byte() << 8)); }

    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }

    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::uint8_t byte() {
        if (pos_ >= data_.size())
            throw TruncatedError(what_ + ": truncated at byte " + std::to_string(pos_));
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::string bytes(std::size_t n) {
        if (pos_ + n > data_.size())
            throw TruncatedError(what_ + ": truncated at byte " + std::to_string(pos_));
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void read_f32(float* dst, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) dst[i] = f32();
    }

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

}  // namespace detail

// --- MGRD dataset container -------------------------------------------------
// Header: "MGRD", u16 version=1, u16 reserved=0, u32 sequences, u32 frames,
// u32 height, u32 width. Body per sequence: frames as float32 LE CHW, then
// masks as uint8 {0,1} HW.

inline void save_dataset(const std::string& path, const std::vector<SequenceSample>& samples) {
    if (samples.empty()) throw ArgumentError("save_dataset: no sequences");
    const int T = static_cast<int>(samples.front().frames.size());
    const int H = samples.front().frames.front().dim(1);
    const int W = samples.front().frames.front().dim(2);
    for (const auto& s : samples) {
        if (static_cast<int>(s.frames.size()) != T || static_cast<int>(s.masks.size()) != T)
            throw ArgumentError("save_dataset: ragged sequence lengths");
        for (const auto& f : s.frames)
            if (f.shape() != Shape{3, H, W})
                throw ShapeError("save_dataset: frame shape " + shape_str(f.shape()));
        for (const auto& m : s.masks)
            if (m.shape() != Shape{1, H, W})
                throw ShapeError("save_dataset: mask shape " + shape_str(m.shape()));
    }
    std::string out;
    out.reserve(24 + samples.size() * static_cast<std::size_t>(T) *
                         (static_cast<std::size_t>(3) * H * W * 4 + static_cast<std::size_t>(H) * W));
    out += "MGRD";
    detail::put_u16(out, 1);
    detail::put_u16(out, 0);
    detail::put_u32(out, static_cast<std::uint32_t>(samples.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(T));
    detail::put_u32(out, static_cast<std::uint32_t>(H));
    detail::put_u32(out, static_cast<std::uint32_t>(W));
    for (const auto& s : samples) {
        for (const auto& f : s.frames)
            for (float v : f.values()) detail::put_f32(out, v);
        for (const auto& m : s.masks)
            for (float v : m.values()) out.push_back(v > 0.5f ? char(1) : char(0));
    }
    detail::write_file(path, out);
}

inline std::vector<SequenceSample> load_dataset(const std::string& path) {
    const std::string data = detail::read_file(path);
    detail::ByteReader r(data, "MGRD");
    if (r.bytes(4) != "MGRD") throw BadMagicError("'" + path + "': bad magic, not an MGRD file");
    const std::uint16_t version = r.u16();
    if (version != 1)
        throw VersionError("'" + path + "': unsupported MGRD version " + std::to_string(version));
    r.u16();  // reserved
    const std::uint32_t nseq = r.u32();
    const std::uint32_t T = r.u32();
    const std::uint32_t H = r.u32();
    const std::uint32_t W = r.u32();
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<SequenceSample> samples;
    samples.reserve(nseq);
    for (std::uint32_t i = 0; i < nseq; ++i) {
        SequenceSample s;
        s.sequence_index = static_cast<int>(i);
        for (std::uint32_t t = 0; t < T; ++t) {
            std::vector<float> vals(3 * plane);
            r.read_f32(vals.data(), vals.size());
            s.frames.push_back(Tensor<float>::from_vector(
                {3, static_cast<int>(H), static_cast<int>(W)}, std::move(vals)));
        }
        for (std::uint32_t t = 0; t < T; ++t) {
            std::vector<float> vals(plane);
            for (auto& v : vals) v = static_cast<float>(r.byte());
            s.masks.push_back(Tensor<float>::from_vector(
                {1, static_cast<int>(H), static_cast<int>(W)}, std::move(vals)));
        }
        samples.push_back(std::move(s));
    }
    if (r.remaining() != 0)
        throw IoError("'" + path + "': " + std::to_string(r.remaining()) + " trailing bytes");
    return samples;
}

// --- MGWT weight checkpoint --------------------------------------------------
// "MGWT", u16 version=1, u32 entries; per entry: u16 name length, name bytes,
// u8 rank, u32 extents[rank], float32 LE payload.

inline void save_checkpoint(const std::string& path, ModelParams<float>& params) {
    std::string out;
    out += "MGWT";
    detail::put_u16(out, 1);
    std::uint32_t count = 0;
    params.for_each([&](const std::string&, Tensor<float>&) { ++count; });
    detail::put_u32(out, count);
    params.for_each([&](const std::string& name, Tensor<float>& t) {
        detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(t.rank()));
        for (int d = 0; d < t.rank(); ++d)
            detail::put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
        for (float v : t.values()) detail::put_f32(out, v);
    });
    detail::write_file(path, out);
}

// Rebuilds a fresh parameter set for `config` and fills every tensor from the
// file; unknown, missing, duplicate or misshapen entries are errors.
inline ModelParams<float> load_checkpoint(const std::string& path,
                                          const ArchitectureConfig& config) {
    const std::string data = detail::read_file(path);
    detail::ByteReader r(data, "MGWT");
    if (r.bytes(4) != "MGWT") throw BadMagicError("'" + path + "': bad magic, not an MGWT file");
    const std::uint16_t version = r.u16();
    if (version != 1)
        throw VersionError("'" + path + "': unsupported MGWT version " + std::to_string(version));
    const std::uint32_t count = r.u32();

    std::map<std::string, std::pair<Shape, std::vector<float>>> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.bytes(name_len);
        const int rank = r.byte();
        Shape shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
        std::vector<float> vals(shape_numel(shape));
        r.read_f32(vals.data(), vals.size());
        if (!entries.emplace(name, std::make_pair(std::move(shape), std::move(vals))).second)
            throw IoError("'" + path + "': duplicate parameter '" + name + "'");
    }
    if (r.remaining() != 0)
        throw IoError("'" + path + "': " + std::to_string(r.remaining()) + " trailing bytes");

    ModelParams<float> params = init_params<float>(config, 0);
    params.for_each([&](const std::string& name, Tensor<float>& t) {
        auto it = entries.find(name);
        if (it == entries.end())
            throw IoError("'" + path + "': missing parameter '" + name + "'");
        if (it->second.first != t.shape())
            throw ShapeError("'" + path + "': parameter '" + name + "' has shape " +
                             shape_str(it->second.first) + ", expected " + shape_str(t.shape()));
        t.values() = std::move(it->second.second);
        entries.erase(it);
    });
    if (!entries.empty())
        throw IoError("'" + path + "': unknown parameter '" + entries.begin()->first + "'");
    return params;
}

// Derives (feature/memory channels, downsample) from a checkpoint's entry
// names and shapes; the input size is not stored and comes from the caller.
inline ArchitectureConfig peek_checkpoint_config(const std::string& path, int input_size) {
    const std::string data = detail::read_file(path);
    detail::ByteReader r(data, "MGWT");
    if (r.bytes(4) != "MGWT") throw BadMagicError("'" + path + "': bad magic, not an MGWT file");
    const std::uint16_t version = r.u16();
    if (version != 1)
        throw VersionError("'" + path + "': unsupported MGWT version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    int fast_convs = 0, feature_channels = 0, memory_channels = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.bytes(r.u16());
        const int rank = r.byte();
        Shape shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
        r.bytes(shape_numel(shape) * 4);
        if (name.rfind("fast.conv", 0) == 0 && name.size() > 7 &&
            name.compare(name.size() - 7, 7, ".weight") == 0) {
            ++fast_convs;
            feature_channels = shape[0];  // last one seen is the 1x1 projection
        }
        if (name == "lstm.gate_i.bias") memory_channels = shape[0];
    }
    if (fast_convs < 2 || feature_channels == 0 || memory_channels == 0)
        throw IoError("'" + path + "': cannot derive architecture from checkpoint entries");
    ArchitectureConfig cfg;
    cfg.input_size = input_size;
    cfg.feature_channels = feature_channels;
    cfg.memory_channels = memory_channels;
    cfg.downsample = 1 << (fast_convs - 1);
    cfg.validate();
    return cfg;
}

// --- mask export --------------------------------------------------------------

// Binary PGM, pixel 255 where probability strictly exceeds 0.5.
inline void export_mask(const Tensor<float>& pred, const std::string& path) {
    if (pred.rank() != 3 || pred.dim(0) != 1)
        throw ShapeError("export_mask: expected [1,H,W], got " + shape_str(pred.shape()));
    const int H = pred.dim(1), W = pred.dim(2);
    std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    for (float v : pred.values()) out.push_back(v > 0.5f ? char(255) : char(0));
    detail::write_file(path, out);
}

// --- CSV reports ----------------------------------------------------------------

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::string out = "name,strategy,avg_iou,avg_fps,temporal_consistency\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%.4f,%.2f,%.4f\n", r.avg_iou, r.avg_fps,
                      r.temporal_consistency);
        out += r.name + "," + r.strategy + buf;
    }
    detail::write_file(path, out);
}

inline void write_schedule_csv(const Schedule& schedule, const std::string& path) {
    std::string out = "frame,kind,cleared,latency_s\n";
    char buf[96];
    for (const auto& d : schedule) {
        std::snprintf(buf, sizeof buf, "%d,%s,%d,%.9f\n", d.frame, extractor_name(d.kind),
                      d.cleared ? 1 : 0, d.latency_s);
        out += buf;
    }
    detail::write_file(path, out);
}

inline void write_loss_csv(const std::vector<double>& epoch_losses, const std::string& path) {
    std::string out = "epoch,mean_loss\n";
    char buf[64];
    for (std::size_t e = 0; e < epoch_losses.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f\n", e + 1, epoch_losses[e]);
        out += buf;
    }
    detail::write_file(path, out);
}

}  // namespace memlane
