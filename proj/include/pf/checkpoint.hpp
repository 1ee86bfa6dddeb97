#pragma once

// Checkpoint file format (all integers and reals little-endian):
//
//   magic      8 bytes  "PFCK0001"
//   payload    6 sections, each: u64 byte length, then the section bytes
//                0 config       canonical key=value text
//                1 generator    tensor block
//                2 discriminator tensor block
//                3 adam (gen)   adam block
//                4 adam (disc)  adam block
//                5 state        key=value text: step, vocab, symbols (hex),
//                               best_valid_nll (hex float), rng_seed, rng_step
//   crc        u32 CRC-32 (zlib polynomial) of the payload bytes
//
//   tensor block: u64 count; per tensor u32 rank, u64 dims[rank], f64 data[]
//   adam block:   u64 t; f64 lr, beta1, beta2, eps; tensor block m; tensor block v

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "pf/config.hpp"
#include "pf/data.hpp"
#include "pf/engine.hpp"
#include "pf/io.hpp"

namespace pf {

inline constexpr std::string_view kCheckpointMagic = "PFCK0001";

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    TrainConfig config;
    std::size_t vocab = 0;
    std::string symbols;  // corpus byte for each id; empty for synthetic tasks
    Model model;
    Optimizers optim;
    std::uint64_t step = 0;  // number of completed updates
    double best_valid_nll = INFINITY;
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class ByteWriter {
public:
    template <class T>
    void put(T v) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
        buf_.append(reinterpret_cast<const char*>(b), sizeof(T));
    }
    void bytes(std::string_view s) { buf_.append(s); }
    void section(const ByteWriter& w) {
        put<std::uint64_t>(w.buf_.size());
        buf_.append(w.buf_);
    }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    template <class T>
    T get() {
        need(sizeof(T));
        unsigned char b[sizeof(T)];
        std::memcpy(b, data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    ByteReader section() {
        const auto n = get<std::uint64_t>();
        return ByteReader(bytes(static_cast<std::size_t>(n)));
    }
    bool done() const { return pos_ == data_.size(); }
    std::string_view rest() const { return data_.substr(pos_); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

inline void put_tensors(ByteWriter& w, std::span<const Tensor* const> ts) {
    w.put<std::uint64_t>(ts.size());
    for (const Tensor* t : ts) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t->shape.size()));
        for (auto d : t->shape) w.put<std::uint64_t>(d);
        for (double x : t->data) w.put<double>(x);
    }
}

inline std::vector<Tensor> get_tensors(ByteReader& r) {
    const auto n = r.get<std::uint64_t>();
    std::vector<Tensor> out;
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto rank = r.get<std::uint32_t>();
        if (rank == 0 || rank > 8) throw CheckpointError("checkpoint: bad tensor rank");
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
        const std::size_t count = numel(shape);
        if (count == 0 || count > (std::size_t{1} << 32)) throw CheckpointError("checkpoint: bad tensor shape");
        std::vector<double> data(count);
        for (auto& x : data) x = r.get<double>();
        out.emplace_back(std::move(shape), std::move(data));
    }
    return out;
}

inline void assign_tensors(std::span<Tensor* const> dst, const std::vector<Tensor>& src, const char* what) {
    if (dst.size() != src.size())
        throw CheckpointError(std::string("checkpoint: ") + what + " has " + std::to_string(src.size()) +
                              " tensors, expected " + std::to_string(dst.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i]->shape != src[i].shape)
            throw CheckpointError(std::string("checkpoint: ") + what + " tensor " + std::to_string(i) + " has shape " +
                                  to_string(src[i].shape) + ", expected " + to_string(dst[i]->shape));
        dst[i]->data = src[i].data;
        dst[i]->grad.clear();
    }
}

inline void put_adam(ByteWriter& w, const AdamState& s) {
    w.put<std::uint64_t>(s.t);
    for (double x : {s.lr, s.beta1, s.beta2, s.eps}) w.put<double>(x);
    std::vector<Tensor> m, v;
    for (const auto& x : s.m) m.emplace_back(Shape{x.size()}, x);
    for (const auto& x : s.v) v.emplace_back(Shape{x.size()}, x);
    std::vector<const Tensor*> mp, vp;
    for (const auto& t : m) mp.push_back(&t);
    for (const auto& t : v) vp.push_back(&t);
    put_tensors(w, mp);
    put_tensors(w, vp);
}

inline AdamState get_adam(ByteReader& r, std::span<Tensor* const> params) {
    AdamState s;
    s.t = r.get<std::uint64_t>();
    s.lr = r.get<double>();
    s.beta1 = r.get<double>();
    s.beta2 = r.get<double>();
    s.eps = r.get<double>();
    const auto m = get_tensors(r);
    const auto v = get_tensors(r);
    if (m.size() != params.size() || v.size() != params.size())
        throw CheckpointError("checkpoint: optimizer state does not match parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (m[i].size() != params[i]->size() || v[i].size() != params[i]->size())
            throw CheckpointError("checkpoint: optimizer moment shape mismatch");
        s.m.push_back(m[i].data);
        s.v.push_back(v[i].data);
    }
    return s;
}

inline std::string hex_encode(std::string_view s) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned char c : s) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 15]);
    }
    return out;
}

inline std::string hex_decode(std::string_view s) {
    if (s.size() % 2) throw CheckpointError("checkpoint: odd-length hex string");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw CheckpointError("checkpoint: bad hex digit");
    };
    std::string out;
    for (std::size_t i = 0; i < s.size(); i += 2) out.push_back(static_cast<char>(nib(s[i]) * 16 + nib(s[i + 1])));
    return out;
}

inline std::map<std::string, std::string> parse_kv(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = text.substr(start, nl - start);
        if (!line.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw CheckpointError("checkpoint: malformed state line");
            out.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
        }
        start = nl + 1;
    }
    return out;
}

inline std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), n);
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

inline std::string hexfloat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

}  // namespace detail

inline std::string serialize_checkpoint(Checkpoint& ck) {
    using namespace detail;
    ByteWriter payload;
    {
        ByteWriter s;
        s.bytes(ck.config.canonical_text());
        payload.section(s);
    }
    auto const_view = [](std::vector<Tensor*> v) { return std::vector<const Tensor*>(v.begin(), v.end()); };
    {
        ByteWriter s;
        put_tensors(s, const_view(ck.model.gen.tensors()));
        payload.section(s);
    }
    {
        ByteWriter s;
        put_tensors(s, const_view(ck.model.disc.tensors()));
        payload.section(s);
    }
    {
        ByteWriter s;
        put_adam(s, ck.optim.gen);
        payload.section(s);
    }
    {
        ByteWriter s;
        put_adam(s, ck.optim.disc);
        payload.section(s);
    }
    {
        ByteWriter s;
        std::string text;
        text += "best_valid_nll=" + hexfloat(ck.best_valid_nll) + "\n";
        text += "rng_seed=" + std::to_string(ck.config.require_seed()) + "\n";
        text += "rng_step=" + std::to_string(ck.step) + "\n";
        text += "step=" + std::to_string(ck.step) + "\n";
        text += "symbols=" + hex_encode(ck.symbols) + "\n";
        text += "vocab=" + std::to_string(ck.vocab) + "\n";
        s.bytes(text);
        payload.section(s);
    }
    ByteWriter file;
    file.bytes(kCheckpointMagic);
    file.bytes(payload.str());
    file.put<std::uint32_t>(crc32_of(payload.str()));
    return file.str();
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
    using namespace detail;
    if (bytes.size() < kCheckpointMagic.size()) throw CheckpointError("checkpoint truncated");
    const auto magic = bytes.substr(0, kCheckpointMagic.size());
    if (magic.substr(0, 4) != "PFCK") throw CheckpointError("not a checkpoint file (bad magic)");
    if (magic != kCheckpointMagic)
        throw CheckpointError("unsupported checkpoint version " + std::string(magic) + " (expected " +
                              std::string(kCheckpointMagic) + ")");
    if (bytes.size() < kCheckpointMagic.size() + 4) throw CheckpointError("checkpoint truncated");
    const auto payload = bytes.substr(kCheckpointMagic.size(), bytes.size() - kCheckpointMagic.size() - 4);
    ByteReader crc_reader(bytes.substr(bytes.size() - 4));
    if (crc_reader.get<std::uint32_t>() != crc32_of(payload)) throw CheckpointError("checkpoint checksum mismatch");

    ByteReader r(payload);
    Checkpoint ck;
    auto config_sec = r.section();
    ck.config = config_from_text(config_sec.rest());
    auto gen_sec = r.section();
    auto disc_sec = r.section();
    auto adam_g_sec = r.section();
    auto adam_d_sec = r.section();
    auto state_sec = r.section();
    if (!r.done()) throw CheckpointError("checkpoint has trailing data");

    const auto state = parse_kv(state_sec.rest());
    auto field = [&](const char* k) -> const std::string& {
        auto it = state.find(k);
        if (it == state.end()) throw CheckpointError(std::string("checkpoint state lacks '") + k + "'");
        return it->second;
    };
    ck.step = std::stoull(field("step"));
    ck.vocab = std::stoull(field("vocab"));
    ck.symbols = hex_decode(field("symbols"));
    ck.best_valid_nll = std::strtod(field("best_valid_nll").c_str(), nullptr);

    ck.model = Model::init(ck.config, ck.vocab);
    assign_tensors(ck.model.gen.tensors(), get_tensors(gen_sec), "generator");
    assign_tensors(ck.model.disc.tensors(), get_tensors(disc_sec), "discriminator");
    ck.optim.gen = get_adam(adam_g_sec, ck.model.gen.tensors());
    ck.optim.disc = get_adam(adam_d_sec, ck.model.disc.tensors());
    return ck;
}

inline void save_checkpoint(Checkpoint& ck, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = read_file(path.string());
    } catch (const std::runtime_error& e) {
        throw CheckpointError(e.what());
    }
    return deserialize_checkpoint(bytes);
}

}  // namespace pf
