#pragma once

// Corpora, chunking, batching and the synthetic tasks.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pf/generator.hpp"
#include "pf/rng.hpp"

namespace pf {

// Byte-level symbol table built from the symbols observed in a corpus.
class Vocabulary {
public:
    Vocabulary() { index_.fill(-1); }

    static Vocabulary from_text(std::string_view text) {
        std::array<bool, 256> seen{};
        for (unsigned char c : text) seen[c] = true;
        Vocabulary v;
        for (int c = 0; c < 256; ++c)
            if (seen[c]) {
                v.index_[c] = static_cast<int>(v.symbols_.size());
                v.symbols_.push_back(static_cast<char>(c));
            }
        return v;
    }

    std::size_t size() const { return symbols_.size(); }
    const std::string& symbols() const { return symbols_; }

    int encode(char c) const {
        const int id = index_[static_cast<unsigned char>(c)];
        if (id < 0) throw std::out_of_range("symbol not in vocabulary");
        return id;
    }
    char decode(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }

    Sequence encode(std::string_view s) const {
        Sequence out;
        out.reserve(s.size());
        for (char c : s) out.push_back(encode(c));
        return out;
    }
    std::string decode(std::span<const int> ids) const {
        std::string out;
        out.reserve(ids.size());
        for (int id : ids) out.push_back(decode(id));
        return out;
    }

private:
    std::string symbols_;
    std::array<int, 256> index_;
};

struct CharCorpus {
    Vocabulary vocab;
    Sequence train_ids, valid_ids, test_ids;
};

struct SplitFractions {
    double train = 0.9;
    double valid = 0.05;
};

// Contiguous train/valid/test split of the whole file; vocabulary is the sorted
// set of bytes observed anywhere in it.
inline CharCorpus corpus_from_text(std::string_view text, SplitFractions split = {}) {
    if (text.empty()) throw std::invalid_argument("corpus is empty");
    if (!(split.train > 0.0 && split.valid >= 0.0 && split.train + split.valid <= 1.0))
        throw std::invalid_argument("invalid split fractions");
    CharCorpus c;
    c.vocab = Vocabulary::from_text(text);
    const Sequence ids = c.vocab.encode(text);
    const auto n = ids.size();
    const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * split.train);
    const auto n_valid = static_cast<std::size_t>(static_cast<double>(n) * split.valid);
    c.train_ids.assign(ids.begin(), ids.begin() + n_train);
    c.valid_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_valid);
    c.test_ids.assign(ids.begin() + n_train + n_valid, ids.end());
    return c;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline CharCorpus load_corpus(const std::string& path, SplitFractions split = {}) {
    const std::string text = read_file(path);
    if (text.empty()) throw std::invalid_argument("corpus file '" + path + "' is empty");
    return corpus_from_text(text, split);
}

struct SequenceDataset {
    std::vector<Sequence> sequences;
    std::size_t length = 0;

    std::size_t size() const { return sequences.size(); }
    bool empty() const { return sequences.empty(); }
};

// Non-overlapping windows of `length`; the remainder is dropped.
inline SequenceDataset chunk_sequences(std::span<const int> ids, std::size_t length) {
    if (length == 0) throw std::invalid_argument("chunk length must be positive");
    SequenceDataset ds;
    ds.length = length;
    for (std::size_t start = 0; start + length <= ids.size(); start += length)
        ds.sequences.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(start),
                                  ids.begin() + static_cast<std::ptrdiff_t>(start + length));
    return ds;
}

// Fisher-Yates on [0, n) driven by Rng::below.
inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

// One epoch of index batches in shuffled order; the final short batch is kept.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t dataset_size, std::size_t batch, Rng& rng) {
    if (batch == 0) throw std::invalid_argument("batch size must be positive");
    if (dataset_size == 0) throw std::invalid_argument("cannot batch an empty dataset");
    const auto order = permutation(dataset_size, rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < dataset_size; i += batch)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(dataset_size, i + batch)));
    return out;
}

inline std::vector<std::vector<std::size_t>> make_batches(const SequenceDataset& ds, std::size_t batch, Rng& rng) {
    return make_batches(ds.size(), batch, rng);
}

// Batch for a global step: epoch e is shuffled with a stream derived from
// (seed, e), so any step can be located without replaying earlier ones.
class BatchSchedule {
public:
    BatchSchedule(std::size_t dataset_size, std::size_t batch, std::uint64_t seed, std::uint64_t stream)
        : n_(dataset_size), batch_(batch), seed_(seed), stream_(stream) {
        if (batch_ == 0) throw std::invalid_argument("batch size must be positive");
        if (n_ == 0) throw std::invalid_argument("cannot batch an empty dataset");
    }

    std::size_t batches_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

    const std::vector<std::size_t>& indices(std::uint64_t step) {
        const std::uint64_t epoch = step / batches_per_epoch();
        if (!cached_ || epoch != epoch_) {
            Rng rng(derive_seed(seed_, stream_, epoch));
            epoch_batches_ = make_batches(n_, batch_, rng);
            epoch_ = epoch;
            cached_ = true;
        }
        return epoch_batches_[step % batches_per_epoch()];
    }

    std::vector<Sequence> gather(const SequenceDataset& ds, std::uint64_t step) {
        std::vector<Sequence> out;
        for (auto i : indices(step)) out.push_back(ds.sequences[i]);
        return out;
    }

private:
    std::size_t n_, batch_;
    std::uint64_t seed_, stream_;
    std::uint64_t epoch_ = 0;
    bool cached_ = false;
    std::vector<std::vector<std::size_t>> epoch_batches_;
};

inline Sequence tile_pattern(std::span<const int> pattern, std::size_t seq_len) {
    Sequence s(seq_len);
    for (std::size_t i = 0; i < seq_len; ++i) s[i] = pattern[i % pattern.size()];
    return s;
}

// Each sequence is a fresh uniform pattern of pattern_len symbols tiled to
// seq_len; only the first pattern_len symbols are unpredictable.
inline SequenceDataset synth_copy_task(std::size_t vocab, std::size_t pattern_len, std::size_t seq_len,
                                       std::size_t count, Rng& rng) {
    if (vocab == 0 || pattern_len == 0 || seq_len == 0 || pattern_len > seq_len)
        throw std::invalid_argument("copy task requires vocab > 0 and 1 <= pattern_len <= seq_len");
    SequenceDataset ds;
    ds.length = seq_len;
    for (std::size_t n = 0; n < count; ++n) {
        Sequence pattern(pattern_len);
        for (auto& s : pattern) s = static_cast<int>(rng.below(vocab));
        ds.sequences.push_back(tile_pattern(pattern, seq_len));
    }
    return ds;
}

struct RasterSequence {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> bits;  // row-major, values 0/1
};

enum class RasterShape { Blank, Rect, Cross, Mixed };

inline RasterShape parse_raster_shape(std::string_view s) {
    if (s == "blank") return RasterShape::Blank;
    if (s == "rect") return RasterShape::Rect;
    if (s == "cross") return RasterShape::Cross;
    if (s == "mixed") return RasterShape::Mixed;
    throw std::invalid_argument("unknown raster shape '" + std::string(s) + "' (blank|rect|cross|mixed)");
}

// Shapes on a W×H grid:
//   rect:  x0 ~ U{0..W−2}, y0 ~ U{0..H−2}, w ~ U{2..W−x0}, h ~ U{2..H−y0}, filled
//   cross: one full row r ~ U{1..H−2} and one full column c ~ U{1..W−2}
//   mixed: rect or cross with equal probability
inline std::vector<RasterSequence> synth_raster_task(std::size_t width, std::size_t height, RasterShape family,
                                                     std::size_t count, Rng& rng) {
    if (width < 4 || height < 4) throw std::invalid_argument("raster sides must be at least 4");
    std::vector<RasterSequence> out;
    for (std::size_t n = 0; n < count; ++n) {
        RasterSequence r{width, height, std::vector<std::uint8_t>(width * height, 0)};
        RasterShape shape = family;
        if (shape == RasterShape::Mixed) shape = rng.bernoulli(0.5) ? RasterShape::Rect : RasterShape::Cross;
        if (shape == RasterShape::Rect) {
            const auto x0 = rng.below(width - 1);
            const auto y0 = rng.below(height - 1);
            const auto w = 2 + rng.below(width - x0 - 1);
            const auto h = 2 + rng.below(height - y0 - 1);
            for (std::size_t y = y0; y < y0 + h; ++y)
                for (std::size_t x = x0; x < x0 + w; ++x) r.bits[y * width + x] = 1;
        } else if (shape == RasterShape::Cross) {
            const auto row = 1 + rng.below(height - 2);
            const auto col = 1 + rng.below(width - 2);
            for (std::size_t x = 0; x < width; ++x) r.bits[row * width + x] = 1;
            for (std::size_t y = 0; y < height; ++y) r.bits[y * width + col] = 1;
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline SequenceDataset raster_dataset(std::span<const RasterSequence> rasters) {
    SequenceDataset ds;
    if (rasters.empty()) return ds;
    ds.length = rasters[0].bits.size();
    for (const auto& r : rasters) ds.sequences.emplace_back(r.bits.begin(), r.bits.end());
    return ds;
}

}  // namespace pf
