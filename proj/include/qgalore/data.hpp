#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qgalore/matrix.hpp"
#include "qgalore/model.hpp"

namespace qgalore {

// Byte-level text stream: distinct bytes are remapped to a dense vocabulary
// and the final 5% of the stream is held out as the validation split.
class TextDataset {
public:
    static TextDataset load(const std::string& path);

    int vocab_size() const { return vocab_size_; }
    std::size_t train_size() const { return train_tokens_.size(); }
    std::size_t val_size() const { return val_tokens_.size(); }

    // Batch of (context, next token) windows at uniformly random positions,
    // derived only from (seed, step) so the stream is resume-exact.
    Batch train_batch(int batch_size, int context, std::uint64_t seed, std::int64_t step) const;

    // Deterministic validation windows: evenly spaced over the val split.
    int val_window_count(int context, int max_windows) const;
    Batch val_batch(int context, int max_windows, int batch_index, int batch_size) const;

private:
    std::vector<std::uint8_t> train_tokens_;
    std::vector<std::uint8_t> val_tokens_;
    int vocab_size_ = 0;
};

struct SyntheticSpec {
    int n_features = 16;
    int n_outputs = 1;
    double noise = 0.01;
};

// Linear-regression stream: a fixed ground-truth matrix drawn from the seed,
// Gaussian inputs, targets = W x + noise.
class SyntheticDataset {
public:
    static SyntheticDataset make(const SyntheticSpec& spec, std::uint64_t seed);

    const SyntheticSpec& spec() const { return spec_; }
    const Matrix& ground_truth() const { return truth_; }

    Batch train_batch(int batch_size, std::int64_t step) const;
    Batch val_set(int count) const;

private:
    SyntheticSpec spec_;
    std::uint64_t seed_ = 0;
    Matrix truth_; // n_outputs x n_features
};

// Writes a deterministic word-soup corpus of at least `min_bytes` bytes;
// character structure is strong enough for a char LM to learn. Returns the
// byte count written.
std::size_t write_synthetic_corpus(const std::string& path, std::size_t min_bytes,
                                   std::uint64_t seed);

} // namespace qgalore
