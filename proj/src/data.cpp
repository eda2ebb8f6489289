#include "qgalore/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <stdexcept>

#include "qgalore/rng.hpp"

namespace qgalore {

TextDataset TextDataset::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ingest_text: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.empty()) throw std::runtime_error("ingest_text: empty file " + path);

    std::array<int, 256> remap;
    remap.fill(-1);
    int next_id = 0;
    std::vector<std::uint8_t> tokens(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        int& slot = remap[bytes[i]];
        if (slot < 0) slot = next_id++;
        tokens[i] = static_cast<std::uint8_t>(slot);
    }

    TextDataset ds;
    ds.vocab_size_ = next_id;
    const std::size_t train_len = (tokens.size() * 95) / 100;
    ds.train_tokens_.assign(tokens.begin(), tokens.begin() + train_len);
    ds.val_tokens_.assign(tokens.begin() + train_len, tokens.end());
    return ds;
}

Batch TextDataset::train_batch(int batch_size, int context, std::uint64_t seed,
                               std::int64_t step) const {
    if (train_tokens_.size() < static_cast<std::size_t>(context) + 1) {
        throw std::runtime_error("ingest_text: train split shorter than one context window");
    }
    RngStream rng = RngStream::derive(seed, RngPurpose::TrainBatch, 0,
                                      static_cast<std::uint64_t>(step));
    Batch b;
    b.size = batch_size;
    b.contexts.resize(static_cast<std::size_t>(batch_size) * context);
    b.next_tokens.resize(batch_size);
    const std::uint64_t span = train_tokens_.size() - context;
    for (int i = 0; i < batch_size; ++i) {
        const std::size_t start = static_cast<std::size_t>(rng.next_u64() % span);
        for (int p = 0; p < context; ++p) {
            b.contexts[static_cast<std::size_t>(i) * context + p] = train_tokens_[start + p];
        }
        b.next_tokens[i] = train_tokens_[start + context];
    }
    return b;
}

int TextDataset::val_window_count(int context, int max_windows) const {
    if (val_tokens_.size() < static_cast<std::size_t>(context) + 1) return 0;
    const std::size_t span = val_tokens_.size() - context;
    return static_cast<int>(std::min<std::size_t>(span, static_cast<std::size_t>(max_windows)));
}

Batch TextDataset::val_batch(int context, int max_windows, int batch_index,
                             int batch_size) const {
    const int total = val_window_count(context, max_windows);
    const int begin = batch_index * batch_size;
    const int count = std::min(batch_size, total - begin);
    if (count <= 0) throw std::out_of_range("val_batch: index past the window set");
    const std::size_t span = val_tokens_.size() - context;
    Batch b;
    b.size = count;
    b.contexts.resize(static_cast<std::size_t>(count) * context);
    b.next_tokens.resize(count);
    for (int i = 0; i < count; ++i) {
        // Evenly spaced, deterministic window positions.
        const std::size_t start = (span * static_cast<std::size_t>(begin + i)) / total;
        for (int p = 0; p < context; ++p) {
            b.contexts[static_cast<std::size_t>(i) * context + p] = val_tokens_[start + p];
        }
        b.next_tokens[i] = val_tokens_[start + context];
    }
    return b;
}

SyntheticDataset SyntheticDataset::make(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.n_features < 1 || spec.n_outputs < 1 || spec.noise < 0.0) {
        throw std::invalid_argument("ingest_synthetic: invalid spec");
    }
    SyntheticDataset ds;
    ds.spec_ = spec;
    ds.seed_ = seed;
    RngStream rng = RngStream::derive(seed, RngPurpose::SyntheticTruth);
    ds.truth_ = Matrix::gaussian(spec.n_outputs, spec.n_features, rng);
    return ds;
}

namespace {

Batch synthetic_draw(const Matrix& truth, const SyntheticSpec& spec, RngStream& rng, int count) {
    Batch b;
    b.size = count;
    b.inputs = Matrix(count, spec.n_features);
    for (std::size_t i = 0; i < b.inputs.size(); ++i) {
        b.inputs.data()[i] = static_cast<float>(rng.next_gaussian());
    }
    b.targets = matmul(b.inputs, transpose(truth));
    for (std::size_t i = 0; i < b.targets.size(); ++i) {
        b.targets.data()[i] += static_cast<float>(spec.noise * rng.next_gaussian());
    }
    return b;
}

} // namespace

Batch SyntheticDataset::train_batch(int batch_size, std::int64_t step) const {
    RngStream rng = RngStream::derive(seed_, RngPurpose::TrainBatch, 1,
                                      static_cast<std::uint64_t>(step));
    return synthetic_draw(truth_, spec_, rng, batch_size);
}

Batch SyntheticDataset::val_set(int count) const {
    RngStream rng = RngStream::derive(seed_, RngPurpose::ValBatch, 1, 0);
    return synthetic_draw(truth_, spec_, rng, count);
}

std::size_t write_synthetic_corpus(const std::string& path, std::size_t min_bytes,
                                   std::uint64_t seed) {
    static const char* const kOnsets[] = {"b",  "br", "c",  "ch", "d",  "dr", "f",  "fl",
                                          "g",  "gr", "h",  "j",  "k",  "l",  "m",  "n",
                                          "p",  "pl", "qu", "r",  "s",  "st", "t",  "tr",
                                          "v",  "w",  "y",  "z",  "sh", "th", "sk", "sp"};
    static const char* const kVowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
    static const char* const kCodas[] = {"",  "n", "r", "s",  "t",  "l",
                                         "m", "d", "k", "ng", "st", "ck"};

    RngStream rng = RngStream::derive(seed, RngPurpose::Generic, 0xC0DE);

    // Fixed lexicon of 1-3 syllable words, sampled with a Zipf-like bias so
    // the character statistics are strongly learnable.
    std::vector<std::string> lexicon;
    lexicon.reserve(384);
    for (int i = 0; i < 384; ++i) {
        std::string word;
        const int syllables = 1 + static_cast<int>(rng.next_u64() % 3);
        for (int s = 0; s < syllables; ++s) {
            word += kOnsets[rng.next_u64() % (sizeof(kOnsets) / sizeof(kOnsets[0]))];
            word += kVowels[rng.next_u64() % (sizeof(kVowels) / sizeof(kVowels[0]))];
            word += kCodas[rng.next_u64() % (sizeof(kCodas) / sizeof(kCodas[0]))];
        }
        lexicon.push_back(word);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_synthetic_corpus: cannot open " + path);

    std::size_t written = 0;
    int words_in_sentence = 0;
    int sentence_len = 6 + static_cast<int>(rng.next_u64() % 9);
    int sentences_in_paragraph = 0;
    while (written < min_bytes) {
        // Zipf-ish rank: square a uniform to favour low ranks.
        const double u = rng.next_uniform();
        const std::size_t rank = static_cast<std::size_t>(u * u * lexicon.size());
        const std::string& word = lexicon[std::min(rank, lexicon.size() - 1)];
        out << word;
        written += word.size();
        ++words_in_sentence;
        if (words_in_sentence >= sentence_len) {
            out << ". ";
            written += 2;
            words_in_sentence = 0;
            sentence_len = 6 + static_cast<int>(rng.next_u64() % 9);
            if (++sentences_in_paragraph >= 5) {
                out << "\n";
                written += 1;
                sentences_in_paragraph = 0;
            }
        } else {
            out << ' ';
            written += 1;
        }
    }
    out << "\n";
    ++written;
    if (!out) throw std::runtime_error("write_synthetic_corpus: write failed for " + path);
    return written;
}

} // namespace qgalore
