#pragma once

#include <stdexcept>

#include "qgalore/matrix.hpp"
#include "qgalore/quant.hpp"

namespace qgalore {

// Storage precision for a tensor kept between steps. Float32 is the
// passthrough mode: no quantization, used by the non-quantized baselines and
// as the test hook for bypassing quantization entirely.
enum class StoreFormat {
    Float32,
    Int8,
    Int4,
};

inline int store_bits(StoreFormat f) {
    switch (f) {
        case StoreFormat::Float32: return 32;
        case StoreFormat::Int8: return 8;
        case StoreFormat::Int4: return 4;
    }
    return 32;
}

const char* store_format_name(StoreFormat f);

// A matrix held either densely (Float32) or block-quantized (Int8/Int4)
// behind one interface, so optimizer and model code is format-agnostic.
class TensorStore {
public:
    TensorStore() = default;

    static TensorStore pack(const Matrix& value, StoreFormat fmt, Rounding rounding,
                            RngStream* rng, int block_size = 256);
    static TensorStore from_quantized(QuantizedTensor q);
    static TensorStore from_dense(Matrix m);

    Matrix unpack() const;

    // value <- value + delta; quantized formats requantize via apply_update,
    // Float32 adds in place.
    void apply_update(const Matrix& delta, Rounding rounding, RngStream* rng);

    StoreFormat format() const { return format_; }
    int rows() const;
    int cols() const;
    bool valid() const;
    bool quantized() const { return format_ != StoreFormat::Float32; }

    const QuantizedTensor& quantized_tensor() const;
    const Matrix& dense() const;
    Matrix& dense();

private:
    StoreFormat format_ = StoreFormat::Float32;
    Matrix dense_;
    QuantizedTensor q_;
};

} // namespace qgalore
