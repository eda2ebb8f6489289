#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qgalore/matrix.hpp"
#include "qgalore/rng.hpp"

namespace qgalore {

enum class Rounding {
    NearestTiesToEven,
    Stochastic,
};

struct QuantSpec {
    int bits = 8;       // 4 or 8
    int block_size = 256;
    Rounding rounding = Rounding::NearestTiesToEven;

    int qmin() const { return -(1 << (bits - 1)); }
    int qmax() const { return (1 << (bits - 1)) - 1; }
    void validate() const;
};

// Block-wise affine-quantized tensor: packed signed integers plus one
// (scale, zero) pair of floats per block. Blocks are formed over the
// flattened row-major element order.
class QuantizedTensor {
public:
    QuantizedTensor() = default;

    static QuantizedTensor from_parts(int rows, int cols, QuantSpec spec,
                                      std::vector<std::uint8_t> payload,
                                      std::vector<float> scales, std::vector<float> zeros);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t element_count() const {
        return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_);
    }
    std::size_t block_count() const {
        return (element_count() + spec_.block_size - 1) / spec_.block_size;
    }
    const QuantSpec& spec() const { return spec_; }
    const std::vector<std::uint8_t>& payload() const { return payload_; }
    const std::vector<float>& scales() const { return scales_; }
    const std::vector<float>& zeros() const { return zeros_; }

    // Unpacks the payload into one signed integer per element.
    std::vector<std::int8_t> unpacked_values() const;

    bool valid() const { return rows_ > 0 && cols_ > 0; }

private:
    friend QuantizedTensor quantize(const Matrix&, const QuantSpec&, RngStream*);
    int rows_ = 0;
    int cols_ = 0;
    QuantSpec spec_;
    std::vector<std::uint8_t> payload_;
    std::vector<float> scales_;
    std::vector<float> zeros_;
};

// Block-wise uniform quantization: per block, s = (max - min) / (2^bits - 1),
// z = round(-min / s) - 2^(bits-1), q = clamp(round(w / s) + z). Constant
// blocks use the sentinel s = 1, z = -min, q = 0 so dequantization reproduces
// the constant bit-exactly. `rng` is required for Rounding::Stochastic.
QuantizedTensor quantize(const Matrix& w, const QuantSpec& spec, RngStream* rng = nullptr);

// w = (q - z) * s per element.
Matrix dequantize(const QuantizedTensor& q);

// floor(x) with probability ceil(x) - x, else ceil(x). Unbiased: E = x.
std::int64_t stochastic_round(double x, RngStream& rng);

// Dequantize, add delta in high precision, requantize with fresh per-block
// scale/zero under the given rounding mode.
QuantizedTensor apply_update(const QuantizedTensor& wq, const Matrix& delta, Rounding rounding,
                             RngStream* rng);
QuantizedTensor apply_update_sr(const QuantizedTensor& wq, const Matrix& delta, RngStream& rng);

// Two's-complement nibble packing, earlier element in the low nibble; odd
// counts pad the final high nibble with zero.
std::vector<std::uint8_t> pack_int4(std::span<const std::int8_t> values);
std::vector<std::int8_t> unpack_int4(std::span<const std::uint8_t> bytes, std::size_t count);

} // namespace qgalore
