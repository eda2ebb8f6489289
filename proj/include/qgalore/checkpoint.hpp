#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qgalore/matrix.hpp"
#include "qgalore/quant.hpp"

namespace qgalore {

// Checkpoint container format:
//   "QGAL" | version u32 LE | tensor count u32 LE |
//   per tensor: name (u16 LE length + UTF-8) | dtype u8 | rank u8 |
//               dims u32 LE each | block_size u32 LE | payload bytes |
//               scales f32[] | zeros f32[] |
//   CRC32 (u32 LE) over all preceding bytes.
// dtype: 0 = f32 (block_size 0, no scales/zeros), 1 = int8-quantized,
// 2 = int4-quantized. Payload and metadata lengths are derived from the
// dims, dtype, and block size.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TensorRecord {
    std::string name;
    std::uint8_t dtype = 0;
    std::vector<std::uint32_t> dims;
    std::uint32_t block_size = 0;
    std::vector<std::uint8_t> payload;
    std::vector<float> scales;
    std::vector<float> zeros;

    std::uint64_t element_count() const;

    static TensorRecord from_matrix(const std::string& name, const Matrix& m);
    static TensorRecord from_quantized(const std::string& name, const QuantizedTensor& q);
    static TensorRecord from_scalar(const std::string& name, double value);

    Matrix to_matrix() const;
    QuantizedTensor to_quantized() const;
    double to_scalar() const;
};

void save_checkpoint(const std::string& path, const std::vector<TensorRecord>& tensors);
std::vector<TensorRecord> load_checkpoint(const std::string& path);

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes);

} // namespace qgalore
