#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qgalore {

// Bit widths used for the analytic byte accounting. 4 and 8 count as
// block-quantized (and contribute scale/zero metadata); 16 and 32 are plain
// float payloads.
struct MemoryBits {
    int weight_bits = 8;
    int state_bits = 8;
    int proj_bits = 4;
};

struct MemoryBreakdown {
    std::uint64_t weights = 0;
    std::uint64_t optimizer_states = 0;
    std::uint64_t projections = 0;
    std::uint64_t quant_metadata = 0;

    std::uint64_t total_without_metadata() const {
        return weights + optimizer_states + projections;
    }
    std::uint64_t total_with_metadata() const {
        return total_without_metadata() + quant_metadata;
    }
};

struct LayerShape {
    std::string name;
    int rows = 0;
    int cols = 0;
    bool projected = false; // optimizer states live in the rank-r subspace
    int rank = 0;           // used when projected
};

std::uint64_t payload_bytes(std::uint64_t elements, int bits);
bool bits_quantized(int bits);

// Analytic byte counts: weights at weight_bits; two moments per layer sized
// by the (projected) gradient at state_bits; one projection matrix per
// projected layer at proj_bits; metadata is 8 bytes (two f32) per quantized
// block.
MemoryBreakdown estimate_memory(const std::vector<LayerShape>& layers, const MemoryBits& bits,
                                int block_size = 256);

} // namespace qgalore
