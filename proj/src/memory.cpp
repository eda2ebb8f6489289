#include "qgalore/memory.hpp"

#include <stdexcept>

namespace qgalore {

bool bits_quantized(int bits) { return bits == 4 || bits == 8; }

std::uint64_t payload_bytes(std::uint64_t elements, int bits) {
    switch (bits) {
        case 4: return (elements + 1) / 2;
        case 8: return elements;
        case 16: return elements * 2;
        case 32: return elements * 4;
        default: throw std::invalid_argument("payload_bytes: unsupported width " +
                                             std::to_string(bits));
    }
}

namespace {

std::uint64_t metadata_bytes(std::uint64_t elements, int bits, int block_size) {
    if (!bits_quantized(bits)) return 0;
    const std::uint64_t blocks = (elements + block_size - 1) / block_size;
    return blocks * 8; // one f32 scale + one f32 zero per block
}

} // namespace

MemoryBreakdown estimate_memory(const std::vector<LayerShape>& layers, const MemoryBits& bits,
                                int block_size) {
    if (block_size < 1) throw std::invalid_argument("estimate_memory: block_size must be >= 1");
    MemoryBreakdown out;
    for (const LayerShape& layer : layers) {
        const std::uint64_t elements =
            static_cast<std::uint64_t>(layer.rows) * static_cast<std::uint64_t>(layer.cols);
        out.weights += payload_bytes(elements, bits.weight_bits);
        out.quant_metadata += metadata_bytes(elements, bits.weight_bits, block_size);

        std::uint64_t state_elements = elements;
        if (layer.projected) {
            if (layer.rank < 1) {
                throw std::invalid_argument("estimate_memory: projected layer " + layer.name +
                                            " needs a positive rank");
            }
            // The projected gradient keeps the long side: r x cols when
            // rows <= cols, rows x r otherwise; P holds the short side.
            const std::uint64_t long_side =
                static_cast<std::uint64_t>(layer.rows <= layer.cols ? layer.cols : layer.rows);
            const std::uint64_t short_side =
                static_cast<std::uint64_t>(layer.rows <= layer.cols ? layer.rows : layer.cols);
            state_elements = static_cast<std::uint64_t>(layer.rank) * long_side;
            const std::uint64_t proj_elements =
                short_side * static_cast<std::uint64_t>(layer.rank);
            out.projections += payload_bytes(proj_elements, bits.proj_bits);
            out.quant_metadata += metadata_bytes(proj_elements, bits.proj_bits, block_size);
        }
        out.optimizer_states += 2 * payload_bytes(state_elements, bits.state_bits);
        out.quant_metadata += 2 * metadata_bytes(state_elements, bits.state_bits, block_size);
    }
    return out;
}

} // namespace qgalore
