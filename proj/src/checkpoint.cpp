#include "qgalore/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <limits>

namespace qgalore {
namespace {

constexpr char kMagic[4] = {'Q', 'G', 'A', 'L'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& data) : data_(data) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        const std::uint8_t* p = take(2);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        const std::uint8_t* p = take(4);
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        const std::uint8_t* p = take(n);
        return std::vector<std::uint8_t>(p, p + n);
    }
    std::string str(std::size_t n) {
        const std::uint8_t* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    std::size_t offset() const { return pos_; }

private:
    const std::uint8_t* take(std::size_t n) {
        if (pos_ + n > data_.size()) {
            throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
        }
        const std::uint8_t* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    const std::vector<std::uint8_t>& data_;
    std::size_t pos_ = 0;
};

std::uint64_t payload_length(std::uint8_t dtype, std::uint64_t count) {
    switch (dtype) {
        case 0: return count * 4;
        case 1: return count;
        case 2: return (count + 1) / 2;
        default: throw CheckpointError("checkpoint: unknown dtype " + std::to_string(dtype));
    }
}

} // namespace

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

std::uint64_t TensorRecord::element_count() const {
    std::uint64_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

TensorRecord TensorRecord::from_matrix(const std::string& name, const Matrix& m) {
    TensorRecord r;
    r.name = name;
    r.dtype = 0;
    r.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    r.block_size = 0;
    r.payload.resize(m.size() * 4);
    std::memcpy(r.payload.data(), m.data(), r.payload.size());
    return r;
}

TensorRecord TensorRecord::from_quantized(const std::string& name, const QuantizedTensor& q) {
    TensorRecord r;
    r.name = name;
    r.dtype = (q.spec().bits == 8) ? 1 : 2;
    r.dims = {static_cast<std::uint32_t>(q.rows()), static_cast<std::uint32_t>(q.cols())};
    r.block_size = static_cast<std::uint32_t>(q.spec().block_size);
    r.payload = q.payload();
    r.scales = q.scales();
    r.zeros = q.zeros();
    return r;
}

TensorRecord TensorRecord::from_scalar(const std::string& name, double value) {
    TensorRecord r;
    r.name = name;
    r.dtype = 0;
    r.dims = {1};
    r.block_size = 0;
    const float v = static_cast<float>(value);
    r.payload.resize(4);
    std::memcpy(r.payload.data(), &v, 4);
    return r;
}

Matrix TensorRecord::to_matrix() const {
    if (dtype != 0) throw CheckpointError("tensor " + name + " is not f32");
    if (dims.size() != 2) throw CheckpointError("tensor " + name + " is not 2-D");
    std::vector<float> data(element_count());
    std::memcpy(data.data(), payload.data(), payload.size());
    return Matrix::from_data(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                             std::move(data));
}

QuantizedTensor TensorRecord::to_quantized() const {
    if (dtype != 1 && dtype != 2) throw CheckpointError("tensor " + name + " is not quantized");
    if (dims.size() != 2) throw CheckpointError("tensor " + name + " is not 2-D");
    QuantSpec spec;
    spec.bits = (dtype == 1) ? 8 : 4;
    spec.block_size = static_cast<int>(block_size);
    return QuantizedTensor::from_parts(static_cast<int>(dims[0]), static_cast<int>(dims[1]), spec,
                                       payload, scales, zeros);
}

double TensorRecord::to_scalar() const {
    if (dtype != 0 || element_count() != 1) {
        throw CheckpointError("tensor " + name + " is not a scalar");
    }
    float v;
    std::memcpy(&v, payload.data(), 4);
    return static_cast<double>(v);
}

void save_checkpoint(const std::string& path, const std::vector<TensorRecord>& tensors) {
    std::vector<std::uint8_t> body;
    body.insert(body.end(), kMagic, kMagic + 4);
    put_u32(body, kCheckpointVersion);
    put_u32(body, static_cast<std::uint32_t>(tensors.size()));

    for (const TensorRecord& t : tensors) {
        if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw CheckpointError("tensor name too long: " + t.name);
        }
        const std::uint64_t count = t.element_count();
        if (t.payload.size() != payload_length(t.dtype, count)) {
            throw CheckpointError("tensor " + t.name + ": payload length mismatch");
        }
        put_u16(body, static_cast<std::uint16_t>(t.name.size()));
        body.insert(body.end(), t.name.begin(), t.name.end());
        body.push_back(t.dtype);
        body.push_back(static_cast<std::uint8_t>(t.dims.size()));
        for (std::uint32_t d : t.dims) put_u32(body, d);
        put_u32(body, t.block_size);
        body.insert(body.end(), t.payload.begin(), t.payload.end());
        for (float s : t.scales) put_f32(body, s);
        for (float z : t.zeros) put_f32(body, z);
    }

    const std::uint32_t crc = crc32_ieee(std::span<const std::uint8_t>(body));
    put_u32(body, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(body.data()),
              static_cast<std::streamsize>(body.size()));
    if (!out) throw CheckpointError("checkpoint write failed: " + path);
}

std::vector<TensorRecord> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (data.size() < 16) throw CheckpointError("checkpoint too short: " + path);

    const std::uint32_t stored_crc =
        static_cast<std::uint32_t>(data[data.size() - 4]) |
        (static_cast<std::uint32_t>(data[data.size() - 3]) << 8) |
        (static_cast<std::uint32_t>(data[data.size() - 2]) << 16) |
        (static_cast<std::uint32_t>(data[data.size() - 1]) << 24);
    const std::uint32_t computed =
        crc32_ieee(std::span<const std::uint8_t>(data.data(), data.size() - 4));
    if (stored_crc != computed) {
        throw CheckpointError("checkpoint checksum mismatch in " + path);
    }

    std::vector<std::uint8_t> body(data.begin(), data.end() - 4);
    Reader r(body);
    if (r.str(4) != std::string(kMagic, 4)) {
        throw CheckpointError("bad checkpoint magic in " + path);
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();

    std::vector<TensorRecord> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord t;
        const std::uint16_t name_len = r.u16();
        t.name = r.str(name_len);
        t.dtype = r.u8();
        const std::uint8_t rank = r.u8();
        t.dims.resize(rank);
        for (std::uint8_t d = 0; d < rank; ++d) t.dims[d] = r.u32();
        t.block_size = r.u32();
        const std::uint64_t elems = t.element_count();
        t.payload = r.bytes(payload_length(t.dtype, elems));
        if (t.dtype != 0) {
            if (t.block_size == 0) {
                throw CheckpointError("tensor " + t.name + ": quantized with block_size 0");
            }
            const std::uint64_t blocks = (elems + t.block_size - 1) / t.block_size;
            t.scales.resize(blocks);
            t.zeros.resize(blocks);
            for (std::uint64_t b = 0; b < blocks; ++b) t.scales[b] = r.f32();
            for (std::uint64_t b = 0; b < blocks; ++b) t.zeros[b] = r.f32();
        }
        tensors.push_back(std::move(t));
    }
    if (r.offset() != body.size()) {
        throw CheckpointError("checkpoint has " + std::to_string(body.size() - r.offset()) +
                              " trailing bytes");
    }
    return tensors;
}

} // namespace qgalore
