#include "qgalore/quant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qgalore {
namespace {

// Round-half-to-even, independent of the ambient FP rounding mode.
double round_ties_even(double x) {
    double f = std::floor(x);
    double d = x - f;
    if (d > 0.5) return f + 1.0;
    if (d < 0.5) return f;
    // Exact tie: pick the even neighbour.
    return (std::fmod(f, 2.0) == 0.0) ? f : f + 1.0;
}

std::int64_t clamp_q(std::int64_t q, const QuantSpec& spec) {
    if (q < spec.qmin()) return spec.qmin();
    if (q > spec.qmax()) return spec.qmax();
    return q;
}

} // namespace

void QuantSpec::validate() const {
    if (bits != 4 && bits != 8) {
        throw std::invalid_argument("QuantSpec: bits must be 4 or 8, got " + std::to_string(bits));
    }
    if (block_size < 1) {
        throw std::invalid_argument("QuantSpec: block_size must be >= 1, got " +
                                    std::to_string(block_size));
    }
}

QuantizedTensor QuantizedTensor::from_parts(int rows, int cols, QuantSpec spec,
                                            std::vector<std::uint8_t> payload,
                                            std::vector<float> scales, std::vector<float> zeros) {
    spec.validate();
    QuantizedTensor q;
    q.rows_ = rows;
    q.cols_ = cols;
    q.spec_ = spec;
    const std::size_t count = q.element_count();
    const std::size_t expect_payload = (spec.bits == 4) ? (count + 1) / 2 : count;
    if (payload.size() != expect_payload) {
        throw std::invalid_argument("QuantizedTensor: payload length " +
                                    std::to_string(payload.size()) + " does not match shape " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (scales.size() != q.block_count() || zeros.size() != q.block_count()) {
        throw std::invalid_argument("QuantizedTensor: metadata length mismatch, expected " +
                                    std::to_string(q.block_count()) + " blocks");
    }
    for (std::size_t b = 0; b < scales.size(); ++b) {
        if (!(scales[b] > 0.0f) || !std::isfinite(scales[b])) {
            throw std::invalid_argument("QuantizedTensor: non-positive scale in block " +
                                        std::to_string(b));
        }
        if (!std::isfinite(zeros[b])) {
            throw std::invalid_argument("QuantizedTensor: non-finite zero-point in block " +
                                        std::to_string(b));
        }
    }
    q.payload_ = std::move(payload);
    q.scales_ = std::move(scales);
    q.zeros_ = std::move(zeros);
    for (std::int8_t v : q.unpacked_values()) {
        if (v < spec.qmin() || v > spec.qmax()) {
            throw std::invalid_argument("QuantizedTensor: stored value " + std::to_string(v) +
                                        " outside the " + std::to_string(spec.bits) +
                                        "-bit range");
        }
    }
    return q;
}

std::vector<std::int8_t> QuantizedTensor::unpacked_values() const {
    if (spec_.bits == 4) {
        return unpack_int4(std::span<const std::uint8_t>(payload_), element_count());
    }
    std::vector<std::int8_t> out(element_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::int8_t>(payload_[i]);
    }
    return out;
}

QuantizedTensor quantize(const Matrix& w, const QuantSpec& spec, RngStream* rng) {
    spec.validate();
    if (w.empty()) throw std::invalid_argument("quantize: empty input");
    if (spec.rounding == Rounding::Stochastic && rng == nullptr) {
        throw std::invalid_argument("quantize: stochastic rounding requires an rng stream");
    }

    const std::size_t count = w.size();
    const std::size_t nblocks = (count + spec.block_size - 1) / spec.block_size;
    std::vector<std::int8_t> qvals(count);
    std::vector<float> scales(nblocks);
    std::vector<float> zeros(nblocks);

    const float* data = w.data();
    const std::int64_t half = std::int64_t{1} << (spec.bits - 1);
    const double levels = static_cast<double>((std::int64_t{1} << spec.bits) - 1);

    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t begin = b * spec.block_size;
        const std::size_t end = std::min(count, begin + spec.block_size);

        float lo = data[begin];
        float hi = data[begin];
        for (std::size_t i = begin; i < end; ++i) {
            const float x = data[i];
            if (!std::isfinite(x)) {
                throw std::invalid_argument("quantize: non-finite value in block " +
                                            std::to_string(b) + " (flat index " +
                                            std::to_string(i) + ")");
            }
            if (x < lo) lo = x;
            if (x > hi) hi = x;
        }

        if (hi == lo) {
            // Constant block: dequantization must reproduce the constant
            // bit-exactly, so park the value in the zero-point.
            scales[b] = 1.0f;
            zeros[b] = -lo;
            for (std::size_t i = begin; i < end; ++i) qvals[i] = 0;
            continue;
        }

        const float s = static_cast<float>((static_cast<double>(hi) - static_cast<double>(lo)) /
                                           levels);
        const double sd = static_cast<double>(s);
        const std::int64_t z =
            static_cast<std::int64_t>(round_ties_even(-static_cast<double>(lo) / sd)) - half;
        scales[b] = s;
        zeros[b] = static_cast<float>(z);

        // z is integral, so rounding w/s + z in one step is algebraically the
        // textbook form; done as two steps, a near-tie at both roundings can
        // overshoot the top code and break the s/2 round-trip bound.
        for (std::size_t i = begin; i < end; ++i) {
            const double scaled = static_cast<double>(data[i]) / sd + static_cast<double>(z);
            std::int64_t r;
            if (spec.rounding == Rounding::Stochastic) {
                r = stochastic_round(scaled, *rng);
            } else {
                r = static_cast<std::int64_t>(round_ties_even(scaled));
            }
            qvals[i] = static_cast<std::int8_t>(clamp_q(r, spec));
        }
    }

    QuantizedTensor out;
    out.rows_ = w.rows();
    out.cols_ = w.cols();
    out.spec_ = spec;
    out.scales_ = std::move(scales);
    out.zeros_ = std::move(zeros);
    if (spec.bits == 4) {
        out.payload_ = pack_int4(std::span<const std::int8_t>(qvals));
    } else {
        out.payload_.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            out.payload_[i] = static_cast<std::uint8_t>(qvals[i]);
        }
    }
    return out;
}

Matrix dequantize(const QuantizedTensor& q) {
    if (!q.valid()) throw std::invalid_argument("dequantize: empty tensor");
    const std::size_t count = q.element_count();
    const std::size_t expect_payload = (q.spec().bits == 4) ? (count + 1) / 2 : count;
    if (q.payload().size() != expect_payload) {
        throw std::invalid_argument("dequantize: payload length " +
                                    std::to_string(q.payload().size()) +
                                    " inconsistent with shape " + std::to_string(q.rows()) + "x" +
                                    std::to_string(q.cols()));
    }
    const std::vector<std::int8_t> vals = q.unpacked_values();
    std::vector<float> out(count);
    const int block = q.spec().block_size;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t b = i / block;
        const double s = q.scales()[b];
        const double z = q.zeros()[b];
        out[i] = static_cast<float>((static_cast<double>(vals[i]) - z) * s);
    }
    return Matrix::from_data(q.rows(), q.cols(), std::move(out));
}

std::int64_t stochastic_round(double x, RngStream& rng) {
    if (!std::isfinite(x)) {
        throw std::invalid_argument("stochastic_round: non-finite input");
    }
    const double f = std::floor(x);
    const double frac = x - f;
    if (frac == 0.0) return static_cast<std::int64_t>(f);
    const double u = rng.next_uniform();
    return static_cast<std::int64_t>(f) + (u < frac ? 1 : 0);
}

QuantizedTensor apply_update(const QuantizedTensor& wq, const Matrix& delta, Rounding rounding,
                             RngStream* rng) {
    if (delta.rows() != wq.rows() || delta.cols() != wq.cols()) {
        throw std::invalid_argument("apply_update: delta shape " + delta.shape_str() +
                                    " does not match weights " + std::to_string(wq.rows()) + "x" +
                                    std::to_string(wq.cols()));
    }
    Matrix updated = dequantize(wq);
    for (std::size_t i = 0; i < updated.size(); ++i) {
        updated.data()[i] = static_cast<float>(static_cast<double>(updated.data()[i]) +
                                               static_cast<double>(delta.data()[i]));
    }
    QuantSpec spec = wq.spec();
    spec.rounding = rounding;
    return quantize(updated, spec, rng);
}

QuantizedTensor apply_update_sr(const QuantizedTensor& wq, const Matrix& delta, RngStream& rng) {
    return apply_update(wq, delta, Rounding::Stochastic, &rng);
}

std::vector<std::uint8_t> pack_int4(std::span<const std::int8_t> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] < -8 || values[i] > 7) {
            throw std::invalid_argument("pack_int4: value " + std::to_string(values[i]) +
                                        " at index " + std::to_string(i) +
                                        " outside [-8, 7]");
        }
    }
    std::vector<std::uint8_t> out((values.size() + 1) / 2, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint8_t nibble = static_cast<std::uint8_t>(values[i]) & 0x0F;
        if (i % 2 == 0) {
            out[i / 2] = nibble;
        } else {
            out[i / 2] = static_cast<std::uint8_t>(out[i / 2] | (nibble << 4));
        }
    }
    return out;
}

std::vector<std::int8_t> unpack_int4(std::span<const std::uint8_t> bytes, std::size_t count) {
    if (bytes.size() != (count + 1) / 2) {
        throw std::invalid_argument("unpack_int4: byte length " + std::to_string(bytes.size()) +
                                    " does not hold " + std::to_string(count) + " values");
    }
    std::vector<std::int8_t> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint8_t nibble = (i % 2 == 0) ? (bytes[i / 2] & 0x0F)
                                           : static_cast<std::uint8_t>(bytes[i / 2] >> 4);
        out[i] = static_cast<std::int8_t>(nibble >= 8 ? static_cast<int>(nibble) - 16
                                                      : static_cast<int>(nibble));
    }
    return out;
}

} // namespace qgalore
