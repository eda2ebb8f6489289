#include "qgalore/tensor_store.hpp"

namespace qgalore {

const char* store_format_name(StoreFormat f) {
    switch (f) {
        case StoreFormat::Float32: return "float32";
        case StoreFormat::Int8: return "int8";
        case StoreFormat::Int4: return "int4";
    }
    return "?";
}

TensorStore TensorStore::pack(const Matrix& value, StoreFormat fmt, Rounding rounding,
                              RngStream* rng, int block_size) {
    TensorStore out;
    out.format_ = fmt;
    if (fmt == StoreFormat::Float32) {
        out.dense_ = value;
        return out;
    }
    QuantSpec spec;
    spec.bits = (fmt == StoreFormat::Int8) ? 8 : 4;
    spec.block_size = block_size;
    spec.rounding = rounding;
    out.q_ = quantize(value, spec, rng);
    return out;
}

TensorStore TensorStore::from_quantized(QuantizedTensor q) {
    TensorStore out;
    out.format_ = (q.spec().bits == 8) ? StoreFormat::Int8 : StoreFormat::Int4;
    out.q_ = std::move(q);
    return out;
}

TensorStore TensorStore::from_dense(Matrix m) {
    TensorStore out;
    out.format_ = StoreFormat::Float32;
    out.dense_ = std::move(m);
    return out;
}

Matrix TensorStore::unpack() const {
    if (format_ == StoreFormat::Float32) return dense_;
    return dequantize(q_);
}

void TensorStore::apply_update(const Matrix& delta, Rounding rounding, RngStream* rng) {
    if (format_ == StoreFormat::Float32) {
        add_scaled_inplace(dense_, delta, 1.0);
        return;
    }
    q_ = qgalore::apply_update(q_, delta, rounding, rng);
}

int TensorStore::rows() const {
    return format_ == StoreFormat::Float32 ? dense_.rows() : q_.rows();
}

int TensorStore::cols() const {
    return format_ == StoreFormat::Float32 ? dense_.cols() : q_.cols();
}

bool TensorStore::valid() const {
    return format_ == StoreFormat::Float32 ? !dense_.empty() : q_.valid();
}

const QuantizedTensor& TensorStore::quantized_tensor() const {
    if (format_ == StoreFormat::Float32) {
        throw std::logic_error("TensorStore: float32 store has no quantized payload");
    }
    return q_;
}

const Matrix& TensorStore::dense() const {
    if (format_ != StoreFormat::Float32) {
        throw std::logic_error("TensorStore: quantized store has no dense payload");
    }
    return dense_;
}

Matrix& TensorStore::dense() {
    if (format_ != StoreFormat::Float32) {
        throw std::logic_error("TensorStore: quantized store has no dense payload");
    }
    return dense_;
}

} // namespace qgalore
