#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qgalore/matrix.hpp"
#include "qgalore/tensor_store.hpp"

namespace qgalore {

// Raised when a training step produces a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Linear layer with stored (usually INT8) weights: y = x W^T + bias.
// The input is cached between forward and backward of one step.
class Int8Linear {
public:
    Int8Linear() = default;
    Int8Linear(std::string name, const Matrix& init_weight, bool with_bias, StoreFormat format,
               int block_size = 256);

    Matrix forward(const Matrix& x, bool cache = true);

    struct Grads {
        Matrix input;  // dL/dx
        Matrix weight; // dL/dW, same shape as W
        Matrix bias;   // 1 x out (empty when the layer has no bias)
    };
    Grads backward(const Matrix& grad_out);

    int out_dim() const { return weights_.rows(); }
    int in_dim() const { return weights_.cols(); }
    bool has_bias() const { return !bias_.empty(); }
    bool has_cached_input() const { return cached_input_.has_value(); }
    const std::string& name() const { return name_; }

    TensorStore& weight_store() { return weights_; }
    const TensorStore& weight_store() const { return weights_; }
    Matrix& bias() { return bias_; }
    const Matrix& bias() const { return bias_; }

private:
    std::string name_;
    TensorStore weights_;
    Matrix bias_; // 1 x out
    std::optional<Matrix> cached_input_;
};

enum class Architecture { MLPRegressor, TinyCharLM };

struct ModelConfig {
    Architecture architecture = Architecture::MLPRegressor;
    // MLPRegressor: input -> (hidden, tanh) -> output. hidden_dim == 0 drops
    // the hidden block and leaves a single linear layer.
    int input_dim = 16;
    int hidden_dim = 16;
    int output_dim = 1;
    // TinyCharLM: embedding -> two (linear + tanh) blocks with a residual
    // around the second -> linear head over the vocabulary.
    int vocab_size = 0; // filled from the dataset
    int embed_dim = 16;
    int lm_hidden = 128;
    int context = 32;

    void validate() const;
    std::int64_t param_count() const;
};

struct Batch {
    // Regression
    Matrix inputs;  // B x input_dim
    Matrix targets; // B x output_dim
    // Language model
    std::vector<int> contexts;    // B * context token ids
    std::vector<int> next_tokens; // B
    int size = 0;
};

enum class ParamKind {
    ProjectedMatrix, // 2-D weight, eligible for gradient projection
    DenseAux,        // bias / embedding, plain high-precision Adam
};

struct ParamInfo {
    std::string name;
    ParamKind kind;
    int rows = 0;
    int cols = 0;
};

// Called once per parameter in reverse topological order during the fused
// backward; the gradient buffer is discarded after the call returns.
using GradCallback = std::function<void(int param_index, const Matrix& grad)>;

class Model {
public:
    virtual ~Model() = default;
    virtual const std::vector<ParamInfo>& params() const = 0;
    virtual TensorStore& matrix_store(int param_index) = 0;
    virtual Matrix& dense_param(int param_index) = 0;
    // Computes the batch loss, backpropagates, and hands every parameter
    // gradient to `cb` in reverse topological order. Throws DivergenceError
    // (with per-layer weight norms) on a non-finite loss.
    virtual double forward_backward(const Batch& batch, const GradCallback& cb) = 0;
    // Loss only; does not touch any cached state.
    virtual double evaluate(const Batch& batch) = 0;
};

std::unique_ptr<Model> build_model(const ModelConfig& cfg, StoreFormat weight_format,
                                   std::uint64_t seed);

// mean((pred - target)^2); gradient is w.r.t. pred.
std::pair<double, Matrix> mse_loss(const Matrix& pred, const Matrix& target);
// Mean softmax cross-entropy over rows; gradient w.r.t. logits.
std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits,
                                                const std::vector<int>& targets);

} // namespace qgalore
