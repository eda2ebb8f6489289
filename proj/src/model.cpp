#include "qgalore/model.hpp"

#include <cmath>

namespace qgalore {

Int8Linear::Int8Linear(std::string name, const Matrix& init_weight, bool with_bias,
                       StoreFormat format, int block_size)
    : name_(std::move(name)) {
    weights_ = TensorStore::pack(init_weight, format, Rounding::NearestTiesToEven, nullptr,
                                 block_size);
    if (with_bias) bias_ = Matrix(1, init_weight.rows());
}

Matrix Int8Linear::forward(const Matrix& x, bool cache) {
    if (x.cols() != in_dim()) {
        throw std::invalid_argument(name_ + ": input width " + std::to_string(x.cols()) +
                                    " does not match in_dim " + std::to_string(in_dim()));
    }
    Matrix w = weights_.unpack();
    Matrix y = matmul(x, transpose(w));
    if (has_bias()) {
        for (int i = 0; i < y.rows(); ++i) {
            for (int j = 0; j < y.cols(); ++j) y.at(i, j) += bias_.at(0, j);
        }
    }
    if (cache) cached_input_ = x;
    return y;
}

Int8Linear::Grads Int8Linear::backward(const Matrix& grad_out) {
    if (!cached_input_.has_value()) {
        throw std::logic_error(name_ + ": backward called without a matching forward");
    }
    if (grad_out.cols() != out_dim()) {
        throw std::invalid_argument(name_ + ": grad width " + std::to_string(grad_out.cols()) +
                                    " does not match out_dim " + std::to_string(out_dim()));
    }
    Matrix w = weights_.unpack();
    Grads g;
    g.input = matmul(grad_out, w);
    g.weight = matmul(transpose(grad_out), *cached_input_);
    if (has_bias()) {
        g.bias = Matrix(1, out_dim());
        for (int j = 0; j < out_dim(); ++j) {
            double acc = 0.0;
            for (int i = 0; i < grad_out.rows(); ++i) acc += grad_out.at(i, j);
            g.bias.at(0, j) = static_cast<float>(acc);
        }
    }
    cached_input_.reset();
    return g;
}

void ModelConfig::validate() const {
    if (architecture == Architecture::MLPRegressor) {
        if (input_dim < 1 || output_dim < 1 || hidden_dim < 0) {
            throw std::invalid_argument("ModelConfig: MLP dimensions must be positive");
        }
    } else {
        if (vocab_size < 1 || embed_dim < 1 || lm_hidden < 1 || context < 1) {
            throw std::invalid_argument("ModelConfig: TinyCharLM dimensions must be positive");
        }
        if (param_count() > 2'000'000) {
            throw std::invalid_argument("ModelConfig: TinyCharLM parameter count " +
                                        std::to_string(param_count()) +
                                        " exceeds the 2M bound");
        }
    }
}

std::int64_t ModelConfig::param_count() const {
    if (architecture == Architecture::MLPRegressor) {
        if (hidden_dim == 0) {
            return static_cast<std::int64_t>(output_dim) * input_dim + output_dim;
        }
        return static_cast<std::int64_t>(hidden_dim) * input_dim + hidden_dim +
               static_cast<std::int64_t>(output_dim) * hidden_dim + output_dim;
    }
    const std::int64_t concat = static_cast<std::int64_t>(context) * embed_dim;
    return static_cast<std::int64_t>(vocab_size) * embed_dim +
           static_cast<std::int64_t>(lm_hidden) * concat + lm_hidden +
           static_cast<std::int64_t>(lm_hidden) * lm_hidden + lm_hidden +
           static_cast<std::int64_t>(vocab_size) * lm_hidden + vocab_size;
}

std::pair<double, Matrix> mse_loss(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("mse_loss: shape mismatch " + pred.shape_str() + " vs " +
                                    target.shape_str());
    }
    const double inv = 1.0 / static_cast<double>(pred.size());
    double loss = 0.0;
    Matrix grad(pred.rows(), pred.cols());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
        loss += d * d;
        grad.data()[i] = static_cast<float>(2.0 * d * inv);
    }
    return {loss * inv, grad};
}

std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits,
                                                const std::vector<int>& targets) {
    if (targets.size() != static_cast<std::size_t>(logits.rows())) {
        throw std::invalid_argument("softmax_cross_entropy: target count mismatch");
    }
    const int batch = logits.rows();
    const int vocab = logits.cols();
    const double inv_batch = 1.0 / batch;
    Matrix grad(batch, vocab);
    double loss = 0.0;
    std::vector<double> probs(vocab);
    for (int i = 0; i < batch; ++i) {
        const int target = targets[i];
        if (target < 0 || target >= vocab) {
            throw std::invalid_argument("softmax_cross_entropy: target id out of range");
        }
        double maxv = logits.at(i, 0);
        for (int j = 1; j < vocab; ++j) maxv = std::max(maxv, static_cast<double>(logits.at(i, j)));
        double denom = 0.0;
        for (int j = 0; j < vocab; ++j) {
            probs[j] = std::exp(static_cast<double>(logits.at(i, j)) - maxv);
            denom += probs[j];
        }
        loss += std::log(denom) - (static_cast<double>(logits.at(i, target)) - maxv);
        for (int j = 0; j < vocab; ++j) {
            double p = probs[j] / denom;
            grad.at(i, j) = static_cast<float>((p - (j == target ? 1.0 : 0.0)) * inv_batch);
        }
    }
    return {loss * inv_batch, grad};
}

namespace {

Matrix tanh_of(const Matrix& z) {
    Matrix out = z;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
    return out;
}

// grad_z = grad_a * (1 - a^2), a = tanh(z)
Matrix tanh_backward(const Matrix& grad_a, const Matrix& a) {
    Matrix out = grad_a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double ai = a.data()[i];
        out.data()[i] = static_cast<float>(out.data()[i] * (1.0 - ai * ai));
    }
    return out;
}

class MlpRegressorModel final : public Model {
public:
    MlpRegressorModel(const ModelConfig& cfg, StoreFormat fmt, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        int idx = 0;
        if (cfg_.hidden_dim > 0) {
            RngStream r1 = RngStream::derive(seed, RngPurpose::WeightInit, idx);
            hidden_ = Int8Linear("mlp.hidden", scaled_init(cfg_.hidden_dim, cfg_.input_dim, r1),
                                 true, fmt);
            ++idx;
        }
        RngStream r2 = RngStream::derive(seed, RngPurpose::WeightInit, idx);
        const int in = cfg_.hidden_dim > 0 ? cfg_.hidden_dim : cfg_.input_dim;
        out_ = Int8Linear("mlp.out", scaled_init(cfg_.output_dim, in, r2), true, fmt);

        if (cfg_.hidden_dim > 0) {
            params_ = {
                {"mlp.out.weight", ParamKind::ProjectedMatrix, cfg_.output_dim, cfg_.hidden_dim},
                {"mlp.out.bias", ParamKind::DenseAux, 1, cfg_.output_dim},
                {"mlp.hidden.weight", ParamKind::ProjectedMatrix, cfg_.hidden_dim, cfg_.input_dim},
                {"mlp.hidden.bias", ParamKind::DenseAux, 1, cfg_.hidden_dim},
            };
        } else {
            params_ = {
                {"mlp.out.weight", ParamKind::ProjectedMatrix, cfg_.output_dim, cfg_.input_dim},
                {"mlp.out.bias", ParamKind::DenseAux, 1, cfg_.output_dim},
            };
        }
    }

    const std::vector<ParamInfo>& params() const override { return params_; }

    TensorStore& matrix_store(int i) override {
        if (params_[i].name == "mlp.out.weight") return out_.weight_store();
        if (params_[i].name == "mlp.hidden.weight") return hidden_.weight_store();
        throw std::logic_error("matrix_store: not a matrix parameter");
    }

    Matrix& dense_param(int i) override {
        if (params_[i].name == "mlp.out.bias") return out_.bias();
        if (params_[i].name == "mlp.hidden.bias") return hidden_.bias();
        throw std::logic_error("dense_param: not a dense parameter");
    }

    double forward_backward(const Batch& batch, const GradCallback& cb) override {
        Matrix pred, h;
        run_forward(batch, true, pred, h);
        auto [loss, dpred] = mse_loss(pred, batch.targets);
        if (!std::isfinite(loss)) {
            throw DivergenceError("MLPRegressor: non-finite loss; |W_out| = " +
                                  std::to_string(max_abs(out_.weight_store().unpack())));
        }
        Int8Linear::Grads go = out_.backward(dpred);
        cb(0, go.weight);
        cb(1, go.bias);
        if (cfg_.hidden_dim > 0) {
            Matrix dz = tanh_backward(go.input, h);
            Int8Linear::Grads gh = hidden_.backward(dz);
            cb(2, gh.weight);
            cb(3, gh.bias);
        }
        return loss;
    }

    double evaluate(const Batch& batch) override {
        Matrix pred, h;
        run_forward(batch, false, pred, h);
        return mse_loss(pred, batch.targets).first;
    }

private:
    static Matrix scaled_init(int rows, int cols, RngStream& rng) {
        return Matrix::gaussian(rows, cols, rng,
                                1.0f / std::sqrt(static_cast<float>(cols)));
    }

    void run_forward(const Batch& batch, bool cache, Matrix& pred, Matrix& h) {
        if (batch.inputs.cols() != cfg_.input_dim) {
            throw std::invalid_argument("MLPRegressor: batch input width mismatch");
        }
        if (cfg_.hidden_dim > 0) {
            h = tanh_of(hidden_.forward(batch.inputs, cache));
            pred = out_.forward(h, cache);
        } else {
            pred = out_.forward(batch.inputs, cache);
        }
    }

    ModelConfig cfg_;
    Int8Linear hidden_;
    Int8Linear out_;
    std::vector<ParamInfo> params_;
};

class TinyCharLmModel final : public Model {
public:
    TinyCharLmModel(const ModelConfig& cfg, StoreFormat fmt, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        const int concat = cfg_.context * cfg_.embed_dim;
        RngStream re = RngStream::derive(seed, RngPurpose::WeightInit, 0);
        embedding_ = Matrix::gaussian(cfg_.vocab_size, cfg_.embed_dim, re, 0.5f);
        RngStream r1 = RngStream::derive(seed, RngPurpose::WeightInit, 1);
        block1_ = Int8Linear("lm.block1",
                             Matrix::gaussian(cfg_.lm_hidden, concat, r1,
                                              1.0f / std::sqrt(static_cast<float>(concat))),
                             true, fmt);
        RngStream r2 = RngStream::derive(seed, RngPurpose::WeightInit, 2);
        block2_ = Int8Linear("lm.block2",
                             Matrix::gaussian(cfg_.lm_hidden, cfg_.lm_hidden, r2,
                                              1.0f / std::sqrt(static_cast<float>(cfg_.lm_hidden))),
                             true, fmt);
        RngStream r3 = RngStream::derive(seed, RngPurpose::WeightInit, 3);
        // Small head init keeps the initial loss at ln(vocab).
        head_ = Int8Linear("lm.head",
                           Matrix::gaussian(cfg_.vocab_size, cfg_.lm_hidden, r3,
                                            0.1f / std::sqrt(static_cast<float>(cfg_.lm_hidden))),
                           true, fmt);
        params_ = {
            {"lm.head.weight", ParamKind::ProjectedMatrix, cfg_.vocab_size, cfg_.lm_hidden},
            {"lm.head.bias", ParamKind::DenseAux, 1, cfg_.vocab_size},
            {"lm.block2.weight", ParamKind::ProjectedMatrix, cfg_.lm_hidden, cfg_.lm_hidden},
            {"lm.block2.bias", ParamKind::DenseAux, 1, cfg_.lm_hidden},
            {"lm.block1.weight", ParamKind::ProjectedMatrix, cfg_.lm_hidden, concat},
            {"lm.block1.bias", ParamKind::DenseAux, 1, cfg_.lm_hidden},
            {"lm.embedding", ParamKind::DenseAux, cfg_.vocab_size, cfg_.embed_dim},
        };
    }

    const std::vector<ParamInfo>& params() const override { return params_; }

    TensorStore& matrix_store(int i) override {
        const std::string& n = params_[i].name;
        if (n == "lm.head.weight") return head_.weight_store();
        if (n == "lm.block2.weight") return block2_.weight_store();
        if (n == "lm.block1.weight") return block1_.weight_store();
        throw std::logic_error("matrix_store: not a matrix parameter");
    }

    Matrix& dense_param(int i) override {
        const std::string& n = params_[i].name;
        if (n == "lm.head.bias") return head_.bias();
        if (n == "lm.block2.bias") return block2_.bias();
        if (n == "lm.block1.bias") return block1_.bias();
        if (n == "lm.embedding") return embedding_;
        throw std::logic_error("dense_param: not a dense parameter");
    }

    double forward_backward(const Batch& batch, const GradCallback& cb) override {
        Matrix x = gather(batch);
        Matrix h1 = tanh_of(block1_.forward(x, true));
        Matrix a2 = tanh_of(block2_.forward(h1, true));
        Matrix h2 = add(h1, a2);
        Matrix logits = head_.forward(h2, true);
        auto [loss, dlogits] = softmax_cross_entropy(logits, batch.next_tokens);
        if (!std::isfinite(loss)) {
            throw DivergenceError(
                "TinyCharLM: non-finite loss; |W1| = " +
                std::to_string(max_abs(block1_.weight_store().unpack())) + ", |W2| = " +
                std::to_string(max_abs(block2_.weight_store().unpack())) + ", |Whead| = " +
                std::to_string(max_abs(head_.weight_store().unpack())));
        }

        Int8Linear::Grads ghead = head_.backward(dlogits);
        cb(0, ghead.weight);
        cb(1, ghead.bias);

        Matrix da2 = tanh_backward(ghead.input, a2);
        Int8Linear::Grads g2 = block2_.backward(da2);
        cb(2, g2.weight);
        cb(3, g2.bias);

        Matrix dh1 = add(ghead.input, g2.input); // residual skip + block path
        Matrix dz1 = tanh_backward(dh1, h1);
        Int8Linear::Grads g1 = block1_.backward(dz1);
        cb(4, g1.weight);
        cb(5, g1.bias);

        Matrix dembed(cfg_.vocab_size, cfg_.embed_dim);
        for (int i = 0; i < batch.size; ++i) {
            for (int p = 0; p < cfg_.context; ++p) {
                const int token = batch.contexts[static_cast<std::size_t>(i) * cfg_.context + p];
                for (int d = 0; d < cfg_.embed_dim; ++d) {
                    dembed.at(token, d) += g1.input.at(i, p * cfg_.embed_dim + d);
                }
            }
        }
        cb(6, dembed);
        return loss;
    }

    double evaluate(const Batch& batch) override {
        Matrix x = gather(batch);
        Matrix h1 = tanh_of(block1_.forward(x, false));
        Matrix a2 = tanh_of(block2_.forward(h1, false));
        Matrix h2 = add(h1, a2);
        Matrix logits = head_.forward(h2, false);
        auto [loss, grad] = softmax_cross_entropy(logits, batch.next_tokens);
        (void)grad;
        return loss;
    }

private:
    Matrix gather(const Batch& batch) const {
        if (batch.size <= 0 ||
            batch.contexts.size() != static_cast<std::size_t>(batch.size) * cfg_.context ||
            batch.next_tokens.size() != static_cast<std::size_t>(batch.size)) {
            throw std::invalid_argument("TinyCharLM: malformed batch");
        }
        Matrix x(batch.size, cfg_.context * cfg_.embed_dim);
        for (int i = 0; i < batch.size; ++i) {
            for (int p = 0; p < cfg_.context; ++p) {
                const int token = batch.contexts[static_cast<std::size_t>(i) * cfg_.context + p];
                if (token < 0 || token >= cfg_.vocab_size) {
                    throw std::invalid_argument("TinyCharLM: token id out of range");
                }
                for (int d = 0; d < cfg_.embed_dim; ++d) {
                    x.at(i, p * cfg_.embed_dim + d) = embedding_.at(token, d);
                }
            }
        }
        return x;
    }

    ModelConfig cfg_;
    Matrix embedding_;
    Int8Linear block1_;
    Int8Linear block2_;
    Int8Linear head_;
    std::vector<ParamInfo> params_;
};

} // namespace

std::unique_ptr<Model> build_model(const ModelConfig& cfg, StoreFormat weight_format,
                                   std::uint64_t seed) {
    if (cfg.architecture == Architecture::MLPRegressor) {
        return std::make_unique<MlpRegressorModel>(cfg, weight_format, seed);
    }
    return std::make_unique<TinyCharLmModel>(cfg, weight_format, seed);
}

} // namespace qgalore
