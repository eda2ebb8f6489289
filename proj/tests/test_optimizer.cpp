#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qgalore/optimizer.hpp"
#include "test_helpers.hpp"

using namespace qgalore;
using qgalore::testing::random_matrix;

TEST_CASE("adam config validation") {
    AdamConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.beta1 = 0.9;
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("first adam step with zero gradient returns zero") {
    LowRankAdamState state(StoreFormat::Int8);
    AdamConfig cfg;
    Matrix n = state.step(Matrix(3, 7), cfg);
    CHECK(frobenius_norm(n) == 0.0);
    CHECK(max_abs(state.m().unpack()) == 0.0);
    CHECK(max_abs(state.v().unpack()) == 0.0);
    CHECK(state.step_count() == 1);
}

TEST_CASE("constant gradient drives the direction to sign(c)") {
    // Quantization bypassed via the float store; scalar Adam recursion
    // converges to |N| -> 1 with sign(c).
    for (double c : {0.02, -1.5}) {
        LowRankAdamState state(StoreFormat::Float32);
        AdamConfig cfg;
        Matrix g = Matrix::from_data(1, 1, {static_cast<float>(c)});
        Matrix n;
        for (int i = 0; i < 400; ++i) n = state.step(g, cfg);
        CHECK(std::fabs(n.at(0, 0) - (c > 0 ? 1.0 : -1.0)) <= 0.01);
        CHECK(std::fabs(n.at(0, 0)) <= 1.0 + 1e-6);
    }
}

TEST_CASE("single step from zero state matches the gradient sign pattern") {
    for (StoreFormat fmt : {StoreFormat::Float32, StoreFormat::Int8}) {
        LowRankAdamState state(fmt);
        AdamConfig cfg;
        Matrix g = random_matrix(6, 9, 17);
        Matrix n = state.step(g, cfg);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (std::fabs(g.data()[i]) < 1e-6) continue;
            CHECK(std::signbit(n.data()[i]) == std::signbit(g.data()[i]));
        }
    }
}

TEST_CASE("8-bit moments track the float path within the accumulated bound") {
    LowRankAdamState q_state(StoreFormat::Int8);
    LowRankAdamState f_state(StoreFormat::Float32);
    AdamConfig cfg;
    double worst_steady = 0.0;
    double worst_early = 0.0;
    for (int step = 0; step < 100; ++step) {
        Matrix g = random_matrix(4, 64, 4000 + step); // unit-scale inputs
        Matrix nq = q_state.step(g, cfg);
        Matrix nf = f_state.step(g, cfg);
        const double diff = max_abs_diff(nq, nf);
        if (step >= 20) {
            worst_steady = std::max(worst_steady, diff);
        } else {
            worst_early = std::max(worst_early, diff);
        }
    }
    // Once the second moments have accumulated, the paths stay close. The
    // first steps are a transient: v is still near zero, so the direction is
    // very sensitive to half-step quantization error in the denominator.
    CHECK(worst_steady <= 0.05);
    CHECK(worst_early <= 2.0);
}

TEST_CASE("adam state rejects shape changes") {
    LowRankAdamState state(StoreFormat::Int8);
    AdamConfig cfg;
    state.step(Matrix(3, 7), cfg);
    CHECK_THROWS_AS(state.step(Matrix(3, 8), cfg), std::invalid_argument);
}

TEST_CASE("layer_step equals textbook adam under the identity hook") {
    // P = I, alpha = 1, wd = 0, float stores, nearest rounding.
    const int dim = 6;
    ProjectionState proj = ProjectionState::identity_hook(dim);
    LowRankAdamState adam(StoreFormat::Float32);
    TensorStore weights = TensorStore::from_dense(Matrix(dim, dim));
    AdamConfig cfg;
    cfg.lr = 1e-2;
    cfg.alpha = 1.0;
    cfg.weight_decay = 0.0;

    qgalore::testing::RefAdam oracle(static_cast<std::size_t>(dim) * dim, cfg.lr);

    for (int step = 0; step < 200; ++step) {
        Matrix g = random_matrix(dim, dim, 600 + step);
        layer_step(weights, g, proj, adam, cfg, step, Rounding::NearestTiesToEven, nullptr);
        oracle.step(std::vector<float>(g.data(), g.data() + g.size()));
    }
    Matrix w = weights.unpack();
    double worst = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(w.data()[i]) - oracle.w[i]));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("lr = 0 leaves the quantized payload unchanged") {
    Matrix w0 = random_matrix(8, 16, 5);
    TensorStore weights = TensorStore::pack(w0, StoreFormat::Int8,
                                            Rounding::NearestTiesToEven, nullptr);
    const std::vector<std::uint8_t> before = weights.quantized_tensor().payload();

    ProjectionState proj(8, 16, [] {
        SubspaceOptions o;
        o.rank = 2;
        o.base_interval = 1;
        return o;
    }());
    LowRankAdamState adam(StoreFormat::Int8);
    AdamConfig cfg;
    cfg.lr = 0.0;
    Matrix g = random_matrix(8, 16, 6);
    layer_step(weights, g, proj, adam, cfg, 0, Rounding::NearestTiesToEven, nullptr);
    CHECK(weights.quantized_tensor().payload() == before);
}

TEST_CASE("zero gradient with zero weight decay leaves weights unchanged") {
    const int dim = 5;
    ProjectionState proj = ProjectionState::identity_hook(dim);
    LowRankAdamState adam(StoreFormat::Float32);
    Matrix w0 = random_matrix(dim, dim, 7);
    TensorStore weights = TensorStore::from_dense(w0);
    AdamConfig cfg;
    layer_step(weights, Matrix(dim, dim), proj, adam, cfg, 0, Rounding::NearestTiesToEven,
               nullptr);
    CHECK(max_abs_diff(weights.unpack(), w0) == 0.0);
}

TEST_CASE("weights are untouched when a stage fails") {
    Matrix w0 = random_matrix(8, 16, 8);
    TensorStore weights = TensorStore::pack(w0, StoreFormat::Int8,
                                            Rounding::NearestTiesToEven, nullptr);
    const std::vector<std::uint8_t> before = weights.quantized_tensor().payload();
    ProjectionState proj(8, 16, [] {
        SubspaceOptions o;
        o.rank = 2;
        o.base_interval = 1;
        return o;
    }());
    LowRankAdamState adam(StoreFormat::Int8);
    AdamConfig cfg;
    // All-zero gradient before the first projection cannot initialize.
    CHECK_THROWS_AS(layer_step(weights, Matrix(8, 16), proj, adam, cfg, 0,
                               Rounding::NearestTiesToEven, nullptr),
                    std::invalid_argument);
    CHECK(weights.quantized_tensor().payload() == before);
    CHECK_FALSE(proj.initialized());
}

TEST_CASE("SR flips sub-grid updates that nearest annihilates") {
    Matrix w0 = random_matrix(2, 128, 9);
    TensorStore rtn_weights = TensorStore::pack(w0, StoreFormat::Int8,
                                                Rounding::NearestTiesToEven, nullptr);
    TensorStore sr_weights = rtn_weights;
    const float s = rtn_weights.quantized_tensor().scales()[0];

    Matrix delta(2, 128);
    for (std::size_t i = 0; i < delta.size(); ++i) delta.data()[i] = 0.3f * s;

    rtn_weights.apply_update(delta, Rounding::NearestTiesToEven, nullptr);
    CHECK(rtn_weights.quantized_tensor().payload() ==
          sr_weights.quantized_tensor().payload());

    RngStream rng = RngStream::derive(77, RngPurpose::WeightUpdate, 0, 0);
    TensorStore sr_after = sr_weights;
    sr_after.apply_update(delta, Rounding::Stochastic, &rng);
    // P(no element moves) = (1 - p)^n with p ~ 0.3 over 256 elements.
    CHECK(sr_after.quantized_tensor().payload() != sr_weights.quantized_tensor().payload());
}

TEST_CASE("states never alias the incoming gradient (fused contract)") {
    // All state tensors live in the projected geometry, not the layer's.
    const int rows = 8, cols = 20, rank = 2;
    ProjectionState proj(rows, cols, [&] {
        SubspaceOptions o;
        o.rank = rank;
        o.base_interval = 1;
        return o;
    }());
    LowRankAdamState adam(StoreFormat::Int8);
    TensorStore weights = TensorStore::pack(random_matrix(rows, cols, 10), StoreFormat::Int8,
                                            Rounding::NearestTiesToEven, nullptr);
    AdamConfig cfg;
    RngStream rng = RngStream::derive(1, RngPurpose::WeightUpdate, 0, 0);
    Matrix g = random_matrix(rows, cols, 11);
    layer_step(weights, g, proj, adam, cfg, 0, Rounding::Stochastic, &rng);

    CHECK(proj.projection().rows() == rows);
    CHECK(proj.projection().cols() == rank);
    CHECK(adam.m().rows() == rank);
    CHECK(adam.m().cols() == cols);
    CHECK(adam.v().rows() == rank);
    CHECK(adam.v().cols() == cols);
}

TEST_CASE("reset_moments_on_update clears the optimizer state") {
    const int rows = 8, cols = 20;
    ProjectionState proj(rows, cols, [&] {
        SubspaceOptions o;
        o.rank = 2;
        o.base_interval = 5;
        return o;
    }());
    LowRankAdamState adam(StoreFormat::Float32);
    TensorStore weights = TensorStore::from_dense(random_matrix(rows, cols, 12));
    AdamConfig cfg;
    for (int step = 0; step < 5; ++step) {
        layer_step(weights, random_matrix(rows, cols, 100 + step), proj, adam, cfg, step,
                   Rounding::NearestTiesToEven, nullptr, true);
    }
    // Step 5 recomputes the projection, so the moments restart from zero.
    layer_step(weights, random_matrix(rows, cols, 200), proj, adam, cfg, 5,
               Rounding::NearestTiesToEven, nullptr, true);
    CHECK(adam.step_count() == 1);
}

TEST_CASE("lr_schedule endpoints and warmup") {
    LrSchedule s;
    s.peak_lr = 0.02;
    CHECK(lr_schedule(0, 100, s) == 0.0);
    CHECK(lr_schedule(10, 100, s) == doctest::Approx(0.02));
    CHECK(lr_schedule(100, 100, s) == doctest::Approx(0.002));
    CHECK(lr_schedule(5, 100, s) == doctest::Approx(0.01));
    // Monotone decay after warmup.
    double prev = lr_schedule(10, 100, s);
    for (int step = 11; step <= 100; ++step) {
        const double cur = lr_schedule(step, 100, s);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
    CHECK_THROWS_AS(lr_schedule(101, 100, s), std::invalid_argument);
}
