// Acceptance suite: one selectable check per criterion, each printing a
// single PASS/FAIL line. Run with --criterion N for one criterion or no
// arguments for the full set.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qgalore/checkpoint.hpp"
#include "qgalore/data.hpp"
#include "qgalore/memory.hpp"
#include "qgalore/optimizer.hpp"
#include "qgalore/quant.hpp"
#include "qgalore/subspace.hpp"
#include "qgalore/svd.hpp"
#include "qgalore/trainer.hpp"

#include "../test_helpers.hpp"

using namespace qgalore;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("qgalore_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Criterion 1: quantization round-trip bound over 1000 random tensors.
// ---------------------------------------------------------------------------
Outcome criterion1() {
    const auto t0 = Clock::now();
    RngStream shapes = RngStream::derive(101, RngPurpose::Generic, 1);
    double worst_ratio = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int rows = 1 + static_cast<int>(shapes.next_u64() % 512);
        const int cols = 1 + static_cast<int>(shapes.next_u64() % 512);
        const float scale = (trial % 3 == 0) ? 8.0f : (trial % 3 == 1 ? 1.0f : 0.05f);
        const float offset = static_cast<float>(shapes.next_gaussian()) * 2.0f;
        RngStream values = RngStream::derive(102, RngPurpose::Generic, trial);
        Matrix w = Matrix::gaussian(rows, cols, values, scale);
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] += offset;

        QuantSpec spec;
        spec.bits = (trial % 2 == 0) ? 8 : 4;
        spec.block_size = 256;
        QuantizedTensor q = quantize(w, spec);
        Matrix back = dequantize(q);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double s = q.scales()[i / 256];
            const double err = std::fabs(static_cast<double>(back.data()[i]) - w.data()[i]);
            // The dequantized value is stored as float32, so the bound holds
            // up to one output ulp (relevant when |w| >> s).
            const double slack = 1.2e-7 * std::fabs(static_cast<double>(w.data()[i]));
            worst_ratio = std::max(worst_ratio, err / (s / 2.0));
            if (err > s / 2.0 + slack) {
                return {false, "round-trip error " + format_double(err) + " exceeds s/2 at tensor " +
                                   std::to_string(trial)};
            }
        }
    }
    const double elapsed = seconds_since(t0);
    if (elapsed >= 30.0) {
        return {false, "runtime " + format_double(elapsed) + " s exceeds the 30 s budget"};
    }
    return {true, "1000 tensors, worst error/(s/2) = " + format_double(worst_ratio) + ", " +
                      format_double(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// Criterion 2: stochastic rounding unbiasedness and drift accumulation.
// ---------------------------------------------------------------------------
Outcome criterion2() {
    const int draws = 100000;
    RngStream rng = RngStream::derive(201, RngPurpose::Generic);
    double worst_sigmas = 0.0;
    for (int k = 0; k < 20; ++k) {
        const double x = -1.9 + 0.2 * k; // 20 fixed scalars in (-2, 2)
        const double p = x - std::floor(x);
        double sum = 0.0;
        for (int i = 0; i < draws; ++i) sum += static_cast<double>(stochastic_round(x, rng));
        const double mean = sum / draws;
        if (p == 0.0) {
            if (mean != x) return {false, "integral scalar " + format_double(x) + " not exact"};
            continue;
        }
        const double sigma = std::sqrt(p * (1.0 - p) / draws);
        const double sigmas = std::fabs(mean - x) / sigma;
        worst_sigmas = std::max(worst_sigmas, sigmas);
        if (sigmas > 3.0) {
            return {false, "scalar " + format_double(x) + " off by " + format_double(sigmas) +
                               " sigma"};
        }
    }

    // Sub-grid constant drift through apply_update_sr.
    Matrix w = qgalore::testing::random_matrix(2, 256, 202);
    QuantizedTensor q = quantize(w, QuantSpec{});
    Matrix base = dequantize(q);
    const double s = q.scales()[0];
    const double c = 0.2 * s;
    Matrix delta(2, 256);
    for (std::size_t i = 0; i < delta.size(); ++i) delta.data()[i] = static_cast<float>(c);

    double drift = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        RngStream r = RngStream::derive(203, RngPurpose::WeightUpdate, 0, t);
        Matrix d = dequantize(apply_update_sr(q, delta, r));
        double acc = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            acc += static_cast<double>(d.data()[i]) - base.data()[i];
        }
        drift += acc / static_cast<double>(d.size());
    }
    drift /= trials;
    const double rel = std::fabs(drift - c) / c;
    if (rel > 0.05) {
        return {false, "drift " + format_double(drift) + " vs " + format_double(c) +
                           " (relative error " + format_double(rel) + ")"};
    }
    return {true, "worst scalar deviation " + format_double(worst_sigmas) +
                      " sigma; drift relative error " + format_double(rel)};
}

// ---------------------------------------------------------------------------
// Criterion 3: SVD reconstruction/orthonormality plus the eigenvalue cross-check.
// ---------------------------------------------------------------------------
Outcome criterion3() {
    RngStream shapes = RngStream::derive(301, RngPurpose::Generic);
    double worst_recon = 0.0, worst_ortho = 0.0, worst_eig = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        int rows, cols;
        switch (trial % 3) {
            case 0: rows = cols = 8 + static_cast<int>(shapes.next_u64() % 120); break;
            case 1:
                rows = 40 + static_cast<int>(shapes.next_u64() % 200);
                cols = 4 + static_cast<int>(shapes.next_u64() % 40);
                break;
            default:
                rows = 4 + static_cast<int>(shapes.next_u64() % 40);
                cols = 40 + static_cast<int>(shapes.next_u64() % 200);
        }
        Matrix a;
        if (trial % 2 == 0) {
            a = qgalore::testing::random_matrix(rows, cols, 3000 + trial);
        } else {
            const int rank = std::max(1, std::min(rows, cols) / 3);
            a = qgalore::testing::random_low_rank(rows, cols, rank, 3100 + trial);
        }
        SvdResult f = svd(a);

        Matrix sv(static_cast<int>(f.sigma.size()), static_cast<int>(f.sigma.size()));
        for (std::size_t i = 0; i < f.sigma.size(); ++i) {
            sv.at(static_cast<int>(i), static_cast<int>(i)) = f.sigma[i];
        }
        const double norm = frobenius_norm(a);
        const double recon =
            frobenius_norm(subtract(a, matmul(matmul(f.u, sv), transpose(f.v)))) /
            std::max(norm, 1e-30);
        worst_recon = std::max(worst_recon, recon);
        if (recon > 1e-5) return {false, "reconstruction " + format_double(recon) + " > 1e-5"};

        for (const Matrix* m : {&f.u, &f.v}) {
            Matrix gram = matmul(transpose(*m), *m);
            for (int i = 0; i < gram.rows(); ++i) {
                for (int j = 0; j < gram.cols(); ++j) {
                    const double err = std::fabs(gram.at(i, j) - (i == j ? 1.0 : 0.0));
                    worst_ortho = std::max(worst_ortho, err);
                    if (err > 1e-4) {
                        return {false, "orthonormality " + format_double(err) + " > 1e-4"};
                    }
                }
            }
        }

        if (trial % 4 == 0) {
            // sigma(A^T A) carries min(rows, cols) eigenvalues matching
            // sigma(A)^2; the float32 Gram product resolves them to 1e-4
            // relative accuracy only down to ~1e-4 of the top eigenvalue.
            SvdResult g = svd(matmul(transpose(a), a));
            const double lmax = static_cast<double>(f.sigma[0]) * f.sigma[0];
            for (std::size_t i = 0; i < f.sigma.size(); ++i) {
                const double expect = static_cast<double>(f.sigma[i]) * f.sigma[i];
                if (expect < 1e-4 * lmax) continue;
                const double rel = std::fabs(g.sigma[i] - expect) / expect;
                worst_eig = std::max(worst_eig, rel);
                if (rel > 1e-4) {
                    return {false, "sigma^2 vs eig mismatch " + format_double(rel) + " > 1e-4"};
                }
            }
        }
    }
    return {true, "100 shapes; worst recon " + format_double(worst_recon) + ", ortho " +
                      format_double(worst_ortho) + ", eig " + format_double(worst_eig)};
}

// ---------------------------------------------------------------------------
// Criterion 4: layer_step equals textbook Adam under the identity hook.
// ---------------------------------------------------------------------------
Outcome criterion4() {
    const int dim = 8;
    ProjectionState proj = ProjectionState::identity_hook(dim);
    LowRankAdamState adam(StoreFormat::Float32);
    TensorStore weights = TensorStore::from_dense(Matrix(dim, dim));
    AdamConfig cfg;
    cfg.lr = 5e-3;
    cfg.alpha = 1.0;
    cfg.weight_decay = 0.0;
    qgalore::testing::RefAdam oracle(static_cast<std::size_t>(dim) * dim, cfg.lr);

    double worst = 0.0;
    for (int step = 0; step < 200; ++step) {
        Matrix g = qgalore::testing::random_matrix(dim, dim, 4000 + step);
        layer_step(weights, g, proj, adam, cfg, step, Rounding::NearestTiesToEven, nullptr);
        oracle.step(std::vector<float>(g.data(), g.data() + g.size()));
        Matrix w = weights.unpack();
        for (std::size_t i = 0; i < w.size(); ++i) {
            worst = std::max(worst,
                             std::fabs(static_cast<double>(w.data()[i]) - oracle.w[i]));
        }
    }
    if (worst > 1e-5) return {false, "max |w - oracle| = " + format_double(worst) + " > 1e-5"};
    return {true, "200 steps, max |w - oracle| = " + format_double(worst)};
}

// ---------------------------------------------------------------------------
// Criterion 5: adaptive lazy update SVD savings and the no-doubling control.
// ---------------------------------------------------------------------------
Outcome criterion5() {
    const auto t0 = Clock::now();
    SubspaceOptions opts;
    opts.rank = 4;
    opts.base_interval = 10;
    opts.window = 3;
    opts.threshold = 0.4;

    Matrix base = qgalore::testing::random_low_rank(32, 64, 4, 501);
    const double base_rms = frobenius_norm(base) / std::sqrt(static_cast<double>(base.size()));

    auto run_stream = [&](bool adaptive) {
        SubspaceOptions o = opts;
        o.adaptive = adaptive;
        ProjectionState st(32, 64, o);
        for (std::int64_t step = 0; step < 2000; ++step) {
            RngStream noise = RngStream::derive(502, RngPurpose::Generic, 1, step);
            Matrix g = base;
            for (std::size_t i = 0; i < g.size(); ++i) {
                g.data()[i] += static_cast<float>(0.01 * base_rms * noise.next_gaussian());
            }
            st.maybe_update(g, step);
        }
        return st.svd_count();
    };

    const std::int64_t adaptive_count = run_stream(true);
    const std::int64_t fixed_count = run_stream(false);
    if (adaptive_count > static_cast<std::int64_t>(0.4 * fixed_count)) {
        return {false, "svd_count " + std::to_string(adaptive_count) + " > 40% of fixed " +
                           std::to_string(fixed_count)};
    }

    // Fresh-random stream: no doubling across 20 recomputations.
    ProjectionState fresh(32, 64, opts);
    int recomputes = 0;
    std::int64_t step = 0;
    while (recomputes < 20) {
        Matrix g = qgalore::testing::random_matrix(32, 64, 5200 + step);
        if (fresh.maybe_update(g, step)) ++recomputes;
        ++step;
    }
    if (fresh.interval() != 10) {
        return {false, "fresh-random stream doubled the interval to " +
                           std::to_string(fresh.interval())};
    }
    const double elapsed = seconds_since(t0);
    if (elapsed >= 60.0) {
        return {false, "runtime " + format_double(elapsed) + " s exceeds the 60 s budget"};
    }
    return {true, "adaptive " + std::to_string(adaptive_count) + " vs fixed " +
                      std::to_string(fixed_count) + " SVDs (" +
                      format_double(100.0 * adaptive_count / fixed_count) +
                      "%); no doubling on the random stream; " + format_double(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// Shared LM configuration for criteria 6-8.
// ---------------------------------------------------------------------------
RunConfig lm_config(const std::string& corpus, std::uint64_t seed) {
    RunConfig cfg;
    cfg.method = Method::QGaLore;
    cfg.model.architecture = Architecture::TinyCharLM;
    cfg.model.embed_dim = 16;
    cfg.model.lm_hidden = 128;
    cfg.model.context = 32;
    cfg.data.kind = DataConfig::Kind::TextFile;
    cfg.data.path = corpus;
    cfg.adam.lr = 5e-3;
    cfg.adam.alpha = 0.25;
    cfg.schedule.warmup_frac = 0.1;
    cfg.subspace.base_interval = 50;
    cfg.subspace.window = 3;
    cfg.subspace.threshold = 0.4;
    cfg.subspace.adaptive = true;
    cfg.total_steps = 5000;
    cfg.batch_size = 16;
    cfg.eval_every = 100;
    cfg.val_examples = 384;
    cfg.seed = seed;
    return cfg;
}

std::string make_corpus(const std::string& name) {
    const fs::path dir = scratch_dir(name);
    const std::string path = (dir / "corpus.txt").string();
    const std::size_t written = write_synthetic_corpus(path, 1'250'000, 7);
    if (written < 1'000'000) throw std::runtime_error("corpus below 1 MB");
    return path;
}

// ---------------------------------------------------------------------------
// Criterion 6: SR beats RTN at INT8 and RTN plateaus during warmup.
// ---------------------------------------------------------------------------
Outcome criterion6() {
    const auto t0 = Clock::now();
    const std::string corpus = make_corpus("c6");

    int ordering_wins = 0;
    int plateau_hits = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RunConfig sr_cfg = lm_config(corpus, seed);
        sr_cfg.rounding = Rounding::Stochastic;
        RunConfig rtn_cfg = lm_config(corpus, seed);
        rtn_cfg.rounding = Rounding::NearestTiesToEven;

        RunResult sr = run_training(sr_cfg);
        RunResult rtn = run_training(rtn_cfg);
        if (sr.exit_code != 0 || rtn.exit_code != 0) {
            return {false, "training diverged on seed " + std::to_string(seed)};
        }
        if (sr.final_val_loss <= rtn.final_val_loss) ++ordering_wins;

        // Plateau: somewhere during warmup the RTN run trails the SR run by
        // at least 5% of the initial loss.
        const double init_loss = rtn.records.front().val_loss;
        const std::int64_t warmup_end = 500;
        double max_gap = 0.0;
        for (std::size_t i = 0; i < rtn.records.size() && i < sr.records.size(); ++i) {
            if (rtn.records[i].step > warmup_end) break;
            max_gap = std::max(max_gap, rtn.records[i].val_loss - sr.records[i].val_loss);
        }
        if (max_gap >= 0.05 * init_loss) ++plateau_hits;
        per_seed += " s" + std::to_string(seed) + ":" + format_double(sr.final_val_loss) + "/" +
                    format_double(rtn.final_val_loss) + "/gap" + format_double(max_gap);
    }

    const double elapsed = seconds_since(t0);
    if (elapsed >= 1800.0) {
        return {false, "runtime " + format_double(elapsed) + " s exceeds the 30 min budget"};
    }
    if (ordering_wins < 4) {
        return {false, "SR final <= RTN final in only " + std::to_string(ordering_wins) +
                           "/5 seeds;" + per_seed};
    }
    if (plateau_hits < 4) {
        return {false, "warmup plateau visible in only " + std::to_string(plateau_hits) +
                           "/5 seeds;" + per_seed};
    }
    return {true, "SR wins " + std::to_string(ordering_wins) + "/5, plateau " +
                      std::to_string(plateau_hits) + "/5 (sr/rtn/gap per seed:" + per_seed +
                      "); " + format_double(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// Criterion 7: projection quantization tolerance (float vs 8 vs 4 bits).
// ---------------------------------------------------------------------------
Outcome criterion7() {
    const std::string corpus = make_corpus("c7");
    std::vector<std::pair<std::string, StoreFormat>> cases = {
        {"float", StoreFormat::Float32},
        {"int8", StoreFormat::Int8},
        {"int4", StoreFormat::Int4},
    };
    std::vector<double> losses;
    std::string detail;
    for (const auto& [name, fmt] : cases) {
        RunConfig cfg = lm_config(corpus, 2);
        cfg.subspace.projection_format = fmt;
        RunResult r = run_training(cfg);
        if (r.exit_code != 0) return {false, "run with " + name + " projections diverged"};
        losses.push_back(r.final_val_loss);
        detail += " " + name + ":" + format_double(r.final_val_loss);
    }
    for (std::size_t i = 0; i < losses.size(); ++i) {
        for (std::size_t j = i + 1; j < losses.size(); ++j) {
            const double mid = 0.5 * (losses[i] + losses[j]);
            if (std::fabs(losses[i] - losses[j]) > 0.05 * mid) {
                return {false, "projection-bits runs differ by more than 5%:" + detail};
            }
        }
    }
    return {true, "final val losses within 5% of each other:" + detail};
}

// ---------------------------------------------------------------------------
// Criterion 8: end-to-end parity with the full-precision Adam baseline.
// ---------------------------------------------------------------------------
Outcome criterion8() {
    // Synthetic regression side.
    RunConfig synth_full;
    synth_full.method = Method::FullAdam;
    synth_full.model.architecture = Architecture::MLPRegressor;
    synth_full.model.hidden_dim = 0;
    synth_full.data.kind = DataConfig::Kind::Synthetic;
    synth_full.data.synthetic = {16, 8, 0.1};
    synth_full.adam.lr = 5e-3;
    synth_full.total_steps = 3000;
    synth_full.batch_size = 32;
    synth_full.eval_every = 500;
    synth_full.val_examples = 2048;
    synth_full.seed = 11;

    RunConfig synth_q = synth_full;
    synth_q.method = Method::QGaLore;
    synth_q.adam.lr = 2e-2; // alpha = 0.25 matches the full-path step size
    synth_q.subspace.base_interval = 10;
    synth_q.subspace.threshold = 0.4;

    RunResult f_synth = run_training(synth_full);
    RunResult q_synth = run_training(synth_q);
    if (f_synth.exit_code != 0 || q_synth.exit_code != 0) {
        return {false, "synthetic run diverged"};
    }
    const double synth_rel =
        std::fabs(q_synth.final_val_loss - f_synth.final_val_loss) / f_synth.final_val_loss;

    // TinyCharLM side.
    const std::string corpus = make_corpus("c8");
    RunConfig lm_full = lm_config(corpus, 4);
    lm_full.method = Method::FullAdam;
    lm_full.adam.lr = 2e-3;
    RunConfig lm_q = lm_config(corpus, 4);
    lm_q.adam.lr = 8e-3; // alpha = 0.25 matches the full-path step size

    RunResult f_lm = run_training(lm_full);
    RunResult q_lm = run_training(lm_q);
    if (f_lm.exit_code != 0 || q_lm.exit_code != 0) return {false, "LM run diverged"};
    const double lm_rel = std::fabs(q_lm.final_val_loss - f_lm.final_val_loss) / f_lm.final_val_loss;

    std::string detail = "synthetic full " + format_double(f_synth.final_val_loss) + " vs q " +
                         format_double(q_synth.final_val_loss) + " (rel " +
                         format_double(synth_rel) + "); lm full " +
                         format_double(f_lm.final_val_loss) + " vs q " +
                         format_double(q_lm.final_val_loss) + " (rel " + format_double(lm_rel) +
                         ")";
    if (synth_rel > 0.10) return {false, "synthetic parity outside 10%: " + detail};
    if (lm_rel > 0.10) return {false, "LM parity outside 10%: " + detail};
    return {true, detail};
}

// ---------------------------------------------------------------------------
// Criterion 9: memory estimator arithmetic.
// ---------------------------------------------------------------------------
Outcome criterion9() {
    std::vector<LayerShape> square = {{"w", 64, 64, true, 16}}; // r = n/4

    const auto w8 = estimate_memory(square, {8, 16, 16});
    const auto w16 = estimate_memory(square, {16, 16, 16});
    if (w8.weights * 2 != w16.weights) {
        return {false, "int8 weights are not exactly half of 16-bit weights"};
    }

    const auto p16 = estimate_memory(square, {16, 16, 16});
    const auto p4 = estimate_memory(square, {16, 16, 4});
    const std::uint64_t before = p16.optimizer_states + p16.projections;
    const std::uint64_t after = p4.optimizer_states + p4.projections;
    if (before != 6ull * 16 * 64 || after * 4 != before * 3) {
        return {false, "16->4-bit projection does not cut states+projections by exactly 25%"};
    }

    std::vector<LayerShape> mixed = {{"w", 96, 160, true, 24},
                                     {"b", 1, 96, false, 0},
                                     {"e", 64, 16, false, 0}};
    const int widths[] = {32, 16, 8, 4};
    for (int field = 0; field < 3; ++field) {
        for (int i = 0; i + 1 < 4; ++i) {
            MemoryBits hi{8, 8, 8}, lo{8, 8, 8};
            (field == 0 ? hi.weight_bits : field == 1 ? hi.state_bits : hi.proj_bits) = widths[i];
            (field == 0 ? lo.weight_bits : field == 1 ? lo.state_bits : lo.proj_bits) =
                widths[i + 1];
            const auto a = estimate_memory(mixed, hi);
            const auto b = estimate_memory(mixed, lo);
            const bool ok = b.weights <= a.weights &&
                            b.optimizer_states <= a.optimizer_states &&
                            b.projections <= a.projections &&
                            b.total_with_metadata() <= a.total_with_metadata() &&
                            b.total_without_metadata() <= a.total_without_metadata();
            if (!ok) return {false, "estimator is not monotone in bits field " +
                                        std::to_string(field)};
        }
    }
    return {true, "halving, 25% projection cut, and monotonicity all exact"};
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism and checkpoint/resume bit-exactness.
// ---------------------------------------------------------------------------
Outcome criterion10() {
    const fs::path dir = scratch_dir("c10");
    const std::string corpus = (dir / "corpus.txt").string();
    write_synthetic_corpus(corpus, 200'000, 9);

    RunConfig cfg = lm_config(corpus, 21);
    cfg.model.embed_dim = 8;
    cfg.model.lm_hidden = 64;
    cfg.model.context = 16;
    cfg.total_steps = 300;
    cfg.eval_every = 50;
    cfg.subspace.base_interval = 20;
    cfg.val_examples = 128;

    auto strip = [](MetricsRecord r) {
        r.wallclock_ms = 0.0;
        return metrics_to_json(r);
    };

    RunResult a = run_training(cfg);
    RunResult b = run_training(cfg);
    if (a.exit_code != 0 || b.exit_code != 0) return {false, "run diverged"};
    if (a.records.size() != b.records.size()) return {false, "record counts differ"};
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        if (strip(a.records[i]) != strip(b.records[i])) {
            return {false, "records differ at step " + std::to_string(a.records[i].step)};
        }
    }

    // Stop at 200, checkpoint, resume to 300; overlapping records must match.
    RunConfig part1 = cfg;
    part1.stop_after = 200;
    part1.checkpoint_path = (dir / "at200.ckpt").string();
    if (run_training(part1).exit_code != 0) return {false, "partial run failed"};

    RunConfig part2 = cfg;
    part2.resume_path = part1.checkpoint_path;
    RunResult resumed = run_training(part2);
    if (resumed.exit_code != 0) return {false, "resumed run failed"};

    int compared = 0;
    for (const MetricsRecord& r : resumed.records) {
        for (const MetricsRecord& full : a.records) {
            if (full.step != r.step) continue;
            if (strip(full) != strip(r)) {
                return {false, "resumed record differs at step " + std::to_string(r.step)};
            }
            ++compared;
        }
    }
    if (compared == 0) return {false, "no overlapping records compared"};

    // save -> load -> save byte-identity.
    RunConfig resave = part1;
    resave.resume_path = part1.checkpoint_path;
    resave.checkpoint_path = (dir / "at200b.ckpt").string();
    if (run_training(resave).exit_code != 0) return {false, "resave run failed"};
    std::ifstream f1(part1.checkpoint_path, std::ios::binary);
    std::ifstream f2(resave.checkpoint_path, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    if (s1.empty() || s1 != s2) return {false, "checkpoint files are not byte-identical"};

    return {true, "identical metrics across reruns, " + std::to_string(compared) +
                      " resumed records matched, checkpoints byte-identical"};
}

struct Criterion {
    std::string name;
    std::function<Outcome()> fn;
};

} // namespace

int main(int argc, char** argv) {
    const std::map<int, Criterion> criteria = {
        {1, {"quantization round-trip bound", criterion1}},
        {2, {"stochastic rounding unbiasedness", criterion2}},
        {3, {"svd oracle", criterion3}},
        {4, {"galore oracle equivalence", criterion4}},
        {5, {"adaptive lazy update savings", criterion5}},
        {6, {"sr vs rtn ablation", criterion6}},
        {7, {"quantized projection tolerance", criterion7}},
        {8, {"end-to-end parity", criterion8}},
        {9, {"memory estimator arithmetic", criterion9}},
        {10, {"determinism and checkpointing", criterion10}},
    };

    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            selected.push_back(std::atoi(argv[++i]));
        } else if (std::strcmp(argv[i], "--list") == 0) {
            for (const auto& [id, c] : criteria) {
                std::cout << id << ": " << c.name << "\n";
            }
            return 0;
        }
    }
    if (selected.empty()) {
        for (const auto& [id, c] : criteria) selected.push_back(id);
    }

    int failures = 0;
    for (int id : selected) {
        const auto it = criteria.find(id);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << id << "\n";
            return 2;
        }
        Outcome outcome;
        try {
            outcome = it->second.fn();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << id << " ("
                  << it->second.name << "): " << outcome.detail << std::endl;
        if (!outcome.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
