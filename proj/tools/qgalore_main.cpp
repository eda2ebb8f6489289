#include <chrono>
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qgalore/checkpoint.hpp"
#include "qgalore/data.hpp"
#include "qgalore/svd.hpp"
#include "qgalore/trainer.hpp"

namespace {

using qgalore::RunConfig;

struct TrainFlags {
    std::string method = "qgalore";
    std::string arch = "tiny-char-lm";
    std::string rounding = "stochastic";
    std::string weight_bits = "8";
    std::string state_bits = "8";
    std::string proj_bits = "4";
    std::string data_path;
    std::string metrics_out;
    std::string checkpoint_out;
    std::string resume;
    std::uint64_t seed = 0;
};

void add_train_command(CLI::App& app, int& exit_code) {
    auto cfg = std::make_shared<RunConfig>();
    auto flags = std::make_shared<TrainFlags>();

    // Desk-scale default; large runs typically use the 200-step interval.
    cfg->subspace.base_interval = 50;

    CLI::App* train = app.add_subcommand("train", "Run a training job");
    train->set_config("--config", "", "Config file (key=value lines); flags override");

    train->add_option("--seed", flags->seed, "RNG seed (mandatory)")->required();
    train->add_option("--method", flags->method, "full-adam | galore | qgalore")
        ->capture_default_str();
    train->add_option("--arch", flags->arch, "mlp-regressor | tiny-char-lm")
        ->capture_default_str();
    train->add_option("--steps", cfg->total_steps, "Total optimizer steps")->capture_default_str();
    train->add_option("--stop-after", cfg->stop_after,
                      "Stop early at this step, keeping the schedule horizon (0 = off)")
        ->capture_default_str();
    train->add_option("--batch-size", cfg->batch_size, "Batch size")->capture_default_str();
    train->add_option("--eval-every", cfg->eval_every, "Steps between metric records")
        ->capture_default_str();
    train->add_option("--val-examples", cfg->val_examples, "Validation windows/rows")
        ->capture_default_str();

    train->add_option("--lr", cfg->adam.lr, "Peak learning rate")->capture_default_str();
    train->add_option("--beta1", cfg->adam.beta1, "Adam beta1")->capture_default_str();
    train->add_option("--beta2", cfg->adam.beta2, "Adam beta2")->capture_default_str();
    train->add_option("--eps", cfg->adam.eps, "Adam epsilon")->capture_default_str();
    train->add_option("--weight-decay", cfg->adam.weight_decay, "Decoupled weight decay")
        ->capture_default_str();
    train->add_option("--alpha", cfg->adam.alpha, "Back-projection scale factor")
        ->capture_default_str();
    train->add_option("--warmup-frac", cfg->schedule.warmup_frac, "Warmup fraction of steps")
        ->capture_default_str();
    train->add_option("--min-lr-ratio", cfg->schedule.min_lr_ratio, "Final lr / peak lr")
        ->capture_default_str();
    train->add_option("--grad-clip", cfg->grad_clip, "Per-layer gradient norm clip (0 = off)")
        ->capture_default_str();

    train->add_option("--rank", cfg->subspace.rank, "Projection rank (0 = quarter of dimension)")
        ->capture_default_str();
    train->add_option("--subspace-interval", cfg->subspace.base_interval,
                      "Initial steps between SVD recomputations")
        ->capture_default_str();
    train->add_option("--window", cfg->subspace.window, "Similarity window k")
        ->capture_default_str();
    train->add_option("--threshold", cfg->subspace.threshold, "Similarity threshold tau")
        ->capture_default_str();
    train->add_flag("--adaptive,!--no-adaptive", cfg->subspace.adaptive,
                    "Adaptive lazy subspace updates")
        ->capture_default_str();
    train->add_option("--max-interval", cfg->subspace.max_interval,
                      "Interval cap (0 = uncapped)")
        ->capture_default_str();
    train->add_flag("--reset-moments", cfg->reset_moments_on_update,
                    "Reset Adam moments when the projection changes");

    train->add_option("--rounding", flags->rounding, "stochastic | nearest")
        ->capture_default_str();
    train->add_option("--weight-bits", flags->weight_bits, "8 | float")->capture_default_str();
    train->add_option("--state-bits", flags->state_bits, "8 | float")->capture_default_str();
    train->add_option("--proj-bits", flags->proj_bits, "4 | 8 | 16 (float passthrough)")
        ->capture_default_str();

    train->add_option("--data", flags->data_path, "Text corpus path (tiny-char-lm)");
    train->add_option("--n-features", cfg->data.synthetic.n_features, "Synthetic input width")
        ->capture_default_str();
    train->add_option("--n-outputs", cfg->data.synthetic.n_outputs, "Synthetic output width")
        ->capture_default_str();
    train->add_option("--noise", cfg->data.synthetic.noise, "Synthetic noise stddev")
        ->capture_default_str();

    train->add_option("--hidden", cfg->model.hidden_dim, "MLP hidden width (0 = linear)")
        ->capture_default_str();
    train->add_option("--embed-dim", cfg->model.embed_dim, "LM embedding dim")
        ->capture_default_str();
    train->add_option("--lm-hidden", cfg->model.lm_hidden, "LM hidden width")
        ->capture_default_str();
    train->add_option("--context", cfg->model.context, "LM context window")
        ->capture_default_str();

    train->add_option("--metrics-out", flags->metrics_out, "Metrics JSONL path");
    train->add_option("--checkpoint-out", flags->checkpoint_out, "Final checkpoint path");
    train->add_option("--resume", flags->resume, "Resume from checkpoint");

    train->callback([cfg, flags, &exit_code]() {
        cfg->method = qgalore::method_from_name(flags->method);
        cfg->rounding = qgalore::rounding_from_name(flags->rounding);
        cfg->weight_format = qgalore::store_format_from_name(flags->weight_bits);
        cfg->state_format = qgalore::store_format_from_name(flags->state_bits);
        cfg->subspace.projection_format = qgalore::store_format_from_name(flags->proj_bits);
        cfg->seed = flags->seed;
        cfg->metrics_path = flags->metrics_out;
        cfg->checkpoint_path = flags->checkpoint_out;
        cfg->resume_path = flags->resume;
        if (flags->arch == "mlp-regressor") {
            cfg->model.architecture = qgalore::Architecture::MLPRegressor;
            cfg->data.kind = qgalore::DataConfig::Kind::Synthetic;
        } else if (flags->arch == "tiny-char-lm") {
            cfg->model.architecture = qgalore::Architecture::TinyCharLM;
            cfg->data.kind = qgalore::DataConfig::Kind::TextFile;
            cfg->data.path = flags->data_path;
        } else {
            throw CLI::ValidationError("--arch", "unknown architecture " + flags->arch);
        }

        qgalore::RunResult result = qgalore::run_training(*cfg);
        if (!result.error_message.empty()) {
            std::cerr << "training aborted: " << result.error_message << "\n";
        }
        if (result.exit_code == 0 && !result.records.empty()) {
            std::cout << qgalore::metrics_to_json(result.records.back()) << "\n";
        }
        exit_code = result.exit_code;
    });
}

void add_estimate_memory_command(CLI::App& app, int& exit_code) {
    struct Opts {
        std::string method = "qgalore";
        std::string arch = "tiny-char-lm";
        std::string weight_bits = "8";
        std::string state_bits = "8";
        std::string proj_bits = "4";
        int rank = 0;
        int block_size = 256;
        qgalore::ModelConfig model;
    };
    auto o = std::make_shared<Opts>();
    o->model.vocab_size = 64;

    CLI::App* cmd = app.add_subcommand("estimate-memory",
                                       "Analytic byte breakdown for a configuration");
    cmd->add_option("--method", o->method, "full-adam | galore | qgalore")
        ->capture_default_str();
    cmd->add_option("--arch", o->arch, "mlp-regressor | tiny-char-lm")->capture_default_str();
    cmd->add_option("--weight-bits", o->weight_bits, "4 | 8 | 16 | 32")->capture_default_str();
    cmd->add_option("--state-bits", o->state_bits, "4 | 8 | 16 | 32")->capture_default_str();
    cmd->add_option("--proj-bits", o->proj_bits, "4 | 8 | 16 | 32")->capture_default_str();
    cmd->add_option("--rank", o->rank, "Projection rank (0 = quarter of dimension)")
        ->capture_default_str();
    cmd->add_option("--block-size", o->block_size, "Quantization block size")
        ->capture_default_str();
    cmd->add_option("--vocab-size", o->model.vocab_size, "LM vocabulary size")
        ->capture_default_str();
    cmd->add_option("--embed-dim", o->model.embed_dim, "LM embedding dim")->capture_default_str();
    cmd->add_option("--lm-hidden", o->model.lm_hidden, "LM hidden width")->capture_default_str();
    cmd->add_option("--context", o->model.context, "LM context window")->capture_default_str();
    cmd->add_option("--n-features", o->model.input_dim, "MLP input width")->capture_default_str();
    cmd->add_option("--n-outputs", o->model.output_dim, "MLP output width")
        ->capture_default_str();
    cmd->add_option("--hidden", o->model.hidden_dim, "MLP hidden width")->capture_default_str();

    cmd->callback([o, &exit_code]() {
        o->model.architecture = (o->arch == "mlp-regressor")
                                    ? qgalore::Architecture::MLPRegressor
                                    : qgalore::Architecture::TinyCharLM;
        auto parse_bits = [](const std::string& s) {
            if (s == "4") return 4;
            if (s == "8") return 8;
            if (s == "16") return 16;
            if (s == "32" || s == "float") return 32;
            throw CLI::ValidationError("bits", "expected 4, 8, 16 or 32, got " + s);
        };
        qgalore::MemoryBits bits;
        bits.weight_bits = parse_bits(o->weight_bits);
        bits.state_bits = parse_bits(o->state_bits);
        bits.proj_bits = parse_bits(o->proj_bits);
        const qgalore::Method method = qgalore::method_from_name(o->method);
        const auto shapes = qgalore::layer_shapes(o->model, method, o->rank);
        const auto breakdown = qgalore::estimate_memory(shapes, bits, o->block_size);

        nlohmann::ordered_json j;
        j["weights"] = breakdown.weights;
        j["optimizer_states"] = breakdown.optimizer_states;
        j["projections"] = breakdown.projections;
        j["quant_metadata"] = breakdown.quant_metadata;
        j["total_without_metadata"] = breakdown.total_without_metadata();
        j["total_with_metadata"] = breakdown.total_with_metadata();
        std::cout << j.dump(2) << "\n";
        exit_code = 0;
    });
}

void add_inspect_command(CLI::App& app, int& exit_code) {
    auto path = std::make_shared<std::string>();
    CLI::App* cmd = app.add_subcommand("inspect-checkpoint", "Print a checkpoint's contents");
    cmd->add_option("path", *path, "Checkpoint file")->required();
    cmd->callback([path, &exit_code]() {
        const auto tensors = qgalore::load_checkpoint(*path);
        std::cout << "checkpoint " << *path << ": version " << qgalore::kCheckpointVersion
                  << ", " << tensors.size() << " tensors, checksum ok\n";
        for (const auto& t : tensors) {
            std::string dims;
            for (std::size_t i = 0; i < t.dims.size(); ++i) {
                dims += (i ? "x" : "") + std::to_string(t.dims[i]);
            }
            const char* dtype = t.dtype == 0 ? "f32" : (t.dtype == 1 ? "int8" : "int4");
            std::cout << "  " << t.name << "  " << dtype << "  [" << dims << "]  block "
                      << t.block_size << "  payload " << t.payload.size() << " B\n";
        }
        exit_code = 0;
    });
}

void add_bench_svd_command(CLI::App& app, int& exit_code) {
    struct Opts {
        int rows = 256;
        int cols = 256;
        int repeat = 3;
        std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* cmd = app.add_subcommand("bench-svd", "Time the SVD kernel");
    cmd->add_option("--rows", o->rows, "Matrix rows")->capture_default_str();
    cmd->add_option("--cols", o->cols, "Matrix cols")->capture_default_str();
    cmd->add_option("--repeat", o->repeat, "Repetitions")->capture_default_str();
    cmd->add_option("--seed", o->seed, "RNG seed")->capture_default_str();
    cmd->callback([o, &exit_code]() {
        qgalore::RngStream rng =
            qgalore::RngStream::derive(o->seed, qgalore::RngPurpose::Generic, 1);
        qgalore::Matrix a = qgalore::Matrix::gaussian(o->rows, o->cols, rng);
        double best_ms = 0.0;
        double recon = 0.0;
        int sweeps = 0;
        for (int i = 0; i < o->repeat; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            qgalore::SvdResult f = qgalore::svd(a);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            if (i == 0 || ms < best_ms) best_ms = ms;
            sweeps = f.sweeps;
            qgalore::Matrix sv(f.sigma.size(), f.sigma.size());
            for (std::size_t d = 0; d < f.sigma.size(); ++d) {
                sv.at(static_cast<int>(d), static_cast<int>(d)) = f.sigma[d];
            }
            qgalore::Matrix rec =
                qgalore::matmul(qgalore::matmul(f.u, sv), qgalore::transpose(f.v));
            recon = qgalore::frobenius_norm(qgalore::subtract(a, rec)) /
                    qgalore::frobenius_norm(a);
        }
        nlohmann::ordered_json j;
        j["rows"] = o->rows;
        j["cols"] = o->cols;
        j["best_ms"] = best_ms;
        j["sweeps"] = sweeps;
        j["relative_reconstruction_error"] = recon;
        std::cout << j.dump(2) << "\n";
        exit_code = 0;
    });
}

void add_gen_corpus_command(CLI::App& app, int& exit_code) {
    struct Opts {
        std::string out = "corpus.txt";
        std::size_t min_bytes = 1'300'000;
        std::uint64_t seed = 7;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* cmd = app.add_subcommand("gen-corpus", "Write a deterministic word-soup corpus");
    cmd->add_option("--out", o->out, "Output path")->capture_default_str();
    cmd->add_option("--min-bytes", o->min_bytes, "Minimum size in bytes")->capture_default_str();
    cmd->add_option("--seed", o->seed, "RNG seed")->capture_default_str();
    cmd->callback([o, &exit_code]() {
        const std::size_t n = qgalore::write_synthetic_corpus(o->out, o->min_bytes, o->seed);
        std::cout << "wrote " << n << " bytes to " << o->out << "\n";
        exit_code = 0;
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantized low-rank gradient training harness"};
    app.require_subcommand(1);
    int exit_code = 0;

    add_train_command(app, exit_code);
    add_estimate_memory_command(app, exit_code);
    add_inspect_command(app, exit_code);
    add_bench_svd_command(app, exit_code);
    add_gen_corpus_command(app, exit_code);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
