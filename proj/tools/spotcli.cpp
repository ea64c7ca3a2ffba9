// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

// spotcli: dataset generation, training, evaluation, completion, gradient
// checks and ablation sweeps.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

#include "spot/checkpoint.hpp"
#include "spot/config.hpp"
#include "spot/data.hpp"
#include "spot/errors.hpp"
#include "spot/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace spot;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

class ExitRequest : public std::runtime_error {
public:
    ExitRequest(int code, const std::string& what) : std::runtime_error(what), code(code) {}
    int code;
};

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ExitRequest(kUsage, "--set expects key=value, got '" + kv + "'");
        set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw ExitRequest(kUsage, what + " is required");
    if (!fs::is_regular_file(path)) throw DataError(what + " '" + path + "' does not exist");
}

void require_writable_parent(const fs::path& path) {
    const fs::path parent = path.parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) {
        throw DataError("output directory '" + parent.string() + "' does not exist");
    }
}

struct LoadedModel {
    RunConfig config;
    CompletionModel model;
};

LoadedModel load_model(const std::string& checkpoint) {
    require_file(checkpoint, "--checkpoint");
    const Checkpoint ckpt = read_checkpoint(fs::path(checkpoint));
    RunConfig cfg = parse_run_config(ckpt.config_text);
    cfg.validate();
    LoadedModel out{cfg, CompletionModel(cfg.model)};
    load_parameters(out.model.parameters(), ckpt);
    return out;
}

void print_metrics(const Metrics& m) {
    std::printf("%-10s %6s %12s %12s\n", "kind", "count", "cd_sq_x1e4", "cd_norm_x1e4");
    for (const auto& [kind, count] : m.kind_count) {
        std::printf("%-10s %6d %12.4f %12.4f\n", to_string(kind).c_str(), count, 1e4 * m.kind_cd_sq.at(kind),
                    1e4 * m.kind_cd_norm.at(kind));
    }
    int total = 0;
    for (const auto& [kind, count] : m.kind_count) total += count;
    std::printf("%-10s %6d %12.4f %12.4f\n", "overall", total, 1e4 * m.cd_sq, 1e4 * m.cd_norm);
}

int cmd_gen(Index count, std::uint64_t seed, const std::string& out, Index input_n, Index out_n,
            const std::vector<std::string>& kinds) {
    DatasetOptions opts;
    opts.count = count;
    opts.seed = seed;
    opts.input_n = input_n;
    opts.out_n = out_n;
    if (!kinds.empty()) {
        opts.kinds.clear();
        for (const auto& k : kinds) opts.kinds.push_back(parse_shape_kind(k));
    }
    if (count < 1) throw ExitRequest(kUsage, "--count must be positive");
    require_writable_parent(out);
    const auto samples = make_dataset(opts);
    write_dataset(samples, out);
    std::printf("wrote %zu samples to %s\n", samples.size(), out.c_str());
    return 0;
}

int cmd_train(const std::string& config, const std::vector<std::string>& overrides, const std::string& out) {
    RunConfig cfg = resolve_config(config, overrides);
    require_file(cfg.dataset, "dataset (config key 'dataset')");
    if (out.empty()) throw ExitRequest(kUsage, "--out is required");
    const auto data = read_dataset(cfg.dataset);
    const DatasetSplit split = split_dataset(data, cfg.val_fraction, cfg.seed);
    const auto train = prepare_samples(split.train, cfg.model);
    const auto val = prepare_samples(split.val, cfg.model);
    if (train.empty()) throw DataError("dataset has no training samples after the validation split");

    fs::create_directories(out);
    const fs::path ckpt_path = cfg.checkpoint.empty() ? fs::path(out) / "model.ckpt" : fs::path(cfg.checkpoint);
    const fs::path log_path = cfg.log.empty() ? fs::path(out) / "train_log.csv" : fs::path(cfg.log);
    require_writable_parent(ckpt_path);
    require_writable_parent(log_path);
    std::ofstream log(log_path);
    if (!log) throw DataError("cannot open log " + log_path.string());
    const std::string config_text = serialize_run_config(cfg);
    std::ofstream(fs::path(out) / "run.cfg") << config_text;

    std::cout << csv_header() << '\n';
    log << csv_header() << '\n';
    CompletionModel model(cfg.model);
    TrainHooks hooks;
    hooks.on_record = [&](const EpochRecord& r) {
        std::cout << csv_row(r) << std::endl;
        log << csv_row(r) << std::endl;
    };
    hooks.on_epoch_end = [&](int, const CompletionModel& m) {
        write_checkpoint(ckpt_path, m.parameters().parameters(), config_text);
    };
    train_model(model, cfg, train, val, hooks);
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& baseline_name) {
    const Baseline baseline = parse_baseline(baseline_name);
    require_file(dataset, "--dataset");
    if (baseline == Baseline::model) {
        LoadedModel loaded = load_model(checkpoint);
        const auto data = read_dataset(dataset);
        print_metrics(evaluate_model(loaded.model, prepare_samples(data, loaded.config.model)));
        return 0;
    }
    const auto data = read_dataset(dataset);
    if (data.empty()) throw DataError("dataset is empty");
    Index out_n = data.front().complete.rows();
    if (!checkpoint.empty()) out_n = load_model(checkpoint).config.model.out_n;
    print_metrics(evaluate_baseline(data, baseline, out_n));
    return 0;
}

int cmd_complete(const std::string& checkpoint, const std::string& in, const std::string& out, bool raw) {
    require_file(in, "--in");
    if (out.empty()) throw ExitRequest(kUsage, "--out is required");
    require_writable_parent(out);
    LoadedModel loaded = load_model(checkpoint);
    const Points partial = read_ply(fs::path(in));
    Points input = partial;
    Eigen::RowVector3d center = Eigen::RowVector3d::Zero();
    double scale = 1.0;
    if (!raw) {
        const NormalizedCloud norm = normalize_to_unit_sphere(partial);
        input = norm.points;
        center = norm.center;
        scale = norm.scale;
    }
    const StageClouds result = loaded.model.forward(input);
    Points fine = Eigen::Map<const Points>(result.fine.data().data(), result.fine.dim(0), 3);
    if (!fine.allFinite()) throw NumericError("model produced non-finite points");
    write_ply(denormalize(fine, center, scale), fs::path(out));
    std::printf("wrote %ld points to %s\n", static_cast<long>(fine.rows()), out.c_str());
    return 0;
}

int cmd_gradcheck(const std::string& config, const std::vector<std::string>& overrides, double tol) {
    RunConfig cfg = config.empty() && overrides.empty() ? preset_config("micro") : resolve_config(config, overrides);
    const GradcheckReport report = gradcheck_model(cfg.model, tol);
    for (const auto& e : report.entries) {
        std::printf("%-40s %6ld  max_err %.3e  %s\n", e.name.c_str(), static_cast<long>(e.checked), e.max_error,
                    e.max_error <= tol ? "ok" : "FAIL");
    }
    std::printf("gradcheck %s (tolerance %.1e)\n", report.passed() ? "passed" : "FAILED", tol);
    return report.passed() ? 0 : kNumeric;
}

int cmd_ablate(const std::string& config, const std::vector<std::string>& overrides, const std::string& axis,
               int seeds) {
    RunConfig cfg = resolve_config(config, overrides);
    const auto variants = ablation_variants(cfg, axis);
    require_file(cfg.dataset, "dataset (config key 'dataset')");
    const auto data = read_dataset(cfg.dataset);
    const auto rows = run_ablation(variants, data, seeds, [](const std::string& line) {
        std::fprintf(stderr, "%s\n", line.c_str());
    });
    std::cout << format_ablation_table(rows);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-cloud completion toolkit"};
    app.require_subcommand(1);

    Index gen_count = 400;
    std::uint64_t gen_seed = 7;
    std::string gen_out;
    Index gen_input = 512, gen_output = 2048;
    std::vector<std::string> gen_kinds;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    gen->add_option("--count", gen_count, "Number of samples")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Master seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output dataset file")->required();
    gen->add_option("--input-n", gen_input, "Partial points per sample")->capture_default_str();
    gen->add_option("--out-n", gen_output, "Complete points per sample")->capture_default_str();
    gen->add_option("--kinds", gen_kinds, "Shape kinds (sphere, box, cylinder, torus)");

    std::string config, out, checkpoint, dataset, baseline = "model", in, axis;
    std::vector<std::string> overrides;
    double tol = 1e-4;
    int seeds = 3;
    bool raw = false;

    auto* train = app.add_subcommand("train", "Train a model");
    train->add_option("--config", config, "Config file");
    train->add_option("--set", overrides, "Override a config key (key=value)");
    train->add_option("--out", out, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline on a dataset");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file");
    eval->add_option("--dataset", dataset, "Dataset file")->required();
    eval->add_option("--baseline", baseline, "model, copy-partial or gt")->capture_default_str();

    auto* complete = app.add_subcommand("complete", "Complete one partial cloud");
    complete->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    complete->add_option("--in", in, "Partial cloud (PLY)")->required();
    complete->add_option("--out", out, "Completed cloud (PLY)")->required();
    complete->add_flag("--raw", raw, "Input is already in model units; skip normalization");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
    gradcheck->add_option("--config", config, "Config file (default: micro preset)");
    gradcheck->add_option("--set", overrides, "Override a config key (key=value)");
    gradcheck->add_option("--tol", tol, "Relative tolerance")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "Train an ablation grid and print a comparison table");
    ablate->add_option("--config", config, "Config file");
    ablate->add_option("--set", overrides, "Override a config key (key=value)");
    ablate->add_option("--axis", axis, "pla, pdma, dense or nsample")
        ->required()
        ->check(CLI::IsMember({"pla", "pdma", "dense", "nsample"}));
    ablate->add_option("--seeds", seeds, "Seeds per variant")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (*gen) return cmd_gen(gen_count, gen_seed, gen_out, gen_input, gen_output, gen_kinds);
        if (*train) return cmd_train(config, overrides, out);
        if (*eval) return cmd_eval(checkpoint, dataset, baseline);
        if (*complete) return cmd_complete(checkpoint, in, out, raw);
        if (*gradcheck) return cmd_gradcheck(config, overrides, tol);
        if (*ablate) return cmd_ablate(config, overrides, axis, seeds);
    } catch (const ExitRequest& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const ShapeError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
