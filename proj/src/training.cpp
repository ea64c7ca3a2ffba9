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

#include "spot/training.hpp"

#include "spot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace spot {

namespace {

Points tensor_points(const Tensor& t) { return Eigen::Map<const Points>(t.data().data(), t.dim(0), 3); }

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void accumulate_kind(Metrics& m, ShapeKind kind, const ChamferValues& cd) {
    m.cd_norm += cd.norm;
    m.cd_sq += cd.squared;
    m.kind_cd_norm[kind] += cd.norm;
    m.kind_cd_sq[kind] += cd.squared;
    m.kind_count[kind] += 1;
}

void finish_metrics(Metrics& m, std::size_t count) {
    if (count == 0) return;
    m.cd_norm /= static_cast<double>(count);
    m.cd_sq /= static_cast<double>(count);
    for (auto& [kind, n] : m.kind_count) {
        m.kind_cd_norm[kind] /= n;
        m.kind_cd_sq[kind] /= n;
    }
}

} // namespace

std::vector<PreparedSample> prepare_samples(const std::vector<Sample>& samples, const ModelConfig& cfg) {
    std::vector<PreparedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.complete.rows() != cfg.out_n) {
            throw DataError("sample has " + std::to_string(s.complete.rows()) + " complete points but the model emits " +
                            std::to_string(cfg.out_n));
        }
        PreparedSample p;
        p.partial = s.partial;
        p.gt = Tensor::from_matrix(s.complete);
        p.subsets = make_target_subsets(p.gt, cfg.level(1), cfg.level(2), cfg.level(3));
        p.kind = s.spec.kind;
        out.push_back(std::move(p));
    }
    return out;
}

DatasetSplit split_dataset(const std::vector<Sample>& samples, double val_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(samples.size())));
    DatasetSplit out;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? out.val : out.train).push_back(samples[order[i]]);
    return out;
}

std::string csv_header() { return "epoch,split,cd_norm,cd_sq,cd1,cd2,cd3,cd_fine,loss"; }

std::string csv_row(const EpochRecord& r) {
    char buf[320];
    std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.epoch, r.split.c_str(), r.cd_norm,
                  r.cd_sq, r.cd1, r.cd2, r.cd3, r.cd_fine, r.loss);
    return buf;
}

Metrics evaluate_model(const CompletionModel& model, const std::vector<PreparedSample>& samples) {
    Metrics m;
    for (const auto& s : samples) {
        const StageClouds out = model.forward(s.partial);
        const Points fine = tensor_points(out.fine);
        if (!fine.allFinite()) throw NumericError("evaluate: non-finite model output");
        accumulate_kind(m, s.kind, chamfer_values(fine, tensor_points(s.gt)));
    }
    finish_metrics(m, samples.size());
    return m;
}

Baseline parse_baseline(const std::string& name) {
    if (name == "model") return Baseline::model;
    if (name == "copy-partial") return Baseline::copy_partial;
    if (name == "gt") return Baseline::ground_truth;
    throw DataError("unknown baseline '" + name + "' (expected model, copy-partial or gt)");
}

Points upsample_partial(const Points& partial, Index out_n) {
    if (partial.rows() == 0) throw DataError("upsample_partial: empty cloud");
    Points out(out_n, 3);
    for (Index i = 0; i < out_n; ++i) out.row(i) = partial.row(i % partial.rows());
    return out;
}

Metrics evaluate_baseline(const std::vector<Sample>& samples, Baseline baseline, Index out_n) {
    if (baseline == Baseline::model) throw DataError("evaluate_baseline: the model baseline needs a checkpoint");
    Metrics m;
    for (const auto& s : samples) {
        const Points pred = baseline == Baseline::ground_truth ? s.complete : upsample_partial(s.partial, out_n);
        accumulate_kind(m, s.spec.kind, chamfer_values(pred, s.complete));
    }
    finish_metrics(m, samples.size());
    return m;
}

double learning_rate(const RunConfig& cfg, int epoch) {
    return cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
}

LossWeights epoch_weights(const RunConfig& cfg, int epoch) {
    LossWeights w = cfg.loss;
    if (cfg.staged_fine) w.fine *= LossWeights::staged_fine_weight(epoch, cfg.epochs);
    return w;
}

TrainResult train_model(CompletionModel& model, const RunConfig& cfg, const std::vector<PreparedSample>& train,
                        const std::vector<PreparedSample>& val, const TrainHooks& hooks) {
    cfg.validate();
    if (train.empty()) throw DataError("train: no training samples");
    auto params = model.parameters().parameters();
    AdamState adam;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool squared = model.config().cd_squared;
    TrainResult result;

    auto emit = [&](const EpochRecord& r) {
        result.records.push_back(r);
        if (hooks.on_record) hooks.on_record(r);
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const LossWeights w = epoch_weights(cfg, epoch);
        const double lr = learning_rate(cfg, epoch);
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord tr;
        tr.epoch = epoch;
        tr.split = "train";
        const double inv_batch = 1.0 / cfg.batch_size;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            model.parameters().zero_grad();
            for (std::size_t b = start; b < stop; ++b) {
                const PreparedSample& s = train[order[b]];
                const StageClouds out = model.forward(s.partial);
                const LossTerms terms = composite_loss(out, s.gt, w, s.subsets, squared);
                if (!std::isfinite(terms.total.item())) {
                    throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
                }
                scale(terms.total, inv_batch).backward();
                const ChamferValues& cd = terms.fine_values;
                tr.cd_norm += cd.norm;
                tr.cd_sq += cd.squared;
                tr.cd1 += terms.cd1;
                tr.cd2 += terms.cd2;
                tr.cd3 += terms.cd3;
                tr.cd_fine += terms.cd_fine;
                tr.loss += terms.total.item();
            }
            adam_step(params, adam, lr);
        }
        const double n = static_cast<double>(train.size());
        for (double* v : {&tr.cd_norm, &tr.cd_sq, &tr.cd1, &tr.cd2, &tr.cd3, &tr.cd_fine, &tr.loss}) *v /= n;
        emit(tr);

        if (!val.empty()) {
            EpochRecord vr;
            vr.epoch = epoch;
            vr.split = "val";
            for (const auto& s : val) {
                const StageClouds out = model.forward(s.partial);
                const LossTerms terms = composite_loss(out, s.gt, w, s.subsets, squared);
                const ChamferValues& cd = terms.fine_values;
                vr.cd_norm += cd.norm;
                vr.cd_sq += cd.squared;
                vr.cd1 += terms.cd1;
                vr.cd2 += terms.cd2;
                vr.cd3 += terms.cd3;
                vr.cd_fine += terms.cd_fine;
                vr.loss += terms.total.item();
            }
            const double nv = static_cast<double>(val.size());
            for (double* v : {&vr.cd_norm, &vr.cd_sq, &vr.cd1, &vr.cd2, &vr.cd3, &vr.cd_fine, &vr.loss}) *v /= nv;
            if (!std::isfinite(vr.loss)) throw NumericError("train: non-finite validation loss");
            emit(vr);
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
    }
    return result;
}

bool GradcheckReport::passed() const {
    return std::all_of(entries.begin(), entries.end(), [&](const GradcheckEntry& e) { return e.max_error <= tolerance; });
}

GradcheckReport gradcheck_model(const ModelConfig& cfg, double tolerance, double step, double floor,
                                std::uint64_t seed) {
    CompletionModel model(cfg);
    DatasetOptions opts;
    opts.input_n = cfg.input_n;
    opts.out_n = cfg.out_n;
    const Sample sample = make_sample(ShapeKind::torus, seed, opts);
    const std::vector<PreparedSample> prepared = prepare_samples({sample}, cfg);
    const PreparedSample& s = prepared.front();
    const LossWeights weights;

    auto loss = [&]() {
        return composite_loss(model.forward(s.partial), s.gt, weights, s.subsets, cfg.cd_squared).total;
    };
    model.parameters().zero_grad();
    loss().backward();

    GradcheckReport report;
    report.tolerance = tolerance;
    for (auto& p : model.parameters().parameters()) {
        GradcheckEntry entry;
        entry.name = p.name;
        std::vector<double> analytic(static_cast<std::size_t>(p.value.numel()), 0.0);
        if (p.value.has_grad()) std::ranges::copy(p.value.grad(), analytic.begin());
        const std::span<double> data = p.value.mutable_data();
        for (Index i = 0; i < p.value.numel(); ++i) {
            const double saved = data[i];
            data[i] = saved + step;
            const double up = loss().item();
            data[i] = saved - step;
            const double down = loss().item();
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (!std::isfinite(err)) throw NumericError("gradcheck: non-finite gradient in " + p.name);
            entry.max_error = std::max(entry.max_error, err);
            ++entry.checked;
        }
        report.entries.push_back(entry);
    }
    return report;
}

std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::string& axis) {
    std::vector<AblationVariant> out;
    auto with = [&](const std::string& name, auto&& edit) {
        RunConfig c = base;
        edit(c.model);
        out.push_back({name, c});
    };
    if (axis == "pla") {
        with("full", [](ModelConfig&) {});
        with("pla-only", [](ModelConfig& m) { m.use_pdma = false; });
        with("pdma-only", [](ModelConfig& m) { m.use_pla = false; });
        with("neither", [](ModelConfig& m) {
            m.use_pla = false;
            m.use_pdma = false;
        });
    } else if (axis == "pdma") {
        with("vanilla", [](ModelConfig& m) { m.pdma_vanilla = true; });
        with("multi-scale", [](ModelConfig& m) { m.pdma_dense = false; });
        with("dense-multi-scale", [](ModelConfig&) {});
    } else if (axis == "dense") {
        with("dense", [](ModelConfig&) {});
        with("sequential", [](ModelConfig& m) { m.pdma_dense = false; });
    } else if (axis == "nsample") {
        for (Index s : {4, 8, 16, 32}) with("S=" + std::to_string(s), [s](ModelConfig& m) { m.neighbor_s = s; });
    } else {
        throw DataError("unknown ablation axis '" + axis + "' (expected pla, pdma, dense or nsample)");
    }
    return out;
}

double AblationRow::median_cd_sq() const { return median(val_cd_sq); }
double AblationRow::median_cd_norm() const { return median(val_cd_norm); }

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants, const std::vector<Sample>& data,
                                      int seeds, const std::function<void(const std::string&)>& progress) {
    if (variants.empty()) throw DataError("ablation: no variants");
    if (seeds < 1) throw DataError("ablation: need at least one seed");
    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        v.config.validate();
        AblationRow row;
        row.name = v.name;
        for (int k = 0; k < seeds; ++k) {
            RunConfig cfg = v.config;
            cfg.model.init_seed += static_cast<std::uint64_t>(k);
            cfg.seed += static_cast<std::uint64_t>(k);
            const DatasetSplit split = split_dataset(data, cfg.val_fraction, v.config.seed);
            const auto train = prepare_samples(split.train, cfg.model);
            const auto val = prepare_samples(split.val, cfg.model);
            CompletionModel model(cfg.model);
            train_model(model, cfg, train, val);
            const Metrics m = evaluate_model(model, val.empty() ? train : val);
            row.val_cd_sq.push_back(m.cd_sq);
            row.val_cd_norm.push_back(m.cd_norm);
            if (progress) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "%s seed %d: cd_sq %.6g cd_norm %.6g", v.name.c_str(), k, m.cd_sq,
                              m.cd_norm);
                progress(buf);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-20s %14s %14s %6s\n", "variant", "cd_sq x1e4", "cd_norm x1e4", "seeds");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-20s %14.3f %14.3f %6zu\n", r.name.c_str(), 1e4 * r.median_cd_sq(),
                      1e4 * r.median_cd_norm(), r.val_cd_sq.size());
        os << buf;
    }
    return os.str();
}

} // namespace spot
