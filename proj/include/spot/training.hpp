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

// Training, evaluation, finite-difference checks and ablation sweeps.

#pragma once

#include "spot/config.hpp"
#include "spot/data.hpp"
#include "spot/network.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace spot {

/// A sample with its targets precomputed for a given model configuration.
struct PreparedSample {
    Points partial;
    Tensor gt;
    TargetSubsets subsets;
    ShapeKind kind = ShapeKind::sphere;
};

std::vector<PreparedSample> prepare_samples(const std::vector<Sample>& samples, const ModelConfig& cfg);

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
};

/// Seeded shuffle; the first round(val_fraction * N) samples go to `val`.
DatasetSplit split_dataset(const std::vector<Sample>& samples, double val_fraction, std::uint64_t seed);

/// One CSV row. `split` is "train" or "val".
struct EpochRecord {
    int epoch = 0;
    std::string split;
    double cd_norm = 0;
    double cd_sq = 0;
    double cd1 = 0;
    double cd2 = 0;
    double cd3 = 0;
    double cd_fine = 0;
    double loss = 0;
};

std::string csv_header();
std::string csv_row(const EpochRecord& r);

struct Metrics {
    double cd_norm = 0;
    double cd_sq = 0;
    std::map<ShapeKind, double> kind_cd_norm;
    std::map<ShapeKind, double> kind_cd_sq;
    std::map<ShapeKind, int> kind_count;
};

Metrics evaluate_model(const CompletionModel& model, const std::vector<PreparedSample>& samples);

enum class Baseline { model, copy_partial, ground_truth };
Baseline parse_baseline(const std::string& name);

/// The partial cloud tiled to out_n rows.
Points upsample_partial(const Points& partial, Index out_n);
/// copy_partial and ground_truth predictions scored against each complete cloud.
Metrics evaluate_baseline(const std::vector<Sample>& samples, Baseline baseline, Index out_n);

double learning_rate(const RunConfig& cfg, int epoch);
LossWeights epoch_weights(const RunConfig& cfg, int epoch);

struct TrainHooks {
    std::function<void(const EpochRecord&)> on_record;
    std::function<void(int epoch, const CompletionModel&)> on_epoch_end;
};

struct TrainResult {
    std::vector<EpochRecord> records;
};

/// Mini-batch Adam over `train`; per-sample gradients are summed with a
/// 1/batch factor. Evaluates `val` after every epoch when it is non-empty.
TrainResult train_model(CompletionModel& model, const RunConfig& cfg, const std::vector<PreparedSample>& train,
                        const std::vector<PreparedSample>& val, const TrainHooks& hooks = {});

struct GradcheckEntry {
    std::string name;
    Index checked = 0;
    double max_error = 0;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double tolerance = 0;
    bool passed() const;
};

/// Central differences on every scalar of every parameter of a model built
/// from `cfg`, driven by a deterministic synthetic sample. The error per
/// scalar is |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradcheckReport gradcheck_model(const ModelConfig& cfg, double tolerance, double step = 1e-5, double floor = 1e-3,
                                std::uint64_t seed = 3);

struct AblationVariant {
    std::string name;
    RunConfig config;
};

/// Variants for axis pla, pdma, dense or nsample. Throws DataError otherwise.
std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::string& axis);

struct AblationRow {
    std::string name;
    std::vector<double> val_cd_sq; // one per seed
    std::vector<double> val_cd_norm;
    double median_cd_sq() const;
    double median_cd_norm() const;
};

/// Trains every variant once per seed (seed offsets 0..seeds-1 applied to the
/// model init and the training shuffle) and reports held-out CD.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants, const std::vector<Sample>& data,
                                      int seeds, const std::function<void(const std::string&)>& progress = {});

std::string format_ablation_table(const std::vector<AblationRow>& rows);

} // namespace spot
