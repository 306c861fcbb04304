#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "augsens/augsets.hpp"
#include "augsens/config.hpp"
#include "augsens/convnet.hpp"
#include "augsens/dataset.hpp"
#include "augsens/estimators.hpp"
#include "augsens/statan.hpp"
#include "augsens/store.hpp"

namespace augsens {

// ---- building blocks shared by the stages ----------------------------------------------

/// Bias-free centroid readout: the final dense layer scores f . mu_c / |mu_c|
/// with mu_c the training-partition feature mean, so uniformly rescaled
/// features keep their prediction.
void fit_readout(Network& net, const Dataset& data, std::size_t jobs = 1);

/// The image a plan row stands for: the selected dataset instance, augmented.
Image realize_sample(const Dataset& data, const AugmentationSet& set, const Realization& r);

/// Fills the unit values of one plan row.
using UnitFunction = std::function<void(std::size_t row, std::span<double> units)>;

struct SensitivityResult {
    std::vector<UnitLayout> layout;
    std::vector<std::string> groups;
    /// Sobol: first-order maps then total maps; Shapley: one map per group.
    std::vector<SensitivityMap> maps;
    /// Per unit over the independent rows (A and B, or the full-prefix rows).
    std::vector<VarianceStats> stats;
    std::vector<std::uint8_t> dead;
    /// Saltelli only: groups that never changed any unit.
    std::vector<std::uint8_t> group_inert;
    std::size_t rows = 0;
};

/// Streams the rows of a plan through f in chunks (parallel within a chunk,
/// accumulation in plan order). `prepare(begin, end)` runs before each chunk.
SensitivityResult estimate_sensitivity(const SamplePlan& plan, const std::vector<UnitLayout>& layout,
                                       const std::vector<std::string>& group_names, const UnitFunction& f,
                                       std::size_t jobs = 1,
                                       const std::function<void(std::size_t, std::size_t)>& prepare = {});

/// Map over the units of a checkpoint: conv maps averaged over space per
/// channel, dense maps as they are.
std::vector<double> spatial_average(const Tensor& map);

/// Unit-wise Spearman matrix between the maps of several variables at one checkpoint.
CorrelationMatrix variable_correlation(const std::vector<const SensitivityMap*>& maps);

/// HSV plane `channel` of an RGB image, area-resized and replicated to `shape` (C x H x W).
Tensor segment_input(const Image& rgb, std::size_t channel, const Shape& shape);

/// Convolutional checkpoint preceding `to`, or "input".
std::string segment_start(const Network& net, const std::string& to);

// ---- stages ------------------------------------------------------------------------------

struct StageResult {
    std::string stage;
    std::string hash;
    std::filesystem::path dir;
    bool reused = false;
};

/// Experiment orchestration over a content-addressed store. Every stage checks
/// that its upstream stages are complete and is a no-op when its own output
/// already exists.
class Pipeline {
public:
    Pipeline(ExperimentConfig cfg, std::size_t jobs = 1, std::ostream* log = nullptr);
    ~Pipeline();

    StageResult plan();
    StageResult sample();
    StageResult infer();
    StageResult estimate();
    StageResult mask_eval();
    StageResult class_sense();
    StageResult segment();
    StageResult report();

    /// Content hash of a stage's inputs.
    std::string stage_hash(const std::string& stage) const;
    const ResultStore& store() const { return store_; }
    const ExperimentConfig& config() const { return cfg_; }

    const Dataset& dataset();
    const Network& network();
    const AugmentationSet& augmentation_set();
    const SamplePlan& sample_plan();
    std::vector<UnitLayout> layout();

    /// Maps stored by the estimate stage.
    std::vector<SensitivityMap> load_maps(SensitivityKind kind);

private:
    void note(const std::string& line);
    void require(const std::string& stage);
    StageResult done(const std::string& stage, bool reused);
    std::string dataset_key() const;
    std::string network_key() const;

    ExperimentConfig cfg_;
    std::size_t jobs_;
    std::ostream* log_;
    ResultStore store_;
    std::unique_ptr<Dataset> dataset_;
    std::unique_ptr<Network> network_;
    std::unique_ptr<AugmentationSet> set_;
    std::unique_ptr<SamplePlan> plan_;
};

}  // namespace augsens
