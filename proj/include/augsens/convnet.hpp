#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "augsens/aswt.hpp"
#include "augsens/tensor.hpp"

namespace augsens {

enum class Padding { Zeros, Circular, Reflect };

/// Cross-correlation layer. `dilation` counts the gaps between kernel taps, so
/// 0 is a dense kernel.
struct Conv2d {
    std::string name;
    std::size_t c_in = 1, c_out = 1, k_h = 1, k_w = 1;
    std::size_t stride = 1;
    std::size_t dilation = 0;
    std::size_t padding = 0;
    Padding mode = Padding::Zeros;
    Tensor weight;  // c_out x c_in x k_h x k_w
    Tensor bias;    // c_out
};
struct ReLU {};
struct MaxPool {
    std::size_t k = 2;
    std::size_t stride = 2;
};
struct AdaptiveAvgPool {
    std::size_t out_h = 1;
    std::size_t out_w = 1;
};
struct Flatten {};
struct Dense {
    std::string name;
    std::size_t n_in = 1, n_out = 1;
    Tensor weight;  // n_out x n_in
    Tensor bias;    // n_out
};
/// Adds the activation of an earlier checkpoint.
struct ResidualAdd {
    std::string source;
};

using Layer = std::variant<Conv2d, ReLU, MaxPool, AdaptiveAvgPool, Flatten, Dense, ResidualAdd>;

std::string layer_kind(const Layer& layer);

struct Checkpoint {
    std::string name;
    std::size_t layer;  // tap on the output of this layer
    /// Kind of the closest preceding linear map: convolutional or dense.
    bool convolutional = true;
};

/// Name usable as a segment start that denotes the network input.
inline constexpr const char* kInputCheckpoint = "input";

class Network {
public:
    Network() = default;
    Network(Shape input_shape, std::size_t class_count) : input_shape_(std::move(input_shape)), class_count_(class_count) {}

    void add(Layer layer) { layers_.push_back(std::move(layer)); }
    /// Tap the output of the most recently added layer.
    void checkpoint(const std::string& name);

    const Shape& input_shape() const { return input_shape_; }
    std::size_t class_count() const { return class_count_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Checkpoint>& checkpoints() const { return checkpoints_; }
    const Checkpoint& find_checkpoint(const std::string& name) const;
    bool has_checkpoint(const std::string& name) const;
    std::vector<std::string> checkpoint_names() const;

    /// Output shape of every layer for the configured input shape.
    std::vector<Shape> layer_shapes() const;
    Shape checkpoint_shape(const std::string& name) const;

    /// Structural checks: unique checkpoint names, final dense layer with
    /// class_count outputs, residual sources that precede their consumers,
    /// weight shapes that match the declarations.
    void validate() const;

    Conv2d& conv(const std::string& name);
    Dense& dense(const std::string& name);

private:
    Shape input_shape_;
    std::size_t class_count_ = 0;
    std::vector<Layer> layers_;
    std::vector<Checkpoint> checkpoints_;
};

struct ActivationRecord {
    std::string checkpoint;
    std::size_t sample_id = 0;
    Tensor tensor;
};

/// Multiplicative masks per checkpoint name.
using MaskSet = std::map<std::string, Tensor>;

struct ForwardResult {
    Tensor logits;
    std::vector<ActivationRecord> records;  // checkpoint order
};

Tensor conv2d_forward(const Tensor& x, const Conv2d& layer);
Tensor dense_forward(const Tensor& x, const Dense& layer);
Tensor maxpool_forward(const Tensor& x, const MaxPool& layer);
Tensor adaptive_avgpool_forward(const Tensor& x, const AdaptiveAvgPool& layer);
Tensor relu_forward(const Tensor& x);

/// Full forward pass capturing every checkpoint. Masks, when given, multiply
/// the activation at their checkpoint before it propagates; captured records
/// hold the masked tensors.
ForwardResult forward_with_checkpoints(const Network& net, const Tensor& input, const MaskSet* masks = nullptr,
                                       std::size_t sample_id = 0);

/// Logits only.
Tensor forward(const Network& net, const Tensor& input, const MaskSet* masks = nullptr);

/// Execute the layers after `from` (a checkpoint or "input") up to and
/// including checkpoint `to`. x must have the static shape of `from`.
Tensor run_segment(const Network& net, const std::string& from, const std::string& to, const Tensor& x);

/// Indices of the k largest logits, descending, ties by lower index.
std::vector<std::size_t> predict_topk(std::span<const float> logits, std::size_t k);

/// He-initialized convolutions, zero biases, zero dense readout.
Network tinynet_a(std::size_t class_count = 10, std::uint64_t seed = 0, std::size_t height = 32, std::size_t width = 32);

// ---- weights container -----------------------------------------------------------

aswt::Archive weights_archive(const Network& net);
void save_weights(const Network& net, const std::filesystem::path& path);
/// Loads every parameter tensor of the architecture. Returns warnings for
/// tensors in the file that the architecture does not use.
std::vector<std::string> load_weights(Network& net, const aswt::Archive& archive);
std::vector<std::string> load_weights(Network& net, const std::filesystem::path& path);

}  // namespace augsens
