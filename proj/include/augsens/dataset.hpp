#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "augsens/augment.hpp"

namespace augsens {

inline constexpr std::size_t kTrain = 0;
inline constexpr std::size_t kValid = 1;

/// Labeled images split into a training (0) and a validation (1) partition.
class Dataset {
public:
    Dataset(std::vector<Image> images, std::vector<std::size_t> labels, std::vector<std::size_t> partition,
            std::vector<std::string> class_names);

    std::size_t size() const { return images_.size(); }
    std::size_t class_count() const { return class_names_.size(); }
    const std::vector<Image>& images() const { return images_; }
    const std::vector<std::size_t>& labels() const { return labels_; }
    const std::vector<std::size_t>& partition() const { return partition_; }
    const std::vector<std::string>& class_names() const { return class_names_; }
    const Image& image(std::size_t i) const { return images_.at(i); }

    /// Indices of one class inside one partition, in dataset order.
    const std::vector<std::size_t>& members(std::size_t cls, std::size_t part) const;
    /// Instance picked by a position in [0, 1) within (class, partition).
    std::size_t select(std::size_t cls, std::size_t part, double position) const;
    /// Up to `per_class` validation images of every class, class-interleaved.
    std::vector<std::size_t> validation_subset(std::size_t per_class) const;

private:
    std::vector<Image> images_;
    std::vector<std::size_t> labels_, partition_;
    std::vector<std::string> class_names_;
    std::vector<std::vector<std::size_t>> members_;  // cls * 2 + part
};

struct DeskOptions {
    std::uint64_t seed = 11;
    std::size_t classes = 10;
    std::size_t per_class = 200;
    std::size_t height = 32;
    std::size_t width = 32;
};

/// Rows and columns [y0, y1) x [x0, x1) of the marker that defines class 0.
struct Rect {
    std::size_t y0, y1, x0, x1;
};
Rect desk_marker(std::size_t height, std::size_t width);

/// Procedural shapes and textures, one pattern family per class. Class 0 is
/// a fixed bright rectangle on the shared background. Every fifth image of a
/// class goes to the validation partition.
Dataset desk_dataset(const DeskOptions& options);

/// Directory layout <root>/{train,valid}/<class>/<image>; classes sorted by name.
Dataset load_image_folder(const std::filesystem::path& root);

}  // namespace augsens
