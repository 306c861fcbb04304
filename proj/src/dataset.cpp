#include "augsens/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "augsens/error.hpp"
#include "augsens/imageio.hpp"
#include "augsens/parallel.hpp"
#include "augsens/rng.hpp"

namespace augsens {

Dataset::Dataset(std::vector<Image> images, std::vector<std::size_t> labels, std::vector<std::size_t> partition,
                 std::vector<std::string> class_names)
    : images_(std::move(images)),
      labels_(std::move(labels)),
      partition_(std::move(partition)),
      class_names_(std::move(class_names)) {
    if (labels_.size() != images_.size() || partition_.size() != images_.size()) {
        throw ArityError("dataset needs one label and one partition per image");
    }
    members_.assign(class_count() * 2, {});
    for (std::size_t i = 0; i < images_.size(); ++i) {
        if (labels_[i] >= class_count()) throw DomainError("dataset label out of range");
        if (partition_[i] > kValid) throw DomainError("dataset partition must be 0 or 1");
        if (images_[i].pixels.shape() != images_.front().pixels.shape()) {
            throw ShapeError("dataset images differ in shape");
        }
        members_[labels_[i] * 2 + partition_[i]].push_back(i);
    }
}

const std::vector<std::size_t>& Dataset::members(std::size_t cls, std::size_t part) const {
    if (cls >= class_count() || part > kValid) throw DomainError("class or partition out of range");
    return members_[cls * 2 + part];
}

std::size_t Dataset::select(std::size_t cls, std::size_t part, double position) const {
    const auto& m = members(cls, part);
    if (m.empty()) {
        throw DomainError("class '" + class_names_[cls] + "' has no images in partition " + std::to_string(part));
    }
    const auto k = static_cast<std::size_t>(std::clamp(position, 0.0, 1.0) * static_cast<double>(m.size()));
    return m[std::min(k, m.size() - 1)];
}

std::vector<std::size_t> Dataset::validation_subset(std::size_t per_class) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < class_count(); ++c) {
            const auto& m = members(c, kValid);
            if (i < m.size()) out.push_back(m[i]);
        }
    }
    return out;
}

Rect desk_marker(std::size_t height, std::size_t width) {
    return {height * 5 / 16, height * 9 / 16, width / 4, width * 3 / 4};
}

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

Image desk_image(std::size_t cls, StreamEngine& rng, const DeskOptions& o) {
    const std::size_t H = o.height, W = o.width;
    Image img(3, H, W);
    // shared background: dim tinted noise
    const double base = 0.15 + 0.1 * rng.uniform();
    double tint[3];
    for (double& t : tint) t = base + 0.05 * (rng.uniform() - 0.5);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double n = 0.04 * (rng.uniform() - 0.5);
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = clamp01(tint[c] + n);
        }
    }
    double color[3];
    for (double& c : color) c = 0.35 + 0.5 * rng.uniform();
    const double cy = 6.0 + rng.uniform() * (static_cast<double>(H) - 12.0);
    const double cx = 6.0 + rng.uniform() * (static_cast<double>(W) - 12.0);
    const double period = 4.0 + std::floor(4.0 * rng.uniform());
    const double phase = period * rng.uniform();
    const double radius = 4.0 + 4.0 * rng.uniform();

    auto paint = [&](std::size_t y, std::size_t x, double strength) {
        for (std::size_t c = 0; c < 3; ++c) {
            img.at(c, y, x) = clamp01((1.0 - strength) * img.at(c, y, x) + strength * color[c]);
        }
    };
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double fy = static_cast<double>(y) + 0.5, fx = static_cast<double>(x) + 0.5;
            const double dy = fy - cy, dx = fx - cx;
            const double r = std::hypot(dy, dx);
            switch (cls % 10) {
                case 0: break;
                case 1:
                    if (r <= radius) paint(y, x, 1.0);
                    break;
                case 2:
                    if (std::fmod(fy + phase, period) < period / 2) paint(y, x, 0.8);
                    break;
                case 3:
                    if (std::fmod(fx + phase, period) < period / 2) paint(y, x, 0.8);
                    break;
                case 4:
                    if ((static_cast<long>((fy + phase) / period) + static_cast<long>((fx + phase) / period)) % 2 == 0) {
                        paint(y, x, 0.8);
                    }
                    break;
                case 5: paint(y, x, 0.9 * (fy + fx) / static_cast<double>(H + W)); break;
                case 6:
                    if (r <= radius + 2.0 && r >= radius - 0.5) paint(y, x, 1.0);
                    break;
                case 7:
                    if (std::abs(dy) < 1.6 * (1.0 + radius / 8.0) || std::abs(dx) < 1.6 * (1.0 + radius / 8.0)) {
                        if (std::abs(dy) <= radius + 2 && std::abs(dx) <= radius + 2) paint(y, x, 1.0);
                    }
                    break;
                case 8:
                    if (dy >= -radius && dy <= radius && std::abs(dx) <= (dy + radius) / 2.0) paint(y, x, 1.0);
                    break;
                case 9:
                    if (rng.uniform() < 0.08) paint(y, x, 1.0);
                    break;
            }
        }
    }
    if (cls == 0) {
        const Rect m = desk_marker(H, W);
        for (std::size_t y = m.y0; y < m.y1; ++y) {
            for (std::size_t x = m.x0; x < m.x1; ++x) {
                for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = clamp01(0.92 + 0.06 * rng.uniform());
            }
        }
    }
    return img;
}

}  // namespace

Dataset desk_dataset(const DeskOptions& o) {
    if (o.classes < 2 || o.per_class < 2) throw DomainError("desk dataset needs at least 2 classes of 2 images");
    if (o.height < 16 || o.width < 16) throw DomainError("desk images must be at least 16 x 16");
    const std::size_t n = o.classes * o.per_class;
    std::vector<Image> images(n);
    std::vector<std::size_t> labels(n), partition(n);
    std::vector<std::string> names(o.classes);
    for (std::size_t c = 0; c < o.classes; ++c) names[c] = "class" + std::to_string(c);
    parallel_for(n, 1, [&](std::size_t i) {
        const std::size_t cls = i / o.per_class, k = i % o.per_class;
        StreamEngine rng(o.seed, stream_id(0xde5c, cls, k));
        images[i] = desk_image(cls, rng, o);
        labels[i] = cls;
        partition[i] = k % 5 == 4 ? kValid : kTrain;
    });
    return Dataset(std::move(images), std::move(labels), std::move(partition), std::move(names));
}

Dataset load_image_folder(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw FormatError("dataset directory not found: " + root.string());
    std::vector<std::string> classes;
    for (const char* part : {"train", "valid"}) {
        if (!fs::is_directory(root / part)) throw FormatError("dataset lacks the '" + std::string(part) + "' directory");
        for (const auto& e : fs::directory_iterator(root / part)) {
            if (e.is_directory()) classes.push_back(e.path().filename().string());
        }
    }
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    std::vector<Image> images;
    std::vector<std::size_t> labels, partition;
    for (std::size_t p = 0; p < 2; ++p) {
        for (std::size_t c = 0; c < classes.size(); ++c) {
            const fs::path dir = root / (p == kTrain ? "train" : "valid") / classes[c];
            if (!fs::is_directory(dir)) continue;
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(dir)) {
                if (e.is_regular_file()) files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                images.push_back(imageio::read_image(f));
                labels.push_back(c);
                partition.push_back(p);
            }
        }
    }
    if (images.empty()) throw FormatError("dataset directory holds no images: " + root.string());
    return Dataset(std::move(images), std::move(labels), std::move(partition), std::move(classes));
}

}  // namespace augsens
