#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "augsens/tensor.hpp"

namespace augsens {

enum class ChannelSemantics { RGB, HSV, ReplicatedSingle };

/// Channels x height x width, values in [0, 1].
struct Image {
    Tensor pixels;
    ChannelSemantics semantics = ChannelSemantics::RGB;

    Image() = default;
    explicit Image(Tensor t, ChannelSemantics s = ChannelSemantics::RGB);
    Image(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f);

    std::size_t channels() const { return pixels.dim(0); }
    std::size_t height() const { return pixels.dim(1); }
    std::size_t width() const { return pixels.dim(2); }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels.at(c, y, x); }
    float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels.at(c, y, x); }

    bool operator==(const Image&) const = default;
};

enum class TransformKind {
    Erase,
    Sharpness,
    Rolling,
    Grayscale,
    GaussianBlur,
    Brightness,
    Contrast,
    Saturation,
    Hue,
    HFlip,
    RotateCrop,
    EllipticBlur,
};

inline constexpr std::size_t kTransformKindCount = 12;

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& name);
std::vector<TransformKind> all_transform_kinds();

using ParamMap = std::map<std::string, double>;

struct TransformSpec {
    TransformKind kind = TransformKind::Erase;
    ParamMap params;
};

/// Parameter assignment under which the transform is the identity.
ParamMap identity_params(TransformKind kind);
TransformSpec identity_spec(TransformKind kind);

/// Parameters of the transform (all of them must be present in a spec).
std::vector<std::string> param_names(TransformKind kind);

// Parameter meanings (fractions are relative to the frame side):
//   erase          cx, cy (rectangle center), w, h (size)
//   sharpness      apply (0/1), factor
//   rolling        dy, dx (pixels)
//   grayscale      apply (0/1)
//   gaussian_blur  sigma (pixels)
//   brightness     factor
//   contrast       factor
//   saturation     factor
//   hue            shift (turns)
//   hflip          apply (0/1)
//   rotate_crop    angle (degrees)
//   elliptic_blur  cx, cy (center), a, b (semi-axes), sigma (pixels)

Image apply_transform(const Image& img, const TransformSpec& spec);

/// Apply specs[order[0]], then specs[order[1]], ...
Image compose_ordered(const Image& img, std::span<const TransformSpec> specs, std::span<const std::size_t> order);

Image rgb_to_hsv(const Image& img);
Image hsv_to_rgb(const Image& img);

/// out_channels copies of one plane.
Image channel_repeat(const Image& img, std::size_t channel, std::size_t out_channels);

// ---- building blocks, exposed for testing ------------------------------------

enum class Boundary { Reflect, Cyclic };

/// Normalized 1-D Gaussian of radius ceil(3 sigma); sigma > 0.
std::vector<double> gaussian_kernel(double sigma);
/// Separable Gaussian blur of every channel.
Image gaussian_blur(const Image& img, double sigma, Boundary boundary = Boundary::Reflect);

/// Reflect an index into [0, n) (mirror without repeating the edge sample).
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

/// Scale of the largest centered crop with the frame's aspect ratio that fits
/// inside a frame rotated by angle_deg.
double rotate_crop_scale(std::size_t width, std::size_t height, double angle_deg);

/// Box-filter (area) resize of every channel.
Image area_resize(const Image& img, std::size_t height, std::size_t width);

}  // namespace augsens
