#include "augsens/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "augsens/error.hpp"

namespace augsens {

Image::Image(Tensor t, ChannelSemantics s) : pixels(std::move(t)), semantics(s) {
    if (pixels.rank() != 3 || pixels.dim(0) == 0 || pixels.dim(1) == 0 || pixels.dim(2) == 0) {
        throw ShapeError("image tensor must be C x H x W with positive sides, got " + shape_to_string(pixels.shape()));
    }
}

Image::Image(std::size_t channels, std::size_t height, std::size_t width, float fill)
    : Image(Tensor({channels, height, width}, fill)) {}

namespace {

struct KindInfo {
    TransformKind kind;
    const char* name;
    std::vector<std::string> params;
};

const std::array<KindInfo, kTransformKindCount>& kind_table() {
    static const std::array<KindInfo, kTransformKindCount> table{{
        {TransformKind::Erase, "erase", {"cx", "cy", "w", "h"}},
        {TransformKind::Sharpness, "sharpness", {"apply", "factor"}},
        {TransformKind::Rolling, "rolling", {"dy", "dx"}},
        {TransformKind::Grayscale, "grayscale", {"apply"}},
        {TransformKind::GaussianBlur, "gaussian_blur", {"sigma"}},
        {TransformKind::Brightness, "brightness", {"factor"}},
        {TransformKind::Contrast, "contrast", {"factor"}},
        {TransformKind::Saturation, "saturation", {"factor"}},
        {TransformKind::Hue, "hue", {"shift"}},
        {TransformKind::HFlip, "hflip", {"apply"}},
        {TransformKind::RotateCrop, "rotate_crop", {"angle"}},
        {TransformKind::EllipticBlur, "elliptic_blur", {"cx", "cy", "a", "b", "sigma"}},
    }};
    return table;
}

const KindInfo& info(TransformKind kind) { return kind_table()[static_cast<std::size_t>(kind)]; }

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void clamp_inplace(Image& img) {
    for (float& v : img.pixels.storage()) v = std::clamp(v, 0.0f, 1.0f);
}

void require_rgb(const Image& img, TransformKind kind) {
    if (img.channels() != 3) {
        throw ShapeError(to_string(kind) + " needs a 3-channel image, got " + std::to_string(img.channels()));
    }
}

double param(const TransformSpec& spec, const std::string& name) { return spec.params.at(name); }

void check_range(const TransformSpec& spec, const std::string& name, double lo, double hi) {
    const double v = param(spec, name);
    if (!(v >= lo && v <= hi)) {
        throw DomainError(to_string(spec.kind) + "." + name + " = " + std::to_string(v) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

void check_flag(const TransformSpec& spec, const std::string& name) {
    const double v = param(spec, name);
    if (v != 0.0 && v != 1.0) throw DomainError(to_string(spec.kind) + "." + name + " must be 0 or 1");
}

void validate(const TransformSpec& spec) {
    const auto& names = info(spec.kind).params;
    for (const auto& n : names) {
        if (!spec.params.contains(n)) throw DomainError(to_string(spec.kind) + " is missing parameter " + n);
        if (!std::isfinite(spec.params.at(n))) throw DomainError(to_string(spec.kind) + "." + n + " is not finite");
    }
    for (const auto& [k, v] : spec.params) {
        if (std::find(names.begin(), names.end(), k) == names.end()) {
            throw DomainError(to_string(spec.kind) + " has no parameter " + k);
        }
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (spec.kind) {
        case TransformKind::Erase:
        case TransformKind::EllipticBlur:
            check_range(spec, "cx", 0, 1);
            check_range(spec, "cy", 0, 1);
            if (spec.kind == TransformKind::Erase) {
                check_range(spec, "w", 0, 1);
                check_range(spec, "h", 0, 1);
            } else {
                check_range(spec, "a", 0, 1);
                check_range(spec, "b", 0, 1);
                check_range(spec, "sigma", 0, 64);
            }
            break;
        case TransformKind::Sharpness:
            check_flag(spec, "apply");
            check_range(spec, "factor", 0, inf);
            break;
        case TransformKind::Rolling:
            for (const char* n : {"dy", "dx"}) {
                if (param(spec, n) != std::floor(param(spec, n))) throw DomainError(std::string("rolling.") + n + " must be an integer");
            }
            break;
        case TransformKind::Grayscale:
        case TransformKind::HFlip:
            check_flag(spec, "apply");
            break;
        case TransformKind::GaussianBlur:
            check_range(spec, "sigma", 0, 64);
            break;
        case TransformKind::Brightness:
        case TransformKind::Contrast:
        case TransformKind::Saturation:
            check_range(spec, "factor", 0, inf);
            break;
        case TransformKind::Hue:
            check_range(spec, "shift", -0.5, 0.5);
            break;
        case TransformKind::RotateCrop:
            check_range(spec, "angle", -180, 180);
            break;
    }
}

// ---- individual transforms ----------------------------------------------------

Image erase(const Image& img, double cx, double cy, double w, double h) {
    const auto W = static_cast<double>(img.width());
    const auto H = static_cast<double>(img.height());
    const auto x0 = static_cast<std::size_t>(std::clamp(std::floor((cx - w / 2) * W + 0.5), 0.0, W));
    const auto x1 = static_cast<std::size_t>(std::clamp(std::floor((cx + w / 2) * W + 0.5), 0.0, W));
    const auto y0 = static_cast<std::size_t>(std::clamp(std::floor((cy - h / 2) * H + 0.5), 0.0, H));
    const auto y1 = static_cast<std::size_t>(std::clamp(std::floor((cy + h / 2) * H + 0.5), 0.0, H));
    Image out = img;
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) out.at(c, y, x) = 0.0f;
        }
    }
    return out;
}

// Blend of the image with a 3x3 smoothing of its interior (border pixels are kept).
Image sharpness(const Image& img, double factor) {
    Image out = img;
    const std::size_t H = img.height();
    const std::size_t W = img.width();
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (std::size_t y = 1; y + 1 < H; ++y) {
            for (std::size_t x = 1; x + 1 < W; ++x) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const double w = (dy == 0 && dx == 0) ? 5.0 : 1.0;
                        acc += w * img.at(c, y + dy, x + dx);
                    }
                }
                const double smooth = acc / 13.0;
                out.at(c, y, x) = clamp01(factor * img.at(c, y, x) + (1.0 - factor) * smooth);
            }
        }
    }
    return out;
}

Image roll(const Image& img, long dy, long dx) {
    const auto H = static_cast<long>(img.height());
    const auto W = static_cast<long>(img.width());
    const long sy = ((dy % H) + H) % H;
    const long sx = ((dx % W) + W) % W;
    Image out = img;
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (long y = 0; y < H; ++y) {
            for (long x = 0; x < W; ++x) {
                out.at(c, static_cast<std::size_t>((y + sy) % H), static_cast<std::size_t>((x + sx) % W)) =
                    img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
            }
        }
    }
    return out;
}

double luma(const Image& img, std::size_t y, std::size_t x) {
    const float r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
    if (r == g && g == b) return r;  // keeps the achromatic axis fixed
    return kLumaR * r + kLumaG * g + kLumaB * b;
}

Image grayscale(const Image& img) {
    require_rgb(img, TransformKind::Grayscale);
    Image out = img;
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            const float v = clamp01(luma(img, y, x));
            for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = v;
        }
    }
    return out;
}

Image scale_values(const Image& img, double factor) {
    Image out = img;
    for (float& v : out.pixels.storage()) v = clamp01(factor * v);
    return out;
}

Image contrast(const Image& img, double factor) {
    double mean = 0.0;
    if (img.channels() == 3) {
        for (std::size_t y = 0; y < img.height(); ++y) {
            for (std::size_t x = 0; x < img.width(); ++x) mean += luma(img, y, x);
        }
        mean /= static_cast<double>(img.height() * img.width());
    } else {
        for (float v : img.pixels.storage()) mean += v;
        mean /= static_cast<double>(img.pixels.size());
    }
    Image out = img;
    for (float& v : out.pixels.storage()) v = clamp01(factor * v + (1.0 - factor) * mean);
    return out;
}

Image saturation(const Image& img, double factor) {
    require_rgb(img, TransformKind::Saturation);
    Image out = img;
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            const double g = luma(img, y, x);
            for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = clamp01(factor * img.at(c, y, x) + (1.0 - factor) * g);
        }
    }
    return out;
}

Image hue_shift(const Image& img, double shift) {
    require_rgb(img, TransformKind::Hue);
    Image hsv = rgb_to_hsv(img);
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            double h = hsv.at(0, y, x) + shift;
            h -= std::floor(h);
            hsv.at(0, y, x) = static_cast<float>(h >= 1.0 ? 0.0 : h);
        }
    }
    Image out = hsv_to_rgb(hsv);
    clamp_inplace(out);
    return out;
}

Image hflip(const Image& img) {
    Image out = img;
    const std::size_t W = img.width();
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (std::size_t y = 0; y < img.height(); ++y) {
            for (std::size_t x = 0; x < W; ++x) out.at(c, y, x) = img.at(c, y, W - 1 - x);
        }
    }
    return out;
}

double bilinear(const Image& img, std::size_t c, double py, double px) {
    const auto H = static_cast<std::ptrdiff_t>(img.height());
    const auto W = static_cast<std::ptrdiff_t>(img.width());
    const double fy = std::floor(py), fx = std::floor(px);
    const double ty = py - fy, tx = px - fx;
    const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
    auto sample = [&](std::ptrdiff_t y, std::ptrdiff_t x) -> double {
        return img.at(c, static_cast<std::size_t>(reflect_index(y, H)), static_cast<std::size_t>(reflect_index(x, W)));
    };
    const double top = (1 - tx) * sample(y0, x0) + tx * sample(y0, x0 + 1);
    const double bottom = (1 - tx) * sample(y0 + 1, x0) + tx * sample(y0 + 1, x0 + 1);
    return (1 - ty) * top + ty * bottom;
}

// Rotation, centered crop and resize back are folded into one resampling.
Image rotate_crop(const Image& img, double angle_deg) {
    const double s = rotate_crop_scale(img.width(), img.height(), angle_deg);
    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (static_cast<double>(img.height()) - 1) / 2;
    const double cx = (static_cast<double>(img.width()) - 1) / 2;
    Image out = img;
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            const double qy = s * (static_cast<double>(y) - cy);
            const double qx = s * (static_cast<double>(x) - cx);
            const double px = cx + cs * qx + sn * qy;
            const double py = cy - sn * qx + cs * qy;
            for (std::size_t c = 0; c < img.channels(); ++c) out.at(c, y, x) = clamp01(bilinear(img, c, py, px));
        }
    }
    return out;
}

Image elliptic_blur(const Image& img, double ecx, double ecy, double a, double b, double sigma) {
    const Image blurred = gaussian_blur(img, sigma, Boundary::Reflect);
    Image out = img;
    const auto W = static_cast<double>(img.width());
    const auto H = static_cast<double>(img.height());
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            const double u = ((static_cast<double>(x) + 0.5) / W - ecx) / a;
            const double v = ((static_cast<double>(y) + 0.5) / H - ecy) / b;
            if (u * u + v * v <= 1.0) {
                for (std::size_t c = 0; c < img.channels(); ++c) out.at(c, y, x) = blurred.at(c, y, x);
            }
        }
    }
    return out;
}

}  // namespace

// ---- public API -------------------------------------------------------------------

std::string to_string(TransformKind kind) { return info(kind).name; }

TransformKind transform_kind_from_string(const std::string& name) {
    for (const auto& k : kind_table()) {
        if (name == k.name) return k.kind;
    }
    throw DomainError("unknown transform '" + name + "'");
}

std::vector<TransformKind> all_transform_kinds() {
    std::vector<TransformKind> out;
    for (const auto& k : kind_table()) out.push_back(k.kind);
    return out;
}

std::vector<std::string> param_names(TransformKind kind) { return info(kind).params; }

ParamMap identity_params(TransformKind kind) {
    switch (kind) {
        case TransformKind::Erase: return {{"cx", 0.5}, {"cy", 0.5}, {"w", 0.0}, {"h", 0.0}};
        case TransformKind::Sharpness: return {{"apply", 0.0}, {"factor", 1.5}};
        case TransformKind::Rolling: return {{"dy", 0.0}, {"dx", 0.0}};
        case TransformKind::Grayscale: return {{"apply", 0.0}};
        case TransformKind::GaussianBlur: return {{"sigma", 0.0}};
        case TransformKind::Brightness: return {{"factor", 1.0}};
        case TransformKind::Contrast: return {{"factor", 1.0}};
        case TransformKind::Saturation: return {{"factor", 1.0}};
        case TransformKind::Hue: return {{"shift", 0.0}};
        case TransformKind::HFlip: return {{"apply", 0.0}};
        case TransformKind::RotateCrop: return {{"angle", 0.0}};
        case TransformKind::EllipticBlur: return {{"cx", 0.5}, {"cy", 0.5}, {"a", 0.0}, {"b", 0.0}, {"sigma", 0.0}};
    }
    throw DomainError("unknown transform kind");
}

TransformSpec identity_spec(TransformKind kind) { return {kind, identity_params(kind)}; }

Image apply_transform(const Image& img, const TransformSpec& spec) {
    validate(spec);
    const auto p = [&](const char* n) { return spec.params.at(n); };
    switch (spec.kind) {
        case TransformKind::Erase:
            if (p("w") == 0.0 || p("h") == 0.0) return img;
            return erase(img, p("cx"), p("cy"), p("w"), p("h"));
        case TransformKind::Sharpness:
            if (p("apply") == 0.0 || p("factor") == 1.0) return img;
            return sharpness(img, p("factor"));
        case TransformKind::Rolling:
            return roll(img, static_cast<long>(p("dy")), static_cast<long>(p("dx")));
        case TransformKind::Grayscale:
            if (p("apply") == 0.0) return img;
            return grayscale(img);
        case TransformKind::GaussianBlur:
            if (p("sigma") == 0.0) return img;
            return gaussian_blur(img, p("sigma"), Boundary::Reflect);
        case TransformKind::Brightness:
            if (p("factor") == 1.0) return img;
            return scale_values(img, p("factor"));
        case TransformKind::Contrast:
            if (p("factor") == 1.0) return img;
            return contrast(img, p("factor"));
        case TransformKind::Saturation:
            if (p("factor") == 1.0) return img;
            return saturation(img, p("factor"));
        case TransformKind::Hue:
            if (p("shift") == 0.0) return img;
            return hue_shift(img, p("shift"));
        case TransformKind::HFlip:
            if (p("apply") == 0.0) return img;
            return hflip(img);
        case TransformKind::RotateCrop:
            if (p("angle") == 0.0) return img;
            return rotate_crop(img, p("angle"));
        case TransformKind::EllipticBlur:
            if (p("a") == 0.0 || p("b") == 0.0 || p("sigma") == 0.0) return img;
            return elliptic_blur(img, p("cx"), p("cy"), p("a"), p("b"), p("sigma"));
    }
    throw DomainError("unknown transform kind");
}

Image compose_ordered(const Image& img, std::span<const TransformSpec> specs, std::span<const std::size_t> order) {
    if (order.size() != specs.size()) {
        throw ArityError("order has " + std::to_string(order.size()) + " entries for " + std::to_string(specs.size()) +
                         " transforms");
    }
    std::vector<char> seen(specs.size(), 0);
    for (std::size_t i : order) {
        if (i >= specs.size() || seen[i]) throw ArityError("order is not a permutation of the transform indices");
        seen[i] = 1;
    }
    Image out = img;
    for (std::size_t i : order) out = apply_transform(out, specs[i]);
    return out;
}

Image rgb_to_hsv(const Image& img) {
    if (img.channels() != 3) throw ShapeError("rgb_to_hsv needs 3 channels");
    Image out = img;
    out.semantics = ChannelSemantics::HSV;
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            const double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
            const double mx = std::max({r, g, b});
            const double mn = std::min({r, g, b});
            const double chroma = mx - mn;
            double h = 0.0;
            if (chroma > 0.0) {
                if (mx == r) {
                    h = std::fmod((g - b) / chroma, 6.0);
                    if (h < 0) h += 6.0;
                } else if (mx == g) {
                    h = (b - r) / chroma + 2.0;
                } else {
                    h = (r - g) / chroma + 4.0;
                }
                h /= 6.0;
            }
            out.at(0, y, x) = static_cast<float>(h >= 1.0 ? 0.0 : h);
            out.at(1, y, x) = static_cast<float>(mx > 0.0 ? chroma / mx : 0.0);
            out.at(2, y, x) = static_cast<float>(mx);
        }
    }
    return out;
}

Image hsv_to_rgb(const Image& img) {
    if (img.channels() != 3) throw ShapeError("hsv_to_rgb needs 3 channels");
    Image out = img;
    out.semantics = ChannelSemantics::RGB;
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            const double h = img.at(0, y, x), s = img.at(1, y, x), v = img.at(2, y, x);
            const double h6 = (h - std::floor(h)) * 6.0;
            const int sector = std::min(static_cast<int>(h6), 5);
            const double f = h6 - sector;
            const double p = v * (1 - s);
            const double q = v * (1 - s * f);
            const double t = v * (1 - s * (1 - f));
            double r, g, b;
            switch (sector) {
                case 0: r = v, g = t, b = p; break;
                case 1: r = q, g = v, b = p; break;
                case 2: r = p, g = v, b = t; break;
                case 3: r = p, g = q, b = v; break;
                case 4: r = t, g = p, b = v; break;
                default: r = v, g = p, b = q; break;
            }
            out.at(0, y, x) = static_cast<float>(r);
            out.at(1, y, x) = static_cast<float>(g);
            out.at(2, y, x) = static_cast<float>(b);
        }
    }
    return out;
}

Image channel_repeat(const Image& img, std::size_t channel, std::size_t out_channels) {
    if (channel >= img.channels()) {
        throw DomainError("channel " + std::to_string(channel) + " out of range for a " +
                          std::to_string(img.channels()) + "-channel image");
    }
    if (out_channels == 0) throw DomainError("channel_repeat needs out_channels >= 1");
    Image out(out_channels, img.height(), img.width());
    out.semantics = ChannelSemantics::ReplicatedSingle;
    const std::size_t plane = img.height() * img.width();
    const auto src = img.pixels.data().subspan(channel * plane, plane);
    for (std::size_t c = 0; c < out_channels; ++c) {
        std::copy(src.begin(), src.end(), out.pixels.storage().begin() + static_cast<std::ptrdiff_t>(c * plane));
    }
    return out;
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw DomainError("gaussian_kernel needs sigma > 0");
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

Image gaussian_blur(const Image& img, double sigma, Boundary boundary) {
    const auto k = gaussian_kernel(sigma);
    const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
    const auto H = static_cast<std::ptrdiff_t>(img.height());
    const auto W = static_cast<std::ptrdiff_t>(img.width());
    auto wrap = [&](std::ptrdiff_t i, std::ptrdiff_t n) {
        return boundary == Boundary::Reflect ? reflect_index(i, n) : ((i % n) + n) % n;
    };
    Image out = img;
    std::vector<double> tmp(static_cast<std::size_t>(H * W));
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (std::ptrdiff_t y = 0; y < H; ++y) {
            for (std::ptrdiff_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                    acc += k[static_cast<std::size_t>(t + radius)] *
                           img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(wrap(x + t, W)));
                }
                tmp[static_cast<std::size_t>(y * W + x)] = acc;
            }
        }
        for (std::ptrdiff_t y = 0; y < H; ++y) {
            for (std::ptrdiff_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                    acc += k[static_cast<std::size_t>(t + radius)] * tmp[static_cast<std::size_t>(wrap(y + t, H) * W + x)];
                }
                out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = clamp01(acc);
            }
        }
    }
    return out;
}

double rotate_crop_scale(std::size_t width, std::size_t height, double angle_deg) {
    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double c = std::abs(std::cos(rad)), s = std::abs(std::sin(rad));
    const auto W = static_cast<double>(width), H = static_cast<double>(height);
    return std::min(W / (W * c + H * s), H / (W * s + H * c));
}

Image area_resize(const Image& img, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ShapeError("area_resize needs a positive target size");
    if (height == img.height() && width == img.width()) return img;
    Image out(img.channels(), height, width);
    out.semantics = img.semantics;
    const double sy = static_cast<double>(img.height()) / static_cast<double>(height);
    const double sx = static_cast<double>(img.width()) / static_cast<double>(width);
    // overlap weights of source cells with each target cell, per axis
    auto weights = [](std::size_t n_out, std::size_t n_in, double scale) {
        std::vector<std::vector<std::pair<std::size_t, double>>> w(n_out);
        for (std::size_t o = 0; o < n_out; ++o) {
            const double lo = static_cast<double>(o) * scale, hi = lo + scale;
            for (auto i = static_cast<std::size_t>(std::floor(lo)); i < n_in && static_cast<double>(i) < hi; ++i) {
                const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
                if (overlap > 0) w[o].emplace_back(i, overlap / scale);
            }
        }
        return w;
    };
    const auto wy = weights(height, img.height(), sy);
    const auto wx = weights(width, img.width(), sx);
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                double acc = 0.0;
                for (const auto& [iy, fy] : wy[y]) {
                    for (const auto& [ix, fx] : wx[x]) acc += fy * fx * img.at(c, iy, ix);
                }
                out.at(c, y, x) = clamp01(acc);
            }
        }
    }
    return out;
}

}  // namespace augsens
