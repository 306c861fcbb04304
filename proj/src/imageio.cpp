#include "augsens/imageio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <vector>

#include "augsens/error.hpp"

namespace augsens::imageio {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

// Header token reader for netpbm: skips whitespace and # comments.
class PnmHeader {
public:
    explicit PnmHeader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    std::string token() {
        skip();
        std::string t;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) t.push_back(static_cast<char>(bytes_[pos_++]));
        if (t.empty()) throw FormatError("PNM: truncated header");
        return t;
    }

    unsigned long number() {
        const std::string t = token();
        if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            throw FormatError("PNM: expected a number, got '" + t + "'");
        }
        return std::stoul(t);
    }

    // exactly one whitespace byte separates the header from the raster
    std::size_t raster_start() {
        if (pos_ >= bytes_.size()) throw FormatError("PNM: truncated header");
        return pos_ + 1;
    }

private:
    void skip() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t quantize(float v, std::uint32_t maxval) {
    return static_cast<std::uint32_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * static_cast<float>(maxval)));
}

std::string lower_ext(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    PnmHeader hdr(bytes);
    const std::string magic = hdr.token();
    std::size_t channels;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw FormatError("PNM: unsupported magic '" + magic + "' in " + path.string());
    }
    const auto width = hdr.number();
    const auto height = hdr.number();
    const auto maxval = hdr.number();
    if (width == 0 || height == 0) throw FormatError("PNM: zero-sized image");
    if (maxval == 0 || maxval > 65535) throw FormatError("PNM: maxval out of range");
    const std::size_t start = hdr.raster_start();
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    const std::size_t need = width * height * channels * sample_bytes;
    if (bytes.size() < start + need) throw FormatError("PNM: truncated raster in " + path.string());

    Image img(channels, height, width);
    img.semantics = channels == 3 ? ChannelSemantics::RGB : ChannelSemantics::ReplicatedSingle;
    std::size_t pos = start;
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                std::uint32_t v = bytes[pos++];
                if (sample_bytes == 2) v = (v << 8) | bytes[pos++];
                img.at(c, y, x) = static_cast<float>(v) / static_cast<float>(maxval);
            }
        }
    }
    return img;
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
    if (img.channels() != 1 && img.channels() != 3) throw ShapeError("PNM needs 1 or 3 channels");
    const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width()) +
                               " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            for (std::size_t c = 0; c < img.channels(); ++c) out.push_back(static_cast<std::uint8_t>(quantize(img.at(c, y, x), 255)));
        }
    }
    dump(path, out);
}

Image read_farbfeld(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 16 || std::string(bytes.begin(), bytes.begin() + 8) != "farbfeld") {
        throw FormatError("farbfeld: bad magic in " + path.string());
    }
    const std::size_t width = be32(bytes, 8);
    const std::size_t height = be32(bytes, 12);
    if (width == 0 || height == 0) throw FormatError("farbfeld: zero-sized image");
    if (bytes.size() < 16 + width * height * 8) throw FormatError("farbfeld: truncated raster in " + path.string());
    Image img(3, height, width);
    std::size_t pos = 16;
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < 4; ++c) {
                const std::uint32_t v = (std::uint32_t{bytes[pos]} << 8) | bytes[pos + 1];
                pos += 2;
                if (c < 3) img.at(c, y, x) = static_cast<float>(v) / 65535.0f;
            }
        }
    }
    return img;
}

void write_farbfeld(const std::filesystem::path& path, const Image& img) {
    if (img.channels() != 1 && img.channels() != 3) throw ShapeError("farbfeld needs 1 or 3 channels");
    const std::string magic = "farbfeld";
    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    put_be(out, static_cast<std::uint32_t>(img.width()), 4);
    put_be(out, static_cast<std::uint32_t>(img.height()), 4);
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                put_be(out, quantize(img.at(img.channels() == 1 ? 0 : c, y, x), 65535), 2);
            }
            put_be(out, 65535, 2);
        }
    }
    dump(path, out);
}

Image read_image(const std::filesystem::path& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
    if (ext == ".ff" || ext == ".farbfeld") return read_farbfeld(path);
    throw FormatError("unsupported image extension '" + ext + "'");
}

void write_image(const std::filesystem::path& path, const Image& img) {
    const std::string ext = lower_ext(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return write_pnm(path, img);
    if (ext == ".ff" || ext == ".farbfeld") return write_farbfeld(path, img);
    throw FormatError("unsupported image extension '" + ext + "'");
}

}  // namespace augsens::imageio
