#include "augsens/aswt.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace augsens::aswt {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le(out, bits);
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le(out, bits);
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    bool at_end() const { return pos_ == bytes_.size(); }

    template <typename T>
    T get() {
        need(sizeof(T));
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return value;
    }

    std::string get_string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("ASWT: truncated container");
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void Archive::add(const std::string& name, const Tensor& tensor) {
    if (contains(name)) throw FormatError("ASWT: duplicate tensor name '" + name + "'");
    Record r;
    r.name = name;
    r.shape = tensor.shape();
    r.dtype = DType::F32;
    r.f32 = tensor.storage();
    records_.push_back(std::move(r));
}

void Archive::add_f64(const std::string& name, Shape shape, std::vector<double> values) {
    if (contains(name)) throw FormatError("ASWT: duplicate tensor name '" + name + "'");
    if (shape_numel(shape) != values.size()) throw ShapeError("ASWT: value count does not match shape for " + name);
    Record r;
    r.name = name;
    r.shape = std::move(shape);
    r.dtype = DType::F64;
    r.f64 = std::move(values);
    records_.push_back(std::move(r));
}

bool Archive::contains(const std::string& name) const {
    return std::any_of(records_.begin(), records_.end(), [&](const Record& r) { return r.name == name; });
}

const Record& Archive::record(const std::string& name) const {
    for (const auto& r : records_) {
        if (r.name == name) return r;
    }
    throw FormatError("ASWT: no tensor named '" + name + "'");
}

std::vector<std::string> Archive::names() const {
    std::vector<std::string> out;
    for (const auto& r : records_) out.push_back(r.name);
    return out;
}

Tensor Archive::tensor(const std::string& name) const {
    const Record& r = record(name);
    if (r.dtype == DType::F32) return Tensor(r.shape, r.f32);
    std::vector<float> narrowed(r.f64.begin(), r.f64.end());
    return Tensor(r.shape, std::move(narrowed));
}

std::vector<double> Archive::values_f64(const std::string& name) const {
    const Record& r = record(name);
    if (r.dtype == DType::F64) return r.f64;
    return std::vector<double>(r.f32.begin(), r.f32.end());
}

std::vector<std::uint8_t> Archive::serialize() const {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le(out, kVersion);
    for (const auto& r : records_) {
        if (r.name.size() > 0xFFFF) throw FormatError("ASWT: tensor name too long");
        if (r.shape.size() > 0xFF) throw FormatError("ASWT: rank too large");
        put_le(out, static_cast<std::uint16_t>(r.name.size()));
        out.insert(out.end(), r.name.begin(), r.name.end());
        out.push_back(static_cast<std::uint8_t>(r.dtype));
        out.push_back(static_cast<std::uint8_t>(r.shape.size()));
        for (std::size_t d : r.shape) {
            if (d > 0xFFFFFFFFu) throw FormatError("ASWT: dimension too large");
            put_le(out, static_cast<std::uint32_t>(d));
        }
        if (r.dtype == DType::F32) {
            for (float v : r.f32) put_f32(out, v);
        } else {
            for (double v : r.f64) put_f64(out, v);
        }
    }
    return out;
}

Archive Archive::parse(const std::vector<std::uint8_t>& bytes) {
    Reader in(bytes);
    const std::string magic = in.get_string(4);
    if (magic != std::string(kMagic, 4)) throw FormatError("ASWT: bad magic");
    const auto version = in.get<std::uint16_t>();
    if (version != kVersion) throw FormatError("ASWT: unsupported version " + std::to_string(version));
    Archive archive;
    while (!in.at_end()) {
        Record r;
        const auto name_len = in.get<std::uint16_t>();
        r.name = in.get_string(name_len);
        const auto dtype = in.get<std::uint8_t>();
        if (dtype > 1) throw FormatError("ASWT: unknown dtype code " + std::to_string(dtype) + " for " + r.name);
        r.dtype = static_cast<DType>(dtype);
        const auto rank = in.get<std::uint8_t>();
        for (std::uint8_t i = 0; i < rank; ++i) r.shape.push_back(in.get<std::uint32_t>());
        const std::size_t n = shape_numel(r.shape);
        if (r.dtype == DType::F32) {
            in.need(n * 4);
            r.f32.resize(n);
            for (auto& v : r.f32) {
                const auto bits = in.get<std::uint32_t>();
                std::memcpy(&v, &bits, sizeof v);
            }
        } else {
            in.need(n * 8);
            r.f64.resize(n);
            for (auto& v : r.f64) {
                const auto bits = in.get<std::uint64_t>();
                std::memcpy(&v, &bits, sizeof v);
            }
        }
        if (archive.contains(r.name)) throw FormatError("ASWT: duplicate tensor name '" + r.name + "'");
        archive.records_.push_back(std::move(r));
    }
    return archive;
}

void Archive::write(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

Archive Archive::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(bytes);
}

}  // namespace augsens::aswt
