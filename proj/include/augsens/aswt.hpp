#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "augsens/tensor.hpp"

namespace augsens::aswt {

// Container layout (all integers little-endian):
//   "ASWT" | u16 version
//   repeated until EOF:
//     u16 name_length | name (UTF-8) | u8 dtype | u8 rank | u32 dims[rank] | raw data
// dtype 0 is f32, dtype 1 is f64.

inline constexpr char kMagic[4] = {'A', 'S', 'W', 'T'};
inline constexpr std::uint16_t kVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct Record {
    std::string name;
    Shape shape;
    DType dtype = DType::F32;
    std::vector<float> f32;
    std::vector<double> f64;
};

/// Ordered collection of named tensors.
class Archive {
public:
    void add(const std::string& name, const Tensor& tensor);
    void add_f64(const std::string& name, Shape shape, std::vector<double> values);

    bool contains(const std::string& name) const;
    const Record& record(const std::string& name) const;
    const std::vector<Record>& records() const { return records_; }
    std::vector<std::string> names() const;

    /// f32 tensor; f64 records are narrowed.
    Tensor tensor(const std::string& name) const;
    /// f64 values; f32 records are widened.
    std::vector<double> values_f64(const std::string& name) const;

    std::vector<std::uint8_t> serialize() const;
    static Archive parse(const std::vector<std::uint8_t>& bytes);

    void write(const std::filesystem::path& path) const;
    static Archive read(const std::filesystem::path& path);

private:
    std::vector<Record> records_;
};

}  // namespace augsens::aswt
