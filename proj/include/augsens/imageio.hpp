#pragma once

#include <filesystem>

#include "augsens/augment.hpp"

namespace augsens::imageio {

// Binary netpbm: P5 (gray) and P6 (RGB), maxval up to 65535 (16-bit samples big-endian).
Image read_pnm(const std::filesystem::path& path);
/// Writes P5 for 1-channel and P6 for 3-channel images, 8-bit.
void write_pnm(const std::filesystem::path& path, const Image& img);

// farbfeld: "farbfeld" | u32 BE width | u32 BE height | RGBA u16 BE per pixel.
Image read_farbfeld(const std::filesystem::path& path);
/// Alpha is written as fully opaque; 1-channel images are replicated to RGB.
void write_farbfeld(const std::filesystem::path& path, const Image& img);

/// Dispatch on extension: .ppm/.pgm/.pnm or .ff/.farbfeld.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);

}  // namespace augsens::imageio
