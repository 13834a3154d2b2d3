#pragma once

#include <filesystem>
#include <vector>

#include "addmark/tensor.hpp"

namespace addmark {

// 8-bit PNG and binary PPM (P6) hold byte-range pixels. Readers return the
// image in the requested range (unit divides by 255); writers clamp to the
// image's declared range and round to 8 bits.
ImageTensor read_png(const std::filesystem::path& path, ValueRange target = ValueRange::unit);
void write_png(const std::filesystem::path& path, const ImageTensor& img);

ImageTensor read_ppm(const std::filesystem::path& path, ValueRange target = ValueRange::unit);
void write_ppm(const std::filesystem::path& path, const ImageTensor& img);

// Raw tensor: "ADDT", u32 C, u32 H, u32 W, u8 range, then C*H*W f32 (all LE).
ImageTensor read_raw_tensor(const std::filesystem::path& path);
void write_raw_tensor(const std::filesystem::path& path, const ImageTensor& img);

/// Dispatches on extension: .png, .ppm, .addt.
ImageTensor read_image(const std::filesystem::path& path, ValueRange target = ValueRange::unit);
void write_image(const std::filesystem::path& path, const ImageTensor& img);

bool is_image_file(const std::filesystem::path& path);

/// Sorted list of image files directly inside dir. Throws if dir is missing.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace addmark
