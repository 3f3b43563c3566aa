#pragma once

#include <filesystem>
#include <string>

#include "zoomiq/image.hpp"

namespace zoomiq::img {

// 8-bit RGB PNG codec. Grayscale and palette images expand to RGB, 16-bit
// depth narrows to 8, alpha is dropped. Failures raise DataError.
ImageU8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageU8& image);

ImageF32 load_image_f32(const std::filesystem::path& path);
void save_image_f32(const std::filesystem::path& path, const ImageF32& image);

} // namespace zoomiq::img
