#include "zoomiq/png_io.hpp"

#include <png.h>

#include "zoomiq/errors.hpp"

namespace zoomiq::img {

ImageU8 read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DataError("failed to read PNG '" + path.string() + "': " + msg);
    }
    image.format = PNG_FORMAT_RGB;
    ImageU8 out;
    out.height = int(image.height);
    out.width = int(image.width);
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DataError("failed to decode PNG '" + path.string() + "': " + msg);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const ImageU8& im) {
    if (im.height < 1 || im.width < 1 || im.pixels.size() != std::size_t(3) * im.height * im.width)
        throw ContractViolation("write_png: malformed image");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = png_uint_32(im.width);
    image.height = png_uint_32(im.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, im.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DataError("failed to write PNG '" + path.string() + "': " + msg);
    }
}

ImageF32 load_image_f32(const std::filesystem::path& path) { return to_f32(read_png(path)); }

void save_image_f32(const std::filesystem::path& path, const ImageF32& image) {
    write_png(path, to_u8(image));
}

} // namespace zoomiq::img
