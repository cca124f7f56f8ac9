#include "obr/png_io.hpp"

#include <png.h>

#include <cstring>

#include "obr/error.hpp"

namespace obr {

namespace {

struct PngImage {
    png_image image;
    PngImage()
    {
        std::memset(&image, 0, sizeof(image));
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&image); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

RasterImage read_png(const std::filesystem::path& path)
{
    PngImage png;
    if (!png_image_begin_read_from_file(&png.image, path.c_str()))
        throw InputError("cannot read PNG " + path.string() + ": " + png.image.message);

    const bool color = (png.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    RasterImage out(static_cast<int>(png.image.width), static_cast<int>(png.image.height), color ? 3 : 1);
    if (!png_image_finish_read(&png.image, nullptr, out.pixels().data(), 0, nullptr))
        throw InputError("cannot decode PNG " + path.string() + ": " + png.image.message);
    return out;
}

void write_png(const std::filesystem::path& path, const RasterImage& image)
{
    PngImage png;
    png.image.width = static_cast<png_uint_32>(image.width());
    png.image.height = static_cast<png_uint_32>(image.height());
    png.image.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png.image, path.c_str(), 0, image.pixels().data(), 0, nullptr))
        throw InputError("cannot write PNG " + path.string() + ": " + png.image.message);
}

}  // namespace obr
