#include "oadg/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <cmath>
#include <csetjmp>
#include <cstdlib>
#include <string>

#include "oadg/error.hpp"

namespace oadg {

std::uint8_t to_byte(double v) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

namespace {

void write_png(const std::filesystem::path& path, int width, int height, png_uint_32 format,
               const std::vector<std::uint8_t>& bytes) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = format;
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw Error(ErrorCode::IoError, "cannot write " + path.string() + ": " + msg);
    }
}

}  // namespace

void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(image.size());
    const auto src = image.data();
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(src[i]);
    write_png(path, image.width(), image.height(), PNG_FORMAT_RGB, bytes);
}

void save_gray(const GrayImage& image, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(image.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image.values[i]);
    write_png(path, image.width, image.height, PNG_FORMAT_GRAY, bytes);
}

ImageBuffer load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::MissingFile, path.string());
    }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw Error(ErrorCode::IoError, "cannot read " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw Error(ErrorCode::IoError, "cannot decode " + path.string() + ": " + msg);
    }
    std::vector<double> data(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / 255.0;
    return ImageBuffer(static_cast<int>(img.width), static_cast<int>(img.height), std::move(data));
}

namespace {

struct JpegErrorManager {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

// Both helpers keep every C++ object outside the setjmp frame.
bool jpeg_encode(const std::uint8_t* pixels, int width, int height, int quality, unsigned char** out,
                 unsigned long* out_size) {
    jpeg_compress_struct cinfo{};
    JpegErrorManager jerr{};
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, out, out_size);
    cinfo.image_width = static_cast<JDIMENSION>(width);
    cinfo.image_height = static_cast<JDIMENSION>(height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<std::uint8_t*>(pixels) + static_cast<std::size_t>(cinfo.next_scanline) * width * 3;
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return true;
}

bool jpeg_decode(const unsigned char* encoded, unsigned long size, int width, int height, std::uint8_t* pixels) {
    jpeg_decompress_struct dinfo{};
    JpegErrorManager jerr{};
    dinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&dinfo);
        return false;
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, encoded, size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dinfo);
    if (dinfo.output_width != static_cast<JDIMENSION>(width) || dinfo.output_height != static_cast<JDIMENSION>(height) ||
        dinfo.output_components != 3) {
        jpeg_destroy_decompress(&dinfo);
        return false;
    }
    while (dinfo.output_scanline < dinfo.output_height) {
        JSAMPROW ptr = pixels + static_cast<std::size_t>(dinfo.output_scanline) * width * 3;
        jpeg_read_scanlines(&dinfo, &ptr, 1);
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
    return true;
}

}  // namespace

ImageBuffer jpeg_round_trip(const ImageBuffer& image, int quality) {
    const int width = image.width();
    const int height = image.height();
    std::vector<std::uint8_t> pixels(image.size());
    const auto src = image.data();
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(src[i]);

    unsigned char* encoded = nullptr;
    unsigned long encoded_size = 0;
    if (!jpeg_encode(pixels.data(), width, height, quality, &encoded, &encoded_size)) {
        std::free(encoded);
        throw Error(ErrorCode::IoError, "jpeg encode failed");
    }
    const bool decoded = jpeg_decode(encoded, encoded_size, width, height, pixels.data());
    std::free(encoded);
    if (!decoded) throw Error(ErrorCode::IoError, "jpeg decode failed");

    std::vector<double> data(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) data[i] = pixels[i] / 255.0;
    return ImageBuffer(width, height, std::move(data));
}

}  // namespace oadg
