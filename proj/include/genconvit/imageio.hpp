#pragma once

#include <csetjmp>
#include <cstdio>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "common.hpp"
#include "image.hpp"

namespace gcv::data {

namespace detail {

struct FileHandle {
    std::FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

}  // namespace detail

inline Image read_png(const std::string& path) {
    detail::FileHandle fh(path, "rb");
    if (!fh.f) throw IoError("cannot open image for reading: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: failed to allocate read struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: failed to allocate info struct");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: failed to decode " + path);
    }
    png_init_io(png, fh.f);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    Image img(static_cast<i64>(w), static_cast<i64>(h), 3);
    if (png_get_rowbytes(png, info) != static_cast<size_t>(img.w * 3)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: unexpected row size in " + path);
    }
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.pix.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_png(const std::string& path, const Image& img) {
    if (img.c != 3) throw IoError("write_png: expected 3-channel image");
    detail::FileHandle fh(path, "wb");
    if (!fh.f) throw IoError("cannot open image for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: failed to allocate write struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: failed to allocate info struct");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: failed to encode " + path);
    }
    png_init_io(png, fh.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (i64 y = 0; y < img.h; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(img.pix.data() + static_cast<size_t>(y * img.w * 3));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image read_jpeg(const std::string& path) {
    detail::FileHandle fh(path, "rb");
    if (!fh.f) throw IoError("cannot open image for reading: " + path);

    jpeg_decompress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("jpeg: failed to decode " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fh.f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    Image img(cinfo.output_width, cinfo.output_height, 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pix.data() + static_cast<size_t>(cinfo.output_scanline) * img.w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

inline void write_jpeg(const std::string& path, const Image& img, int quality = 92) {
    if (img.c != 3) throw IoError("write_jpeg: expected 3-channel image");
    detail::FileHandle fh(path, "wb");
    if (!fh.f) throw IoError("cannot open image for writing: " + path);

    jpeg_compress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw IoError("jpeg: failed to encode " + path);
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, fh.f);
    cinfo.image_width = static_cast<JDIMENSION>(img.w);
    cinfo.image_height = static_cast<JDIMENSION>(img.h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(
            img.pix.data() + static_cast<size_t>(cinfo.next_scanline) * img.w * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

// Dispatch on file magic: PNG signature or JPEG SOI marker.
inline Image read_image(const std::string& path) {
    unsigned char magic[2] = {0, 0};
    {
        detail::FileHandle fh(path, "rb");
        if (!fh.f) throw IoError("cannot open image for reading: " + path);
        if (std::fread(magic, 1, 2, fh.f) != 2) throw IoError("image file too short: " + path);
    }
    if (magic[0] == 0x89 && magic[1] == 'P') return read_png(path);
    if (magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg(path);
    throw IoError("unsupported image format: " + path);
}

}  // namespace gcv::data
