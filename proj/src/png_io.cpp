#include "htr/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

namespace htr::png {

namespace {

struct Sink {
    std::FILE* file = nullptr;
    std::vector<std::uint8_t>* buffer = nullptr;
};

void write_to_buffer(png_structp p, png_bytep data, png_size_t len) {
    auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
    buf->insert(buf->end(), data, data + len);
}

void flush_noop(png_structp) {}

// Only trivially destructible state lives in this frame: libpng reports
// errors by longjmp back to the setjmp below.
bool write_rows(const Sink& sink, int width, int height, int bit_depth, png_bytepp rows) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    if (sink.file) {
        png_init_io(png, sink.file);
    } else {
        png_set_write_fn(png, sink.buffer, write_to_buffer, flush_noop);
    }
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

struct PackedRows {
    std::vector<std::vector<std::uint8_t>> storage;
    std::vector<png_bytep> pointers;
};

PackedRows pack_binary(const BinaryImage& img) {
    PackedRows r;
    const auto stride = static_cast<std::size_t>((img.width() + 7) / 8);
    r.storage.assign(static_cast<std::size_t>(img.height()), std::vector<std::uint8_t>(stride, 0));
    for (int y = 0; y < img.height(); ++y) {
        auto& row = r.storage[static_cast<std::size_t>(y)];
        for (int x = 0; x < img.width(); ++x) {
            // 1 = white in a 1-bit grayscale PNG
            if (!img.at(x, y)) row[static_cast<std::size_t>(x / 8)] |= static_cast<std::uint8_t>(0x80 >> (x % 8));
        }
    }
    for (auto& row : r.storage) r.pointers.push_back(row.data());
    return r;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

std::unique_ptr<std::FILE, FileCloser> open_for_write(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw Error("cannot write " + path.string());
    return f;
}

}  // namespace

GrayImage read_gray(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error("cannot read PNG " + path.string() + ": " + msg);
    }
    image.format = PNG_FORMAT_GRAY;
    const int width = static_cast<int>(image.width);
    const int height = static_cast<int>(image.height);
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    png_color background{255, 255, 255};
    if (!png_image_finish_read(&image, &background, pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error("cannot decode PNG " + path.string() + ": " + msg);
    }
    return GrayImage(width, height, std::move(pixels));
}

BinaryImage read_binary(const std::filesystem::path& path) {
    const GrayImage g = read_gray(path);
    BinaryImage out(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < g.width(); ++x)
            if (g.at(x, y) < 128) out.set(x, y);
    return out;
}

void write_binary(const std::filesystem::path& path, const BinaryImage& img) {
    auto file = open_for_write(path);
    auto rows = pack_binary(img);
    if (!write_rows(Sink{file.get(), nullptr}, img.width(), img.height(), 1, rows.pointers.data())) {
        throw Error("failed to encode PNG " + path.string());
    }
}

std::vector<std::uint8_t> encode_binary(const BinaryImage& img) {
    std::vector<std::uint8_t> out;
    auto rows = pack_binary(img);
    if (!write_rows(Sink{nullptr, &out}, img.width(), img.height(), 1, rows.pointers.data())) {
        throw Error("failed to encode PNG");
    }
    return out;
}

void write_gray(const std::filesystem::path& path, const GrayImage& img) {
    auto file = open_for_write(path);
    std::vector<png_bytep> rows;
    auto& px = const_cast<std::vector<std::uint8_t>&>(img.pixels());
    for (int y = 0; y < img.height(); ++y) rows.push_back(px.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()));
    if (!write_rows(Sink{file.get(), nullptr}, img.width(), img.height(), 8, rows.data())) {
        throw Error("failed to encode PNG " + path.string());
    }
}

}  // namespace htr::png
