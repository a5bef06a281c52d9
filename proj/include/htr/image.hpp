#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace htr {

/// Raised on precondition violations and malformed inputs across the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Pixel {
    int x = 0;
    int y = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
    friend auto operator<=>(const Pixel& a, const Pixel& b) {
        if (a.y != b.y) return a.y <=> b.y;
        return a.x <=> b.x;
    }
};

/// Row-major 8-bit intensities; 0 is black.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, std::uint8_t fill = 255);
    GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

    int width() const { return width_; }
    int height() const { return height_; }
    std::uint8_t at(int x, int y) const { return pixels_[index(x, y)]; }
    void set(int x, int y, std::uint8_t v) { pixels_[index(x, y)] = v; }
    const std::vector<std::uint8_t>& pixels() const { return pixels_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Row-major ink flags (1 = ink).
class BinaryImage {
public:
    BinaryImage() = default;
    BinaryImage(int width, int height, bool fill = false);

    /// Parses rows of '#' (ink) and '.' (background); all rows must have equal length.
    static BinaryImage from_ascii(const std::vector<std::string>& rows);
    static BinaryImage from_pixels(const std::vector<Pixel>& pixels);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
    /// Out-of-range coordinates read as background.
    bool get(int x, int y) const {
        return x >= 0 && y >= 0 && x < width_ && y < height_ && bits_[index(x, y)] != 0;
    }
    void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }

    std::size_t ink_count() const;
    std::vector<Pixel> ink_pixels() const;
    const std::vector<std::uint8_t>& bits() const { return bits_; }

    std::vector<std::string> to_ascii() const;

    friend bool operator==(const BinaryImage&, const BinaryImage&) = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

struct Box {
    int left = 0;
    int top = 0;
    int right = 0;   // exclusive
    int bottom = 0;  // exclusive
    int width() const { return right - left; }
    int height() const { return bottom - top; }
};

/// Sub-image copy; the box is clipped to the image.
BinaryImage crop(const BinaryImage& img, Box box);

/// Bounding box of ink; throws on an image without ink.
Box ink_bounds(const BinaryImage& img);

/// 8-connected ink components, each listed in row-major scan order; components
/// are ordered by their first pixel in scan order.
std::vector<std::vector<Pixel>> connected_components(const BinaryImage& img);

/// 64-bit FNV-1a over width, height (u32 little-endian) and the rows packed
/// MSB-first, each row padded to a whole byte.
std::uint64_t fnv1a_hash(const BinaryImage& img);

}  // namespace htr
