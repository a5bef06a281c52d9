#include "htr/image.hpp"

#include <algorithm>
#include <limits>

namespace htr {

namespace {

void check_dims(int width, int height) {
    if (width < 1 || height < 1) {
        throw Error("image dimensions must be positive, got " + std::to_string(width) + "x" +
                    std::to_string(height));
    }
}

}  // namespace

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
    check_dims(width, height);
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    check_dims(width, height);
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw Error("pixel count does not match dimensions");
    }
}

BinaryImage::BinaryImage(int width, int height, bool fill) : width_(width), height_(height) {
    check_dims(width, height);
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
}

BinaryImage BinaryImage::from_ascii(const std::vector<std::string>& rows) {
    if (rows.empty() || rows.front().empty()) throw Error("ascii image is empty");
    BinaryImage img(static_cast<int>(rows.front().size()), static_cast<int>(rows.size()));
    for (int y = 0; y < img.height(); ++y) {
        const auto& row = rows[static_cast<std::size_t>(y)];
        if (static_cast<int>(row.size()) != img.width()) throw Error("ragged ascii image");
        for (int x = 0; x < img.width(); ++x) img.set(x, y, row[static_cast<std::size_t>(x)] == '#');
    }
    return img;
}

BinaryImage BinaryImage::from_pixels(const std::vector<Pixel>& pixels) {
    if (pixels.empty()) throw Error("empty image");
    int minx = std::numeric_limits<int>::max(), miny = minx;
    int maxx = std::numeric_limits<int>::min(), maxy = maxx;
    for (const auto& p : pixels) {
        minx = std::min(minx, p.x);
        miny = std::min(miny, p.y);
        maxx = std::max(maxx, p.x);
        maxy = std::max(maxy, p.y);
    }
    BinaryImage img(maxx - minx + 1, maxy - miny + 1);
    for (const auto& p : pixels) img.set(p.x - minx, p.y - miny);
    return img;
}

std::size_t BinaryImage::ink_count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<Pixel> BinaryImage::ink_pixels() const {
    std::vector<Pixel> out;
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x)
            if (at(x, y)) out.push_back({x, y});
    return out;
}

std::vector<std::string> BinaryImage::to_ascii() const {
    std::vector<std::string> rows;
    for (int y = 0; y < height_; ++y) {
        std::string row;
        for (int x = 0; x < width_; ++x) row += at(x, y) ? '#' : '.';
        rows.push_back(std::move(row));
    }
    return rows;
}

BinaryImage crop(const BinaryImage& img, Box box) {
    box.left = std::max(box.left, 0);
    box.top = std::max(box.top, 0);
    box.right = std::min(box.right, img.width());
    box.bottom = std::min(box.bottom, img.height());
    if (box.width() < 1 || box.height() < 1) throw Error("crop box is empty");
    BinaryImage out(box.width(), box.height());
    for (int y = box.top; y < box.bottom; ++y)
        for (int x = box.left; x < box.right; ++x)
            if (img.at(x, y)) out.set(x - box.left, y - box.top);
    return out;
}

Box ink_bounds(const BinaryImage& img) {
    Box b{img.width(), img.height(), -1, -1};
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (!img.at(x, y)) continue;
            b.left = std::min(b.left, x);
            b.top = std::min(b.top, y);
            b.right = std::max(b.right, x + 1);
            b.bottom = std::max(b.bottom, y + 1);
        }
    }
    if (b.right < 0) throw Error("empty image");
    return b;
}

std::vector<std::vector<Pixel>> connected_components(const BinaryImage& img) {
    std::vector<std::vector<Pixel>> out;
    std::vector<std::uint8_t> seen(img.bits().size(), 0);
    auto idx = [&img](int x, int y) {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(x);
    };
    std::vector<Pixel> stack;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (!img.at(x, y) || seen[idx(x, y)]) continue;
            std::vector<Pixel> comp;
            seen[idx(x, y)] = 1;
            stack.push_back({x, y});
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                comp.push_back(p);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = p.x + dx, ny = p.y + dy;
                        if (!img.get(nx, ny) || seen[idx(nx, ny)]) continue;
                        seen[idx(nx, ny)] = 1;
                        stack.push_back({nx, ny});
                    }
                }
            }
            std::sort(comp.begin(), comp.end());
            out.push_back(std::move(comp));
        }
    }
    return out;
}

std::uint64_t fnv1a_hash(const BinaryImage& img) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint8_t byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    auto feed_u32 = [&feed](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) feed(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    };
    feed_u32(static_cast<std::uint32_t>(img.width()));
    feed_u32(static_cast<std::uint32_t>(img.height()));
    for (int y = 0; y < img.height(); ++y) {
        std::uint8_t byte = 0;
        int nbits = 0;
        for (int x = 0; x < img.width(); ++x) {
            byte = static_cast<std::uint8_t>((byte << 1) | (img.at(x, y) ? 1 : 0));
            if (++nbits == 8) {
                feed(byte);
                byte = 0;
                nbits = 0;
            }
        }
        if (nbits > 0) feed(static_cast<std::uint8_t>(byte << (8 - nbits)));
    }
    return h;
}

}  // namespace htr
