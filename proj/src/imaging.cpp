#include "htr/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace htr::imaging {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr std::array<double, 2> kSubOffsets{-0.25, 0.25};

// Offsets from 0 going outward: 0, -1, +1, -2, +2, ...
std::vector<int> outward_steps(int max_step) {
    std::vector<int> steps{0};
    for (int k = 1; k <= max_step; ++k) {
        steps.push_back(-k);
        steps.push_back(k);
    }
    return steps;
}

template <typename Objective>
double best_angle(int max_step, double step_deg, Objective&& objective) {
    double best = 0.0;
    double best_value = objective(0.0);
    for (int k : outward_steps(max_step)) {
        if (k == 0) continue;
        const double angle = k * step_deg;
        const double value = objective(angle);
        if (value > best_value) {
            best_value = value;
            best = angle;
        }
    }
    return best;
}

void require_ink(const BinaryImage& img, const char* what) {
    if (img.empty() || img.ink_count() == 0) throw Error(std::string(what) + ": empty image");
}

}  // namespace

std::string WordImage::id() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%03d_%03d", line_index, word_index);
    return page_id + buf;
}

int otsu_threshold(const GrayImage& img) {
    std::array<double, 256> hist{};
    for (auto v : img.pixels()) hist[v] += 1.0;
    const double total = static_cast<double>(img.pixels().size());
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += i * hist[static_cast<std::size_t>(i)];

    int best_t = 0;
    double best_var = 0.0;
    double w0 = 0.0, sum0 = 0.0;
    // Class 0 holds intensities < t.
    for (int t = 1; t < 256; ++t) {
        w0 += hist[static_cast<std::size_t>(t - 1)];
        sum0 += (t - 1) * hist[static_cast<std::size_t>(t - 1)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double var = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

BinaryImage binarize(const GrayImage& img) {
    const int t = otsu_threshold(img);
    BinaryImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            if (img.at(x, y) < t) out.set(x, y);
    return out;
}

BinaryImage crop_margins(const BinaryImage& img) { return crop(img, ink_bounds(img)); }

BinaryImage remove_specks(const BinaryImage& img, int min_size) {
    BinaryImage out = img;
    for (const auto& comp : connected_components(img)) {
        if (static_cast<int>(comp.size()) >= min_size) continue;
        for (const auto& p : comp) out.set(p.x, p.y, false);
    }
    return out;
}

BinaryImage rotate(const BinaryImage& img, double degrees) {
    const double a = degrees * kDegToRad;
    const double c = std::cos(a), s = std::sin(a);
    const double w = img.width(), h = img.height();
    const int out_w = std::max(1, static_cast<int>(std::ceil(std::abs(w * c) + std::abs(h * s) - 1e-9)));
    const int out_h = std::max(1, static_cast<int>(std::ceil(std::abs(w * s) + std::abs(h * c) - 1e-9)));
    const double cx = w / 2.0, cy = h / 2.0;
    const double ox = out_w / 2.0, oy = out_h / 2.0;

    BinaryImage out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            int hits = 0;
            for (double dy : kSubOffsets) {
                for (double dx : kSubOffsets) {
                    const double px = x + 0.5 + dx - ox;
                    const double py = y + 0.5 + dy - oy;
                    // inverse rotation back into the source frame
                    const double sx = c * px + s * py + cx;
                    const double sy = -s * px + c * py + cy;
                    if (img.get(static_cast<int>(std::floor(sx)), static_cast<int>(std::floor(sy)))) ++hits;
                }
            }
            if (hits * 2 >= static_cast<int>(kSubOffsets.size() * kSubOffsets.size())) out.set(x, y);
        }
    }
    return out;
}

BinaryImage shear(const BinaryImage& img, double degrees) {
    const double t = std::tan(degrees * kDegToRad);
    const double h = img.height();
    const double cy = h / 2.0;
    const int extra = static_cast<int>(std::ceil(std::abs(t) * h / 2.0 - 1e-9));
    const int out_w = img.width() + 2 * extra;

    BinaryImage out(out_w, img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < out_w; ++x) {
            int hits = 0;
            for (double dy : kSubOffsets) {
                for (double dx : kSubOffsets) {
                    const double py = y + 0.5 + dy;
                    const double sx = x + 0.5 + dx - extra - t * (cy - py);
                    if (img.get(static_cast<int>(std::floor(sx)), static_cast<int>(std::floor(py)))) ++hits;
                }
            }
            if (hits * 2 >= static_cast<int>(kSubOffsets.size() * kSubOffsets.size())) out.set(x, y);
        }
    }
    return out;
}

double skew_objective(const BinaryImage& img, double degrees) {
    const double a = degrees * kDegToRad;
    const double c = std::cos(a), s = std::sin(a);
    const double cx = img.width() / 2.0, cy = img.height() / 2.0;
    const double half_diag = std::hypot(cx, cy);
    const int rows = static_cast<int>(std::ceil(2.0 * half_diag)) + 2;
    std::vector<double> profile(static_cast<std::size_t>(rows), 0.0);
    double total = 0.0;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (!img.at(x, y)) continue;
            const double ry = s * (x + 0.5 - cx) + c * (y + 0.5 - cy);
            const int row = static_cast<int>(std::floor(ry + half_diag + 1.0));
            profile[static_cast<std::size_t>(std::clamp(row, 0, rows - 1))] += 1.0;
            total += 1.0;
        }
    }
    double sq = 0.0;
    for (double v : profile) sq += v * v;
    const double mean = total / rows;
    return sq / rows - mean * mean;
}

double slant_objective(const BinaryImage& img, double degrees) {
    const double t = std::tan(degrees * kDegToRad);
    const double cy = img.height() / 2.0;
    const int extra = static_cast<int>(std::ceil(std::abs(t) * img.height() / 2.0)) + 1;
    std::vector<double> cols(static_cast<std::size_t>(img.width() + 2 * extra + 1), 0.0);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (!img.at(x, y)) continue;
            const double sx = x + 0.5 + t * (cy - (y + 0.5)) + extra;
            const int col = std::clamp(static_cast<int>(std::floor(sx)), 0, static_cast<int>(cols.size()) - 1);
            cols[static_cast<std::size_t>(col)] += 1.0;
        }
    }
    double sq = 0.0;
    for (double v : cols) sq += v * v;
    return sq;
}

Corrected deskew(const BinaryImage& img) {
    require_ink(img, "deskew");
    const double angle = best_angle(50, 0.1, [&img](double deg) { return skew_objective(img, deg); });
    const BinaryImage rotated = angle == 0.0 ? img : rotate(img, angle);
    if (rotated.ink_count() == 0) return {crop_margins(img), 0.0};
    return {crop_margins(rotated), angle};
}

Corrected deslant(const BinaryImage& img) {
    require_ink(img, "deslant");
    const double angle = best_angle(30, 1.0, [&img](double deg) { return slant_objective(img, deg); });
    const BinaryImage sheared = angle == 0.0 ? img : shear(img, angle);
    if (sheared.ink_count() == 0) return {crop_margins(img), 0.0};
    return {crop_margins(sheared), angle};
}

std::vector<BinaryImage> split_lines(const BinaryImage& page) {
    std::vector<BinaryImage> lines;
    if (page.empty()) return lines;
    std::vector<int> rows(static_cast<std::size_t>(page.height()), 0);
    for (int y = 0; y < page.height(); ++y)
        for (int x = 0; x < page.width(); ++x) rows[static_cast<std::size_t>(y)] += page.at(x, y) ? 1 : 0;

    int y = 0;
    while (y < page.height()) {
        if (rows[static_cast<std::size_t>(y)] == 0) {
            ++y;
            continue;
        }
        const int top = y;
        while (y < page.height() && rows[static_cast<std::size_t>(y)] > 0) ++y;
        lines.push_back(crop_margins(crop(page, Box{0, top, page.width(), y})));
    }
    return lines;
}

std::vector<WordImage> split_words(const BinaryImage& line, int gap, const std::string& page_id, int line_index) {
    if (gap < 1) throw Error("split_words: gap must be >= 1");
    require_ink(line, "split_words");
    std::vector<int> cols(static_cast<std::size_t>(line.width()), 0);
    for (int y = 0; y < line.height(); ++y)
        for (int x = 0; x < line.width(); ++x) cols[static_cast<std::size_t>(x)] += line.at(x, y) ? 1 : 0;

    // Column ranges [begin, end) separated by white runs of length >= gap.
    std::vector<std::pair<int, int>> pieces;
    int start = 0;
    int x = 0;
    while (x < line.width()) {
        if (cols[static_cast<std::size_t>(x)] > 0) {
            ++x;
            continue;
        }
        const int run_begin = x;
        while (x < line.width() && cols[static_cast<std::size_t>(x)] == 0) ++x;
        if (x - run_begin >= gap) {
            if (run_begin > start) pieces.emplace_back(start, run_begin);
            start = x;
        }
    }
    if (start < line.width()) pieces.emplace_back(start, line.width());

    std::vector<WordImage> words;
    for (const auto& [begin, end] : pieces) {
        const BinaryImage piece = crop(line, Box{begin, 0, end, line.height()});
        if (piece.ink_count() == 0) continue;
        WordImage w;
        w.image = crop_margins(piece);
        w.page_id = page_id;
        w.line_index = line_index;
        w.word_index = static_cast<int>(words.size());
        words.push_back(std::move(w));
    }
    return words;
}

std::vector<WordImage> preprocess_page(const GrayImage& page, const std::string& page_id,
                                       const PreprocessOptions& options) {
    BinaryImage bin = remove_specks(binarize(page), options.min_speck);
    if (bin.ink_count() == 0) return {};
    bin = crop_margins(bin);
    if (options.deskew) bin = deskew(bin).image;

    std::vector<WordImage> words;
    const auto lines = split_lines(bin);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const BinaryImage line = options.deslant ? deslant(lines[i]).image : lines[i];
        auto line_words = split_words(line, options.word_gap, page_id, static_cast<int>(i));
        for (auto& w : line_words) words.push_back(std::move(w));
    }
    return words;
}

}  // namespace htr::imaging
