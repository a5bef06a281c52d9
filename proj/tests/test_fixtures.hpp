#pragma once

#include <random>

#include "htr/image.hpp"

namespace htr::test {

/// Word-like random ink: a few overlapping strokes and blobs. Never empty.
inline BinaryImage random_blob_word(std::mt19937& rng, int width, int height) {
    BinaryImage img(width, height);
    std::uniform_int_distribution<int> count(2, 6);
    std::uniform_int_distribution<int> xs(0, width - 1);
    std::uniform_int_distribution<int> ys(0, height - 1);
    std::uniform_int_distribution<int> radius(0, 2);
    const int strokes = count(rng);
    for (int s = 0; s < strokes; ++s) {
        int x0 = xs(rng), y0 = ys(rng), x1 = xs(rng), y1 = ys(rng);
        const int r = radius(rng);
        const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
        for (int k = 0; k <= steps; ++k) {
            const int cx = x0 + (x1 - x0) * k / steps;
            const int cy = y0 + (y1 - y0) * k / steps;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int x = cx + dx, y = cy + dy;
                    if (x >= 0 && y >= 0 && x < width && y < height) img.set(x, y);
                }
        }
    }
    return img;
}

}  // namespace htr::test

#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "htr/classifier.hpp"
#include "htr/segmentation.hpp"

namespace htr::test {

/// Seven separate rectangles in a 66x18 image. The table classifier accepts
/// exactly six segment groups, giving d, a/i, i, t, d, o on the edges
/// 0-1, 1-3, 3-4, 3-5, 4-7, 5-7; everything else is the non-character class.
struct DatoFixture {
    BinaryImage image;
    std::vector<segmentation::Segment> segments;
    classifier::SymbolAlphabet alphabet = classifier::SymbolAlphabet::default_latin();
    std::unordered_map<std::uint64_t, classifier::ClassDistribution> table;

    classifier::TableClassifier classifier() const {
        return classifier::TableClassifier(alphabet, table,
                                           classifier::ClassDistribution::one_hot(alphabet.size(),
                                                                                  alphabet.nonchar_index()));
    }
};

inline DatoFixture dato_fixture() {
    DatoFixture f;
    f.image = BinaryImage(66, 18);
    const std::vector<std::pair<int, int>> spans{{1, 7}, {9, 15}, {17, 21}, {23, 29}, {31, 35}, {37, 43}, {45, 51}};
    const std::vector<std::pair<int, int>> rows{{4, 14}, {6, 14}, {2, 14}, {5, 14}, {3, 14}, {7, 14}, {1, 14}};
    for (std::size_t k = 0; k < spans.size(); ++k) {
        std::vector<Pixel> mask;
        for (int y = rows[k].first; y < rows[k].second; ++y)
            for (int x = spans[k].first; x < spans[k].second; ++x) {
                f.image.set(x, y);
                mask.push_back({x, y});
            }
        segmentation::Segment s;
        s.id = static_cast<int>(k);
        s.left = spans[k].first;
        s.right = spans[k].second;
        long long sum = 0;
        for (const auto& p : mask) sum += p.x;
        s.centroid_x = static_cast<int>(sum / static_cast<long long>(mask.size()));
        s.mask = std::move(mask);
        f.segments.push_back(std::move(s));
    }
    auto dist = [&](std::vector<std::pair<std::string, double>> entries) {
        classifier::ClassDistribution d;
        d.probs.assign(f.alphabet.size(), 0.0);
        for (const auto& [name, p] : entries) d.probs[f.alphabet.index_of(name)] = p;
        return d;
    };
    auto key = [&](std::size_t from, std::size_t to) {
        return fnv1a_hash(segmentation::group_image(std::span<const segmentation::Segment>(f.segments).subspan(from, to - from)));
    };
    f.table[key(0, 1)] = dist({{"d", 0.9}, {"o", 0.05}, {"nonchar", 0.05}});
    f.table[key(1, 3)] = dist({{"a", 0.5}, {"i", 0.4}, {"u", 0.05}, {"nonchar", 0.05}});
    f.table[key(3, 4)] = dist({{"i", 0.85}, {"l", 0.1}, {"nonchar", 0.05}});
    f.table[key(3, 5)] = dist({{"t", 0.9}, {"f", 0.05}, {"nonchar", 0.05}});
    f.table[key(4, 7)] = dist({{"d", 0.8}, {"o", 0.15}, {"nonchar", 0.05}});
    f.table[key(5, 7)] = dist({{"o", 0.95}, {"nonchar", 0.05}});
    return f;
}

}  // namespace htr::test
