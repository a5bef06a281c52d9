#include <algorithm>
#include <queue>
#include <random>
#include <set>

#include "doctest.h"
#include "htr/imaging.hpp"
#include "htr/segmentation.hpp"
#include "test_fixtures.hpp"

using namespace htr;
using namespace htr::segmentation;

namespace {

BinaryImage from_profile(const std::vector<int>& counts, int height) {
    BinaryImage img(static_cast<int>(counts.size()), height);
    for (std::size_t x = 0; x < counts.size(); ++x)
        for (int k = 0; k < counts[x]; ++k) img.set(static_cast<int>(x), height - 1 - k);
    return img;
}

// Boundary oracle: i starts a run of equal values that is entered from a
// strictly larger value and left to a strictly larger value.
std::vector<int> oracle_boundaries(const std::vector<int>& p) {
    std::vector<int> out;
    const int n = static_cast<int>(p.size());
    for (int i = 1; i < n; ++i) {
        if (!(p[static_cast<std::size_t>(i - 1)] > p[static_cast<std::size_t>(i)])) continue;
        int j = i;
        while (j + 1 < n && p[static_cast<std::size_t>(j + 1)] == p[static_cast<std::size_t>(i)]) ++j;
        if (j + 1 < n && p[static_cast<std::size_t>(j + 1)] > p[static_cast<std::size_t>(i)]) out.push_back(i);
    }
    return out;
}

std::set<Pixel> flood(const BinaryImage& img, Pixel seed, int min_x, int max_x) {
    std::set<Pixel> seen{seed};
    std::queue<Pixel> q;
    q.push(seed);
    while (!q.empty()) {
        auto p = q.front();
        q.pop();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                Pixel n{p.x + dx, p.y + dy};
                if (n.x < min_x || n.x > max_x || !img.get(n.x, n.y) || seen.count(n)) continue;
                seen.insert(n);
                q.push(n);
            }
    }
    return seen;
}

void check_partition(const BinaryImage& word, const std::vector<Segment>& segs) {
    std::set<Pixel> seen;
    std::size_t total = 0;
    for (const auto& s : segs) {
        REQUIRE_FALSE(s.mask.empty());
        CHECK(s.left < s.right);
        CHECK(s.centroid_x >= s.left);
        CHECK(s.centroid_x < s.right);
        for (const auto& p : s.mask) {
            CHECK(word.at(p.x, p.y));
            CHECK(seen.insert(p).second);
        }
        total += s.mask.size();
    }
    CHECK(total == word.ink_count());
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) CHECK(segs[i].centroid_x < segs[i + 1].centroid_x);
}

}  // namespace

TEST_CASE("ink_profile") {
    auto mid = BinaryImage::from_ascii({".#.", ".#.", ".#."});
    CHECK(ink_profile(mid).counts == std::vector<int>{0, 3, 0});
    CHECK(ink_profile(BinaryImage(4, 2, true)).counts == std::vector<int>{2, 2, 2, 2});
    CHECK_THROWS_AS(ink_profile(BinaryImage(2, 2)), Error);

    std::mt19937 rng(4);
    for (int t = 0; t < 10; ++t) {
        auto img = htr::test::random_blob_word(rng, 10, 10);
        std::vector<int> naive(10, 0);
        for (int x = 0; x < 10; ++x)
            for (int y = 0; y < 10; ++y) naive[static_cast<std::size_t>(x)] += img.at(x, y);
        CHECK(ink_profile(img).counts == naive);
    }
}

TEST_CASE("over_segment boundaries follow the leftmost-plateau rule") {
    const auto segs = over_segment(from_profile({3, 1, 4, 2, 2, 5}, 6));
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].left == 0);
    CHECK(segs[0].right == 1);
    CHECK(segs[1].left == 1);
    CHECK(segs[1].right == 3);
    CHECK(segs[2].left == 3);
    CHECK(segs[2].right == 6);

    CHECK(over_segment(from_profile({1, 2, 3, 4}, 4)).size() == 1);
}

TEST_CASE("over_segment matches an exhaustive minima scan on random profiles") {
    std::mt19937 rng(8);
    std::uniform_int_distribution<int> len(1, 12);
    std::uniform_int_distribution<int> val(1, 4);
    for (int t = 0; t < 300; ++t) {
        std::vector<int> p(static_cast<std::size_t>(len(rng)));
        for (auto& v : p) v = val(rng);
        const auto word = from_profile(p, 4);
        const auto segs = over_segment(word);
        std::vector<int> starts;
        for (std::size_t i = 1; i < segs.size(); ++i) starts.push_back(segs[i].left);
        CHECK(starts == oracle_boundaries(p));
        CHECK(segs.size() <= p.size());
        check_partition(word, segs);
    }
}

TEST_CASE("contours") {
    const auto rect = contours(BinaryImage(5, 4, true));
    CHECK(rect.upper == std::vector<double>(5, 0.0));
    CHECK(rect.lower == std::vector<double>(5, 3.0));

    auto bar = BinaryImage::from_ascii({"..#..", "..#..", "..#.."});
    const auto one = contours(bar);
    CHECK(one.first_column == 2);
    REQUIRE(one.upper.size() == 1);
    CHECK(one.upper[0] == 0.0);
    CHECK(one.lower[0] == 2.0);

    auto stairs = BinaryImage::from_ascii({
        ".....#",
        "....##",
        "...###",
        "..####",
        ".#####",
        "######",
    });
    const auto s = contours(stairs);
    const std::vector<double> upper{4.5, 4.0, 3.0, 2.0, 1.0, 0.5};
    REQUIRE(s.upper.size() == upper.size());
    for (std::size_t i = 0; i < upper.size(); ++i) CHECK(s.upper[i] == doctest::Approx(upper[i]));
    CHECK(s.lower == std::vector<double>(6, 5.0));

    CHECK_THROWS_AS(contours(BinaryImage(3, 3)), Error);
}

TEST_CASE("polygonal_segment on a plain rectangle yields one segment") {
    const auto segs = polygonal_segment(BinaryImage(8, 10, true));
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].mask.size() == 80);
}

TEST_CASE("polygonal_segment splits two rectangles at a thin bridge") {
    BinaryImage word(15, 10);
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 6; ++x) word.set(x, y);
        for (int x = 9; x < 15; ++x) word.set(x, y);
    }
    for (int x = 6; x < 9; ++x) word.set(x, 5);

    const auto segs = polygonal_segment(word);
    REQUIRE(segs.size() == 2);
    // The smoothed contours put the valley and the peak at the bridge center, column 7.
    const auto left = flood(word, {0, 0}, 0, 7);
    const auto right = flood(word, {14, 0}, 8, 14);
    CHECK(std::set<Pixel>(segs[0].mask.begin(), segs[0].mask.end()) == left);
    CHECK(std::set<Pixel>(segs[1].mask.begin(), segs[1].mask.end()) == right);
}

TEST_CASE("segmentations conserve ink on random words") {
    std::mt19937 rng(13);
    for (int t = 0; t < 100; ++t) {
        const auto word = htr::test::random_blob_word(rng, 40, 20);
        const auto poly = polygonal_segment(word);
        check_partition(word, poly);
        CHECK(poly.size() >= 1);
        check_partition(word, over_segment(word));
        // deterministic
        const auto again = polygonal_segment(word);
        REQUIRE(again.size() == poly.size());
        for (std::size_t i = 0; i < poly.size(); ++i) CHECK(again[i].mask == poly[i].mask);
    }
}

TEST_CASE("polygonal_segment yields at least one segment per component") {
    auto word = BinaryImage::from_ascii({
        "##....###...#",
        "##....###...#",
        "......###....",
    });
    CHECK(polygonal_segment(word).size() >= 3);
}

TEST_CASE("group_image") {
    std::mt19937 rng(17);
    const auto word = imaging::crop_margins(htr::test::random_blob_word(rng, 40, 20));
    auto segs = over_segment(word);
    REQUIRE(!segs.empty());

    const std::span<const Segment> all(segs);
    CHECK(group_image(all.subspan(0, 1)) == BinaryImage::from_pixels(segs[0].mask));
    CHECK(group_image(all) == word);

    // Four-segment fixture: middle two.
    const auto four = over_segment(from_profile({3, 1, 3, 1, 3, 1, 3}, 3));
    REQUIRE(four.size() == 4);
    std::set<Pixel> uni;
    for (int i = 1; i <= 2; ++i) uni.insert(four[static_cast<std::size_t>(i)].mask.begin(), four[static_cast<std::size_t>(i)].mask.end());
    const auto g = group_image(std::span<const Segment>(four).subspan(1, 2));
    CHECK(g == BinaryImage::from_pixels(std::vector<Pixel>(uni.begin(), uni.end())));

    CHECK_THROWS_AS(group_image(std::span<const Segment>()), Error);
}
