#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "htr/image.hpp"

namespace htr::segmentation {

struct InkProfile {
    std::vector<int> counts;  // one entry per column
};

/// A region of word ink. Coordinates are in the word image frame.
struct Segment {
    int id = 0;
    int left = 0;   // first column holding mask ink
    int right = 0;  // one past the last column holding mask ink
    std::vector<Pixel> mask;
    int centroid_x = 0;  // floor of the mean ink x coordinate
};

/// Per-column top and bottom ink rows of one component, smoothed with a
/// width-3 moving average truncated at the ends. Index 0 is `first_column`.
struct Contour {
    int first_column = 0;
    std::vector<double> upper;
    std::vector<double> lower;
};

enum class Method { over, polygonal };

Method parse_method(std::string_view name);
std::string_view method_name(Method m);

InkProfile ink_profile(const BinaryImage& word);

/// Interior local minima, keeping the leftmost index of each plateau of minima.
std::vector<int> plateau_minima(std::span<const double> values);
std::vector<int> plateau_maxima(std::span<const double> values);

/// Boundaries at the ink-profile minima; segments are the column bands between them.
std::vector<Segment> over_segment(const BinaryImage& word);

/// Throws when `component` has no ink or a column gap.
Contour contours(const BinaryImage& component);

/// Contour-based segmentation. Each component is cut by straight lines joining
/// every upper-contour valley to the nearest lower-contour peak (ties go left).
/// "Valley" and "peak" are in the page-up sense: the upper contour dips down
/// (larger row index), the lower contour rises (smaller row index). A cut line
/// extends vertically above and below its end points. A pixel belongs to the
/// region left of the first cut (in left-to-right order) that places it on its
/// left side or on the line. Segments with the same centroid are merged.
std::vector<Segment> polygonal_segment(const BinaryImage& word);

std::vector<Segment> segment(const BinaryImage& word, Method method);

/// Union of the masks, margin-cropped. Throws on an empty union.
BinaryImage group_image(std::span<const Segment> segments);

}  // namespace htr::segmentation
