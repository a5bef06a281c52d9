#pragma once

#include <string>
#include <vector>

#include "htr/image.hpp"

namespace htr::imaging {

/// A margin-cropped word cut out of a page, with its reading-order position.
struct WordImage {
    BinaryImage image;
    std::string page_id;
    int line_index = 0;
    int word_index = 0;

    /// `{page}_{line:03}_{word:03}`
    std::string id() const;
};

/// Otsu threshold: pixels with intensity < threshold are ink. Returns 0 when
/// the histogram has a single intensity (no split exists).
int otsu_threshold(const GrayImage& img);

/// Global Otsu binarization. A single-intensity image yields an all-background
/// result, which callers detect through `ink_count() == 0`.
BinaryImage binarize(const GrayImage& img);

/// Minimal bounding box of ink. Throws on an image without ink.
BinaryImage crop_margins(const BinaryImage& img);

/// Drops 8-connected components with fewer than `min_size` pixels.
BinaryImage remove_specks(const BinaryImage& img, int min_size = 4);

struct Corrected {
    BinaryImage image;
    double degrees = 0.0;
};

/// Rotation about the image center on a canvas large enough to hold the result.
/// Resampling: 2x2 nearest-neighbor sub-samples per output pixel, ink when at
/// least half of them land on ink.
BinaryImage rotate(const BinaryImage& img, double degrees);

/// Horizontal shear about the middle row; positive angles lean the top to the right.
BinaryImage shear(const BinaryImage& img, double degrees);

/// Variance of the row ink profile after rotating ink pixel centers by `degrees`,
/// measured over a canvas whose height does not depend on the angle.
double skew_objective(const BinaryImage& img, double degrees);

/// Sum of squared column ink counts after shearing ink pixel centers by `degrees`.
double slant_objective(const BinaryImage& img, double degrees);

/// Searches [-5, 5] degrees in 0.1 steps (0 first, then outward) and applies
/// the best rotation. The result is margin-cropped.
Corrected deskew(const BinaryImage& img);

/// Searches [-30, 30] degrees in 1 degree steps and applies the best shear.
Corrected deslant(const BinaryImage& img);

/// Maximal runs of rows containing ink, each margin-cropped, top to bottom.
std::vector<BinaryImage> split_lines(const BinaryImage& page);

/// Splits at all-white column runs of at least `gap` columns, left to right.
std::vector<WordImage> split_words(const BinaryImage& line, int gap, const std::string& page_id = "page",
                                   int line_index = 0);

struct PreprocessOptions {
    int word_gap = 7;
    int min_speck = 4;
    bool deskew = true;
    bool deslant = true;
};

/// binarize -> remove specks -> crop -> deskew -> lines -> per-line deslant -> words.
std::vector<WordImage> preprocess_page(const GrayImage& page, const std::string& page_id,
                                       const PreprocessOptions& options = {});

}  // namespace htr::imaging
