#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "htr/classifier.hpp"
#include "htr/eval.hpp"
#include "htr/segmentation.hpp"

namespace htr::eval {

/// Glyph images per symbol name. All templates share one height and baseline row.
struct GlyphSet {
    std::map<std::string, std::vector<BinaryImage>> templates;

    /// Stroke-drawn Latin minuscules for every letter of the default alphabet,
    /// `variants` jittered renderings each.
    static GlyphSet builtin(int variants = 8, std::uint64_t seed = 1);
    /// PNG files named `<symbol>.png` or `<symbol>_<k>.png`.
    static GlyphSet load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;
};

/// A random piece of glyph ink that is not a whole letter: a left or right part
/// of one glyph, or the adjoining halves of two.
BinaryImage nonchar_fragment(const GlyphSet& glyphs, std::mt19937_64& rng);

struct RenderOptions {
    double ligature_prob = 0.6;
    int min_gap = 2;
    int max_gap = 4;
};

struct SynthWord {
    std::string id;
    std::string text;
    std::vector<std::size_t> symbols;  // alphabet index per glyph
    BinaryImage image;                 // margin-cropped
    int top = 0;                       // row of image.top in the uncropped glyph canvas
    std::vector<int> owner;            // per pixel: glyph index, -1 for ligature or background
};

/// Concatenates jittered glyphs; ligatures are 3 px strokes at mid x-height that
/// overlap the next glyph by 1-3 px. Each glyph is shifted up or down by at most 1 px.
SynthWord render_word(const std::string& text, const GlyphSet& glyphs, const classifier::SymbolAlphabet& alphabet,
                      std::mt19937_64& rng, const RenderOptions& options = {});

struct SynthPage {
    std::string id;
    GrayImage image;
    std::vector<SynthWord> words;  // reading order
};

struct SynthCorpus {
    std::vector<SynthPage> pages;
    GroundTruth truth;
};

struct LayoutOptions {
    int words_per_line = 5;
    int lines_per_page = 2;
    int word_gap = 16;
    int line_gap = 14;
    int margin = 20;
    RenderOptions render;
};

/// `n` words drawn uniformly from `lexicon`, laid out in pages of lines.
SynthCorpus synth_generate(const GlyphSet& glyphs, const classifier::SymbolAlphabet& alphabet,
                           std::span<const std::string> lexicon, std::size_t n, std::mt19937_64& rng,
                           const LayoutOptions& layout = {});

/// Classifier training samples from every lattice-eligible segment group of a
/// rendered word. A group that holds most of exactly one glyph and little else
/// gets that glyph's symbol; every other group is labeled non-character.
std::vector<classifier::LabeledSample> label_groups(const SynthWord& word,
                                                    const classifier::SymbolAlphabet& alphabet, double sigma,
                                                    segmentation::Method method = segmentation::Method::polygonal);

/// Isolated glyph variants, labeled groups of `words` rendered once each and
/// `fragments` non-character pieces.
std::vector<classifier::LabeledSample> synth_training_samples(const GlyphSet& glyphs,
                                                              const classifier::SymbolAlphabet& alphabet,
                                                              std::span<const std::string> words, double sigma,
                                                              std::size_t fragments, std::mt19937_64& rng,
                                                              const RenderOptions& options = {});

/// Reference classifier trained on synth_training_samples of `lexicon` (rendered four times) balanced
/// to `per_class` samples per class, plus a character LM over `lm_words`.
pipeline::Models synth_models(const GlyphSet& glyphs, const classifier::SymbolAlphabet& alphabet,
                              std::span<const std::string> lexicon, std::span<const std::string> lm_words,
                              std::size_t per_class, std::mt19937_64& rng,
                              const classifier::TrainOptions& train = {});

}  // namespace htr::eval
