#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "htr/image.hpp"

namespace htr::classifier {

inline constexpr int kSampleSide = 56;
inline constexpr int kFeatureCount = kSampleSide * kSampleSide;
inline constexpr std::string_view kNonCharName = "nonchar";

struct Symbol {
    std::string name;
    char text = '\0';  // transcription character; '\0' for the non-character class
};

/// Ordered character classes plus exactly one non-character class.
class SymbolAlphabet {
public:
    explicit SymbolAlphabet(std::vector<Symbol> symbols);

    /// a b c d d-tall e f g h i l m n o p q r s s-long t u x, then nonchar.
    static SymbolAlphabet default_latin();

    /// One symbol per line: `name [text-char]`. A missing text char defaults to
    /// the first letter of the name; `nonchar` (or `⊗`) marks the non-character class.
    static SymbolAlphabet parse(std::string_view text);
    static SymbolAlphabet load(const std::filesystem::path& path);

    std::size_t size() const { return symbols_.size(); }
    const Symbol& operator[](std::size_t i) const { return symbols_[i]; }
    const std::vector<Symbol>& symbols() const { return symbols_; }
    std::size_t nonchar_index() const { return nonchar_; }
    bool is_nonchar(std::size_t i) const { return i == nonchar_; }

    /// Throws on an unknown name. Accepts `⊗` for the non-character class.
    std::size_t index_of(std::string_view name) const;
    std::optional<std::size_t> find(std::string_view name) const;

    /// Distinct transcription characters in alphabet order.
    std::string text_chars() const;

    friend bool operator==(const SymbolAlphabet& a, const SymbolAlphabet& b);

private:
    std::vector<Symbol> symbols_;
    std::size_t nonchar_ = 0;
};

/// Probabilities aligned with alphabet order.
struct ClassDistribution {
    std::vector<double> probs;

    /// Throws unless every entry is in [0, 1] and the sum is 1 within `tolerance`.
    void validate(std::size_t expected_size, double tolerance = 1e-9) const;
    bool is_valid(std::size_t expected_size, double tolerance = 1e-9) const;

    static ClassDistribution one_hot(std::size_t size, std::size_t index);
};

enum class Origin { crowd, augmented, synthetic };
std::string_view origin_name(Origin o);
Origin parse_origin(std::string_view name);

struct LabeledSample {
    BinaryImage image;  // kSampleSide x kSampleSide
    std::size_t label = 0;
    Origin origin = Origin::crowd;
};

class CharacterClassifier {
public:
    virtual ~CharacterClassifier() = default;
    virtual ClassDistribution classify(const BinaryImage& img) const = 0;
    virtual const SymbolAlphabet& alphabet() const = 0;
};

/// Aspect-preserving scale to fit 56x56, centered on background. Downscaling
/// takes the majority of each source box (ties to ink); upscaling is nearest neighbor.
BinaryImage normalize_sample(const BinaryImage& img);

struct AffineParams {
    double rotation_deg = 0.0;
    double zoom = 1.0;
    double shear = 0.0;
    double shift_x = 0.0;
    double shift_y = 0.0;
};

/// Affine warp about the image center, same canvas size.
BinaryImage apply_affine(const BinaryImage& img, const AffineParams& params);

/// Random rotation U(-5, 5) degrees, zoom U(0.9, 1.1), shear U(-0.1, 0.1) and
/// shift U(-3, 3) px per axis. Redraws when the warp loses all ink; gives up
/// after 10 redraws.
LabeledSample augment(const LabeledSample& sample, std::mt19937_64& rng);

/// Exactly `target` samples per class: larger classes are subsampled uniformly,
/// smaller ones are topped up with augmented copies. Output is grouped by class.
std::vector<LabeledSample> balance_training_set(std::span<const LabeledSample> samples, const SymbolAlphabet& alphabet,
                                                std::size_t target, std::mt19937_64& rng);

struct TrainOptions {
    int epochs = 8;
    double learning_rate = 0.5;
    std::size_t batch_size = 32;
    double l2 = 1e-5;
};

/// Multinomial logistic regression over the 3136 pixels of the normalized sample.
class ReferenceClassifier final : public CharacterClassifier {
public:
    ReferenceClassifier(SymbolAlphabet alphabet, std::vector<double> weights);

    ClassDistribution classify(const BinaryImage& img) const override;
    /// Skips normalization; `sample` must already be 56x56.
    ClassDistribution classify_normalized(const BinaryImage& sample) const;
    const SymbolAlphabet& alphabet() const override { return alphabet_; }

    /// Row-major, one row of kFeatureCount + 1 (bias last) weights per class.
    const std::vector<double>& weights() const { return weights_; }

    std::vector<std::uint8_t> serialize() const;
    static ReferenceClassifier deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static ReferenceClassifier load(const std::filesystem::path& path);

private:
    SymbolAlphabet alphabet_;
    std::vector<double> weights_;
};

ReferenceClassifier train_reference(std::span<const LabeledSample> samples, const SymbolAlphabet& alphabet,
                                    const TrainOptions& options, std::mt19937_64& rng);

/// Deterministic mock keyed by fnv1a_hash of the submitted image.
class TableClassifier final : public CharacterClassifier {
public:
    TableClassifier(SymbolAlphabet alphabet, std::unordered_map<std::uint64_t, ClassDistribution> table,
                    ClassDistribution fallback);

    ClassDistribution classify(const BinaryImage& img) const override;
    const SymbolAlphabet& alphabet() const override { return alphabet_; }

private:
    SymbolAlphabet alphabet_;
    std::unordered_map<std::uint64_t, ClassDistribution> table_;
    ClassDistribution fallback_;
};

/// JSON-lines records `{"path", "label", "origin"}`; paths relative to the manifest.
std::vector<LabeledSample> read_manifest(const std::filesystem::path& manifest, const SymbolAlphabet& alphabet);
void write_manifest(const std::filesystem::path& manifest, std::span<const LabeledSample> samples,
                    const SymbolAlphabet& alphabet);

}  // namespace htr::classifier
