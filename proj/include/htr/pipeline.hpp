#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htr/classifier.hpp"
#include "htr/decoding.hpp"
#include "htr/imaging.hpp"
#include "htr/langmodel.hpp"
#include "htr/lattice.hpp"
#include "htr/segmentation.hpp"

namespace htr::pipeline {

struct PipelineConfig {
    lattice::LatticeParams lattice;
    std::filesystem::path lm_path;
    std::filesystem::path classifier_path;
    std::filesystem::path counterparts_path;  // empty: default groups
    segmentation::Method method = segmentation::Method::polygonal;
    int word_gap = 7;
    int parallelism = 1;
    bool decode = true;
    std::size_t variant_cap = decoding::kDefaultVariantCap;
    double word_timeout_s = 0.0;  // 0: no limit

    void validate() const;

    /// Relative paths resolve against `base`.
    static PipelineConfig from_json(std::string_view text, const std::filesystem::path& base = {});
    static PipelineConfig load(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Shared read-only models.
struct Models {
    std::shared_ptr<const classifier::CharacterClassifier> classifier;
    std::shared_ptr<const langmodel::CharLM> lm;
    decoding::CounterpartSets counterparts = decoding::CounterpartSets::defaults();

    static Models load(const PipelineConfig& cfg);
};

struct Transcription {
    std::string text;
    double log_word_prob = 0.0;
    int rank = 0;  // 1-based
    bool decoded = false;
};

struct WordResult {
    std::string word_id;
    int width = 0;
    std::vector<Transcription> transcriptions;
    bool untranscribed = false;
    std::string error;
    double timing_ms = 0.0;

    std::string to_json() const;
    static WordResult from_json(std::string_view line);
};

WordResult transcribe_word(const imaging::WordImage& word, const Models& models, const PipelineConfig& cfg);

/// Words are independent; up to cfg.parallelism run at once. Output follows input order.
std::vector<WordResult> transcribe_words(std::span<const imaging::WordImage> words, const Models& models,
                                         const PipelineConfig& cfg);

/// Preprocesses the page and transcribes every word in reading order.
std::vector<WordResult> transcribe_page(const GrayImage& page, const std::string& page_id, const Models& models,
                                        const PipelineConfig& cfg);

void write_results(const std::filesystem::path& path, std::span<const WordResult> results);
std::vector<WordResult> read_results(const std::filesystem::path& path);

}  // namespace htr::pipeline
