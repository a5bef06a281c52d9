#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htr/imaging.hpp"
#include "htr/pipeline.hpp"

namespace htr::eval {

using GroundTruth = std::map<std::string, std::string>;

/// Tab-separated `word_id<TAB>transcription` lines.
GroundTruth read_truth(const std::filesystem::path& path);
void write_truth(const std::filesystem::path& path, const GroundTruth& truth);

std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 / rank of the exact match, 0 when it is absent.
double reciprocal_rank(const pipeline::WordResult& result, std::string_view truth);

/// 1-based rank of the exact match, or -1.
int exact_rank(const pipeline::WordResult& result, std::string_view truth);

struct EvalReport {
    std::size_t words = 0;
    double mrr = 0.0;
    double mwpt_ms = 0.0;
    std::map<int, double> m_precision;
    std::map<int, double> ed_histogram;    // edit distance of the top-1 (empty when untranscribed)
    std::map<int, double> rank_histogram;  // -1: exact transcription not generated

    std::string to_json() const;
    std::string to_csv() const;
};

EvalReport compute_report(std::span<const pipeline::WordResult> results, const GroundTruth& truth,
                          std::span<const int> m_values = std::span<const int>());

struct SweepGrid {
    std::vector<double> eta, theta1, theta2, beta;
    std::vector<int> q;

    /// JSON object with optional arrays `eta`, `theta1`, `theta2`, `beta`, `q`;
    /// a missing axis stays at the base config value.
    static SweepGrid parse_json(std::string_view text);
    std::vector<lattice::LatticeParams> points(const lattice::LatticeParams& base) const;
};

struct SweepRow {
    lattice::LatticeParams params;
    EvalReport report;
    std::size_t timeouts = 0;
};

struct SweepOptions {
    double word_timeout_s = 120.0;
    int repeats = 1;  // per-word time is the minimum over repeats
    std::vector<int> m_values{1, 3, 5, 10};
};

/// Runs every grid point over the same words, sequentially. Each word is run
/// at all points in turn before the next word.
std::vector<SweepRow> sweep(const std::vector<lattice::LatticeParams>& points,
                            std::span<const imaging::WordImage> words, const GroundTruth& truth,
                            const pipeline::Models& models, const pipeline::PipelineConfig& base,
                            const SweepOptions& options = {});

std::string sweep_table(std::span<const SweepRow> rows);
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace htr::eval
