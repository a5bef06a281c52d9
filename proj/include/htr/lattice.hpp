#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "htr/classifier.hpp"
#include "htr/langmodel.hpp"
#include "htr/segmentation.hpp"

namespace htr::lattice {

/// Raised when candidate enumeration runs past its deadline.
class Timeout : public Error {
public:
    using Error::Error;
};

struct LatticeParams {
    double sigma = 25.0;    // max edge span in px
    double eta = 0.1;       // max non-character probability
    double theta1 = 0.8;    // cumulative label mass
    double theta2 = 0.1;    // per-label floor
    double beta = 1e-16;    // prefix pruning threshold; 0 disables pruning
    std::size_t m = 10;     // candidates returned
    int q = 6;              // gram order used for scoring
    double avg_char_px = 19.0;
    double min_len_ratio = 0.9;

    void validate() const;
};

struct Label {
    std::size_t symbol = 0;  // alphabet index
    char text = '\0';
    double prob = 0.0;
};

struct Edge {
    int from = 0;
    int to = 0;
    std::vector<Label> labels;
};

/// Vertex 0 is the start at x = 0; vertex k > 0 is the centroid of segment k - 1.
struct Lattice {
    std::vector<int> vertices;
    std::vector<Edge> edges;

    std::vector<std::vector<std::size_t>> out_edges() const;
    std::vector<int> sinks() const;
};

struct PathStep {
    std::size_t edge = 0;
    std::size_t label = 0;
};

struct Candidate {
    std::string text;
    double log_word_prob = 0.0;
    std::vector<PathStep> path;
};

/// Labels for one classified group, or nullopt when the edge must be dropped.
std::optional<std::vector<Label>> select_labels(const classifier::ClassDistribution& dist,
                                                const classifier::SymbolAlphabet& alphabet, double theta1,
                                                double theta2);

Lattice build_lattice(std::span<const segmentation::Segment> segments, const classifier::CharacterClassifier& clf,
                      const LatticeParams& params);

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

/// Depth-first over every start-to-sink path, one branch per label. Throws
/// Timeout once `deadline` has passed.
std::vector<Candidate> enumerate_candidates(const Lattice& lat, const langmodel::CharLM& lm,
                                            const LatticeParams& params, Deadline deadline = std::nullopt);

/// Keeps candidates with avg_char_px * len >= min_len_ratio * word_width.
std::vector<Candidate> length_filter(std::vector<Candidate> cands, int word_width, const LatticeParams& params);

/// Best first (ties by text), one entry per distinct text, at most m.
std::vector<Candidate> rank_candidates(std::vector<Candidate> cands, std::size_t m);

}  // namespace htr::lattice
