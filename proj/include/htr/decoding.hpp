#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htr/langmodel.hpp"
#include "htr/lattice.hpp"

namespace htr::decoding {

inline constexpr std::size_t kDefaultVariantCap = 4096;
inline constexpr double kBruteForceLimit = 1e6;

/// Disjoint groups of mutually confusable transcription characters.
class CounterpartSets {
public:
    CounterpartSets() = default;
    explicit CounterpartSets(std::vector<std::string> groups);

    /// {i,r} {o,d} {n,m} {l,f} {c,e}
    static CounterpartSets defaults();
    /// JSON list of symbol arrays, e.g. [["i","r"],["o","d"]].
    static CounterpartSets parse_json(std::string_view text);
    static CounterpartSets load(const std::filesystem::path& path);

    /// The group holding `c`, or `c` alone.
    std::string group_of(char c) const;
    const std::vector<std::string>& groups() const { return groups_; }

private:
    std::vector<std::string> groups_;
};

/// Every string obtained by swapping characters within their groups, the input
/// included. Over `cap`, the best `cap` by word probability (needs `lm`).
std::vector<std::string> counterpart_variants(std::string_view text, const CounterpartSets& sets,
                                              std::size_t cap = kDefaultVariantCap,
                                              const langmodel::CharLM* lm = nullptr, int order = 0);

struct Decoded {
    std::string text;
    double log_word_prob = 0.0;
    bool decoded = false;  // not among the input candidates
};

std::vector<Decoded> decode(std::span<const lattice::Candidate> candidates, const langmodel::CharLM& lm,
                            const CounterpartSets& sets, std::size_t m, std::size_t cap = kDefaultVariantCap,
                            int order = 0);

/// Exhaustive maximizer of word probability times the uniform in-group
/// emission terms; ties go to the lexicographically smaller text.
std::string brute_force_decode(std::string_view observed, const langmodel::CharLM& lm, const CounterpartSets& sets,
                               int order = 0);

}  // namespace htr::decoding
