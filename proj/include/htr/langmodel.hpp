#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace htr::langmodel {

inline constexpr char kWordStart = '$';
inline constexpr char kWordEnd = '^';
inline constexpr int kMaxOrder = 8;

enum class Smoothing { none, stupid_backoff };

struct Tokens {
    std::vector<std::string> words;
    std::size_t dropped = 0;  // letters outside the alphabet
};

/// Lowercases (ASCII and Latin-1 letters in UTF-8, accents folded), maps v->u
/// and j->i, splits on every non-letter and drops letters not in `alphabet`.
Tokens tokenize(std::string_view text, std::string_view alphabet);

/// Concatenated tokens of every regular file under `dir` (sorted by path).
Tokens read_corpus(const std::filesystem::path& dir, std::string_view alphabet);

/// Character q-gram counts with log-space scoring.
class CharLM {
public:
    struct Options {
        int q = 6;
        Smoothing smoothing = Smoothing::stupid_backoff;
        double alpha = 0.4;
    };

    static CharLM train(std::span<const std::string> words, std::string_view alphabet, const Options& options);

    int q() const { return q_; }
    Smoothing smoothing() const { return smoothing_; }
    double alpha() const { return alpha_; }
    const std::string& alphabet() const { return alphabet_; }

    std::uint64_t count(std::string_view context, char symbol) const;
    std::uint64_t context_total(std::string_view context) const;

    /// `order` caps the gram order used for scoring (0 = the trained q).
    double log_cond_prob(std::string_view context, char symbol, int order = 0) const;
    double cond_prob(std::string_view context, char symbol, int order = 0) const;

    /// Chain over `$ t ^`; contexts never reach left of `$`.
    double log_word_prob(std::string_view text, int order = 0) const;
    double word_prob(std::string_view text, int order = 0) const;

    /// Chain over `t` alone; the first symbol uses the empty-context unigram.
    double log_substring_prob(std::string_view text, int order = 0) const;
    double substring_prob(std::string_view text, int order = 0) const;

    /// Log factor for appending `symbol` to `prefix` in the substring chain.
    double log_extend(std::string_view prefix, char symbol, int order = 0) const;

    /// Every stored (context, symbol) pair.
    std::vector<std::pair<std::string, char>> entries() const;

    std::string serialize() const;
    static CharLM deserialize(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static CharLM load(const std::filesystem::path& path);

private:
    struct Row {
        std::map<char, std::uint64_t> counts;
        std::uint64_t total = 0;
    };

    CharLM(std::string alphabet, const Options& options);
    void add(const std::string& context, char symbol, std::uint64_t n);
    int effective_order(int order) const;
    void check_symbol(char symbol) const;
    void check_context(std::string_view context) const;
    double log_backoff(std::string_view context, char symbol) const;

    int q_ = 6;
    Smoothing smoothing_ = Smoothing::stupid_backoff;
    double alpha_ = 0.4;
    std::string alphabet_;
    std::unordered_map<std::string, Row> rows_;
};

}  // namespace htr::langmodel
