#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "htr/decoding.hpp"

using namespace htr;
using namespace htr::decoding;
using langmodel::CharLM;
using langmodel::Smoothing;

namespace {

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::vector<std::string> random_words(std::mt19937& rng, const std::string& alphabet, int n, int max_len) {
    std::uniform_int_distribution<int> len(1, max_len);
    std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
        std::string w;
        const int l = len(rng);
        for (int k = 0; k < l; ++k) w += alphabet[ch(rng)];
        out.push_back(w);
    }
    return out;
}

std::vector<lattice::Candidate> candidates(const CharLM& lm, std::vector<std::string> texts) {
    std::vector<lattice::Candidate> out;
    for (auto& t : texts) out.push_back({t, lm.log_word_prob(t), {}});
    return out;
}

}  // namespace

TEST_CASE("counterpart sets") {
    const auto d = CounterpartSets::defaults();
    CHECK(d.groups().size() == 5);
    CHECK(d.group_of('i') == "ir");
    CHECK(d.group_of('m') == "nm");
    CHECK(d.group_of('a') == "a");
    CHECK_THROWS_AS(CounterpartSets({"ab", "bc"}), Error);
    CHECK_THROWS_AS(CounterpartSets({"aa"}), Error);

    const auto parsed = CounterpartSets::parse_json(R"([["a","i"],["c","o"]])");
    CHECK(parsed.groups() == std::vector<std::string>{"ai", "co"});
    CHECK_THROWS_AS(CounterpartSets::parse_json(R"({"a":1})"), Error);
    CHECK_THROWS_AS(CounterpartSets::parse_json(R"([["ab"]])"), Error);
    CHECK_THROWS_AS(CounterpartSets::parse_json("[["), Error);
}

TEST_CASE("counterpart_variants") {
    const CounterpartSets example({"ai", "co"});
    CHECK(as_set(counterpart_variants("dito", example)) == std::set<std::string>{"dito", "dato", "ditc", "datc"});
    CHECK(as_set(counterpart_variants("anno", CounterpartSets({"nm"}))) ==
          std::set<std::string>{"anno", "anmo", "amno", "ammo"});
    CHECK(counterpart_variants("uta", CounterpartSets::defaults()) == std::vector<std::string>{"uta"});
    CHECK_THROWS_AS(counterpart_variants("", example), Error);

    std::mt19937 rng(2);
    const CounterpartSets three({"abc", "de"});
    for (const auto& w : random_words(rng, "abcdefg", 100, 6)) {
        const auto v = counterpart_variants(w, three);
        std::size_t expected = 1;
        for (char c : w) expected *= (c == 'a' || c == 'b' || c == 'c') ? 3 : (c == 'd' || c == 'e') ? 2 : 1;
        CHECK(v.size() == expected);
        CHECK(as_set(v).size() == expected);
        CHECK(as_set(v).count(w) == 1);
    }
}

TEST_CASE("capped variants are the best ones by word probability") {
    std::mt19937 rng(3);
    const std::string alphabet = "abcde";
    const CounterpartSets sets({"ab", "cd"});
    for (auto smoothing : {Smoothing::stupid_backoff, Smoothing::none}) {
        const auto lm = CharLM::train(random_words(rng, alphabet, 300, 7), alphabet, {4, smoothing, 0.4});
        for (const auto& w : random_words(rng, "abcd", 30, 8)) {
            const auto full = counterpart_variants(w, sets, 1u << 20);
            if (full.size() < 8) continue;
            const std::size_t cap = full.size() / 3;
            const auto capped = counterpart_variants(w, sets, cap, &lm);
            CHECK(capped.size() == cap);
            CHECK(as_set(capped).count(w) == 1);
            CHECK(as_set(capped).size() == cap);

            std::vector<double> all_scores;
            for (const auto& v : full)
                if (v != w) all_scores.push_back(lm.log_word_prob(v));
            std::sort(all_scores.rbegin(), all_scores.rend());
            std::vector<double> got;
            for (const auto& v : capped)
                if (v != w) got.push_back(lm.log_word_prob(v));
            std::sort(got.rbegin(), got.rend());
            // everything kept besides the input ranks within the true top `cap`
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == all_scores[i]);
        }
        CHECK_THROWS_AS(counterpart_variants("abcdabcdabcd", sets, 4), Error);
    }
}

TEST_CASE("decode revises dito into dato") {
    const std::vector<std::string> corpus{"dato", "dato", "data", "datum", "do", "ita"};
    const auto lm = CharLM::train(corpus, "abcdefghilmnopqrstux", {6, Smoothing::stupid_backoff, 0.4});
    const CounterpartSets example({"ai", "co"});
    const auto out = decode(candidates(lm, {"dito"}), lm, example, 10);
    REQUIRE(!out.empty());
    CHECK(out[0].text == "dato");
    CHECK(out[0].decoded);
    CHECK(out.size() == 4);
    for (const auto& d : out) CHECK(d.decoded == (d.text != "dito"));
    CHECK(brute_force_decode("dito", lm, example) == "dato");
    CHECK(decode({}, lm, example, 10).empty());
}

TEST_CASE("decode without confusable symbols re-ranks the input") {
    const std::vector<std::string> corpus{"uta", "tua", "aut", "taxa"};
    const auto lm = CharLM::train(corpus, "abcdefghilmnopqrstux", {3, Smoothing::stupid_backoff, 0.4});
    auto cands = candidates(lm, {"tua", "uta", "aut", "tax"});
    std::reverse(cands.begin(), cands.end());
    const auto out = decode(cands, lm, CounterpartSets::defaults(), 10);
    REQUIRE(out.size() == 4);
    for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].log_word_prob >= out[i].log_word_prob);
    for (const auto& d : out) CHECK_FALSE(d.decoded);
    CHECK(decode(cands, lm, CounterpartSets::defaults(), 2).size() == 2);
}

TEST_CASE("decode agrees with the brute-force decoder") {
    std::mt19937 rng(9);
    const std::string alphabet = "abcd";
    const CounterpartSets sets({"ab", "cd"});
    for (int t = 0; t < 60; ++t) {
        const auto smoothing = t % 2 == 0 ? Smoothing::stupid_backoff : Smoothing::none;
        const auto lm = CharLM::train(random_words(rng, alphabet, 20, 5), alphabet, {3, smoothing, 0.4});
        for (const auto& w : random_words(rng, alphabet, 5, 4)) {
            const auto cands = candidates(lm, {w});
            const auto out = decode(cands, lm, sets, 5);
            REQUIRE(!out.empty());
            // Same objective value; the texts may differ only on float-level ties.
            const auto oracle = brute_force_decode(w, lm, sets);
            const double oracle_score = lm.log_word_prob(oracle);
            if (std::isinf(oracle_score)) {
                CHECK(std::isinf(out[0].log_word_prob));
                CHECK(out[0].text == oracle);
            } else {
                CHECK(out[0].log_word_prob == doctest::Approx(oracle_score).epsilon(1e-12));
            }
            CHECK(out[0].log_word_prob >= cands[0].log_word_prob);
            std::set<std::string> seen;
            for (std::size_t i = 0; i < out.size(); ++i) {
                CHECK(seen.insert(out[i].text).second);
                if (i > 0) CHECK(out[i - 1].log_word_prob >= out[i].log_word_prob);
            }
        }
    }
    const auto lm = CharLM::train(std::vector<std::string>{"a"}, "a", {2, Smoothing::none, 0.4});
    CHECK(brute_force_decode("a", lm, CounterpartSets()) == "a");
    const CounterpartSets wide({"abcdefghij"});
    const auto lm10 = CharLM::train(std::vector<std::string>{"abcdefghij"}, "abcdefghij", {2, Smoothing::none, 0.4});
    CHECK_THROWS_AS(brute_force_decode("aaaaaaa", lm10, wide), Error);
}
