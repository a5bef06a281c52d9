#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "htr/eval.hpp"
#include "htr/imaging.hpp"
#include "htr/synth.hpp"

using namespace htr;
using namespace htr::eval;
using pipeline::WordResult;

namespace {

std::size_t edit_oracle(const std::string& a, std::size_t i, const std::string& b, std::size_t j,
                        std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const std::size_t sub = edit_oracle(a, i + 1, b, j + 1, memo) + (a[i] == b[j] ? 0 : 1);
    const std::size_t del = edit_oracle(a, i + 1, b, j, memo) + 1;
    const std::size_t ins = edit_oracle(a, i, b, j + 1, memo) + 1;
    return memo[key] = std::min({sub, del, ins});
}

std::size_t edit_oracle(const std::string& a, const std::string& b) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    return edit_oracle(a, 0, b, 0, memo);
}

std::vector<std::string> ab_strings(std::size_t max_len) {
    std::vector<std::string> out{""};
    for (std::size_t k = 0; k < out.size(); ++k)
        if (out[k].size() < max_len)
            for (char c : {'a', 'b'}) out.push_back(out[k] + c);
    return out;
}

WordResult result(const std::string& id, std::vector<std::string> texts, double ms = 1.0) {
    WordResult r;
    r.word_id = id;
    r.timing_ms = ms;
    for (std::size_t i = 0; i < texts.size(); ++i) r.transcriptions.push_back({texts[i], -1.0 * i, int(i) + 1, false});
    r.untranscribed = texts.empty();
    return r;
}

double sum(const std::map<int, double>& h) {
    return std::accumulate(h.begin(), h.end(), 0.0, [](double s, const auto& kv) { return s + kv.second; });
}

}  // namespace

TEST_CASE("levenshtein known pairs") {
    CHECK(levenshtein("asseritis", "afferitis") == 2);
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("", "") == 0);
    CHECK(levenshtein("", "dato") == 4);
    CHECK(levenshtein("dato", "") == 4);
    CHECK(levenshtein("dato", "dato") == 0);
}

TEST_CASE("levenshtein equals the recursive oracle on short ab strings") {
    const auto strings = ab_strings(6);
    CHECK(strings.size() == 127);
    for (const auto& a : strings)
        for (const auto& b : strings) REQUIRE(levenshtein(a, b) == edit_oracle(a, b));
}

TEST_CASE("levenshtein is a metric") {
    std::mt19937 rng(4);
    std::uniform_int_distribution<int> len(0, 8);
    std::uniform_int_distribution<int> ch(0, 3);
    auto word = [&] {
        std::string s(static_cast<std::size_t>(len(rng)), 'a');
        for (auto& c : s) c = static_cast<char>('a' + ch(rng));
        return s;
    };
    for (int t = 0; t < 500; ++t) {
        const auto a = word(), b = word(), c = word();
        CHECK(levenshtein(a, b) == levenshtein(b, a));
        CHECK((levenshtein(a, b) == 0) == (a == b));
        CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
        CHECK(levenshtein(a, b) >= std::max(a.size(), b.size()) - std::min(a.size(), b.size()));
    }
}

TEST_CASE("reciprocal rank and exact rank") {
    const auto r = result("w", {"dito", "dato", "diid"});
    CHECK(exact_rank(r, "dato") == 2);
    CHECK(reciprocal_rank(r, "dato") == 0.5);
    CHECK(exact_rank(r, "data") == -1);
    CHECK(reciprocal_rank(r, "data") == 0.0);
    CHECK(exact_rank(result("w", {}), "") == -1);
}

TEST_CASE("mrr of ranks one, two and absent") {
    const std::vector<WordResult> rs{result("a", {"dato"}), result("b", {"dito", "dato"}), result("c", {"diid"})};
    const GroundTruth truth{{"a", "dato"}, {"b", "dato"}, {"c", "dato"}};
    const auto rep = compute_report(rs, truth);
    CHECK(rep.mrr == 0.5);
    CHECK(rep.words == 3);
    CHECK(rep.rank_histogram.at(1) == doctest::Approx(1.0 / 3));
    CHECK(rep.rank_histogram.at(2) == doctest::Approx(1.0 / 3));
    CHECK(rep.rank_histogram.at(-1) == doctest::Approx(1.0 / 3));
    CHECK(rep.m_precision.at(1) == doctest::Approx(1.0 / 3));
    CHECK(rep.m_precision.at(3) == doctest::Approx(2.0 / 3));
    CHECK(rep.ed_histogram.at(0) == doctest::Approx(1.0 / 3));
    CHECK(rep.ed_histogram.at(1) == doctest::Approx(1.0 / 3));
    CHECK(rep.ed_histogram.at(3) == doctest::Approx(1.0 / 3));
}

TEST_CASE("untranscribed words count against every metric") {
    const std::vector<WordResult> rs{result("a", {}, 4.0), result("b", {"id"}, 2.0)};
    const GroundTruth truth{{"a", "ita"}, {"b", "id"}};
    const auto rep = compute_report(rs, truth);
    CHECK(rep.mrr == 0.5);
    CHECK(rep.mwpt_ms == 3.0);
    CHECK(rep.ed_histogram.at(3) == 0.5);
    CHECK_THROWS_AS(compute_report(rs, GroundTruth{{"a", "ita"}}), Error);
    const std::vector<int> bad{0};
    CHECK_THROWS_AS(compute_report(rs, truth, bad), Error);
}

TEST_CASE("report invariants on random fixtures") {
    std::mt19937 rng(9);
    const std::vector<std::string> words{"dato", "dito", "data", "ita", "id", "do", "ad"};
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::uniform_int_distribution<int> count(0, 6);
    const std::vector<int> ms{1, 2, 3, 5, 10};
    for (int t = 0; t < 100; ++t) {
        std::vector<WordResult> rs;
        GroundTruth truth;
        const int n = 1 + count(rng);
        for (int k = 0; k < n; ++k) {
            const std::string id = "w" + std::to_string(k);
            std::vector<std::string> texts;
            for (int c = count(rng); c > 0; --c) {
                const auto& w = words[pick(rng)];
                if (std::find(texts.begin(), texts.end(), w) == texts.end()) texts.push_back(w);
            }
            rs.push_back(result(id, texts));
            truth[id] = words[pick(rng)];
        }
        const auto rep = compute_report(rs, truth, ms);
        for (std::size_t i = 1; i < ms.size(); ++i) CHECK(rep.m_precision.at(ms[i - 1]) <= rep.m_precision.at(ms[i]));
        CHECK(sum(rep.ed_histogram) == doctest::Approx(1.0));
        CHECK(sum(rep.rank_histogram) == doctest::Approx(1.0));
        CHECK(rep.mrr >= 0.0);
        CHECK(rep.mrr <= rep.m_precision.at(10) + 1e-12);
        CHECK(rep.mrr >= rep.m_precision.at(1) - 1e-12);
    }
}

TEST_CASE("truth tsv round trip") {
    const GroundTruth truth{{"p001_000_000", "dato"}, {"p001_000_001", "ita"}};
    const auto path = std::filesystem::temp_directory_path() / "htr_truth_test.tsv";
    write_truth(path, truth);
    CHECK(read_truth(path) == truth);
    std::ofstream(path) << "no tab here\n";
    CHECK_THROWS_AS(read_truth(path), Error);
    std::filesystem::remove(path);
}

TEST_CASE("sweep grid expands the cartesian product") {
    const auto grid = SweepGrid::parse_json(R"({"eta": [0.05, 0.1, 0.3], "beta": [1e-16, 1e-4]})");
    lattice::LatticeParams base;
    base.theta1 = 0.7;
    const auto points = grid.points(base);
    CHECK(points.size() == 6);
    std::set<std::pair<double, double>> seen;
    for (const auto& p : points) {
        CHECK(p.theta1 == 0.7);
        CHECK(p.q == base.q);
        seen.insert({p.eta, p.beta});
    }
    CHECK(seen.size() == 6);
    CHECK(SweepGrid::parse_json("{}").points(base).size() == 1);
    CHECK_THROWS_AS(SweepGrid::parse_json(R"({"gamma": [1]})"), Error);
    CHECK_THROWS_AS(SweepGrid::parse_json(R"({"eta": []})"), Error);
    CHECK_THROWS_AS(SweepGrid::parse_json(R"({"eta": 0.1})"), Error);
}

TEST_CASE("synthetic corpus is deterministic and keyed by word id") {
    const auto alphabet = classifier::SymbolAlphabet::default_latin();
    const auto glyphs = GlyphSet::builtin();
    const std::vector<std::string> lexicon{"dato", "ita", "omnium", "terra", "lux"};
    std::mt19937_64 a(17), b(17);
    const auto x = synth_generate(glyphs, alphabet, lexicon, 13, a);
    const auto y = synth_generate(glyphs, alphabet, lexicon, 13, b);
    CHECK(x.truth == y.truth);
    CHECK(x.truth.size() == 13);
    CHECK(x.pages.size() == 2);
    REQUIRE(x.pages.size() == y.pages.size());
    for (std::size_t p = 0; p < x.pages.size(); ++p) CHECK(x.pages[p].image == y.pages[p].image);
    for (const auto& page : x.pages) {
        const auto words = imaging::preprocess_page(page.image, page.id);
        REQUIRE(words.size() == page.words.size());
        for (std::size_t i = 0; i < words.size(); ++i) {
            CHECK(words[i].id() == page.words[i].id);
            CHECK(x.truth.count(words[i].id()) == 1);
        }
    }
}

TEST_CASE("glyph set survives a png round trip") {
    const auto glyphs = GlyphSet::builtin(2, 3);
    const auto dir = std::filesystem::temp_directory_path() / "htr_glyphs_test";
    std::filesystem::remove_all(dir);
    glyphs.save(dir);
    const auto back = GlyphSet::load(dir);
    std::filesystem::remove_all(dir);
    CHECK(back.templates == glyphs.templates);
}

TEST_CASE("labeled groups carry one glyph or the non-character class") {
    const auto alphabet = classifier::SymbolAlphabet::default_latin();
    const auto glyphs = GlyphSet::builtin();
    std::mt19937_64 rng(2);
    for (const std::string text : {"dato", "omnium", "terra"}) {
        const auto word = render_word(text, glyphs, alphabet, rng);
        const auto samples = label_groups(word, alphabet, 25.0);
        REQUIRE_FALSE(samples.empty());
        std::set<char> letters;
        for (const auto& s : samples) {
            CHECK(s.image.width() == classifier::kSampleSide);
            if (!alphabet.is_nonchar(s.label)) letters.insert(alphabet[s.label].text);
        }
        for (char c : letters) CHECK(text.find(c) != std::string::npos);
    }
}

TEST_CASE("classifier trained on synthetic samples reads unseen glyph variants") {
    const auto alphabet = classifier::SymbolAlphabet::default_latin();
    const auto glyphs = GlyphSet::builtin();
    const std::vector<std::string> lexicon{"dato", "ita", "omnium", "terra", "lux", "caelum", "super",
                                           "facientem", "herbam", "quod", "genus", "semen"};
    std::mt19937_64 rng(6);
    const std::vector<std::string> lm_words(lexicon);
    const auto models = synth_models(glyphs, alphabet, lexicon, lm_words, 200, rng);
    const auto unseen = GlyphSet::builtin(4, 77);
    int ok = 0, total = 0;
    for (const auto& [name, images] : unseen.templates)
        for (const auto& img : images) {
            const auto d = models.classifier->classify(imaging::crop_margins(img));
            const auto best = static_cast<std::size_t>(std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin());
            ok += alphabet[best].name == name;
            ++total;
        }
    CHECK(static_cast<double>(ok) / total >= 0.9);
    // Half-glyph cuts often look like real letters; a majority is enough.
    int rejected = 0;
    for (int k = 0; k < 40; ++k) {
        const auto d = models.classifier->classify(nonchar_fragment(glyphs, rng));
        const auto best = static_cast<std::size_t>(std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin());
        rejected += alphabet.is_nonchar(best);
    }
    CHECK(rejected > 20);
}
