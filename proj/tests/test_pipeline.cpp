#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#include "doctest.h"
#include "htr/langmodel.hpp"
#include "htr/pipeline.hpp"
#include "htr/synth.hpp"
#include "test_fixtures.hpp"

using namespace htr;
using namespace htr::pipeline;

namespace {

std::vector<std::string> read_words(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    return words;
}

langmodel::CharLM dato_lm() {
    const std::vector<std::string> words{"dato", "data", "datum", "dedit", "dicto", "dito", "ita", "id",
                                         "ad", "dat", "do", "tota", "dixit", "datio", "oda", "tradito"};
    return langmodel::CharLM::train(words, classifier::SymbolAlphabet::default_latin().text_chars(), {});
}

Models dato_models(const test::DatoFixture& f) {
    Models m;
    m.classifier = std::make_shared<classifier::TableClassifier>(f.classifier());
    m.lm = std::make_shared<langmodel::CharLM>(dato_lm());
    return m;
}

struct SynthSetup {
    classifier::SymbolAlphabet alphabet = classifier::SymbolAlphabet::default_latin();
    eval::GlyphSet glyphs = eval::GlyphSet::builtin();
    std::vector<std::string> lexicon = read_words(std::filesystem::path(HTR_TEST_DATA) / "lexicon.txt");
    Models models;

    SynthSetup() {
        std::mt19937_64 rng(5);
        const auto corpus = langmodel::read_corpus(std::filesystem::path(HTR_TEST_DATA) / "latin", alphabet.text_chars());
        models = eval::synth_models(glyphs, alphabet, lexicon, corpus.words, 300, rng);
    }
};

const SynthSetup& synth_setup() {
    static const SynthSetup setup;
    return setup;
}

std::vector<std::string> top_texts(const std::vector<WordResult>& results) {
    std::vector<std::string> out;
    for (const auto& r : results) out.push_back(r.transcriptions.empty() ? std::string() : r.transcriptions[0].text);
    return out;
}

}  // namespace

TEST_CASE("dato word end to end") {
    const auto f = test::dato_fixture();
    const auto models = dato_models(f);
    PipelineConfig cfg;
    const auto r = transcribe_word({f.image, "page", 0, 0}, models, cfg);
    REQUIRE_FALSE(r.untranscribed);
    CHECK(r.error.empty());
    CHECK(r.word_id == "page_000_000");
    CHECK(r.transcriptions[0].text == "dato");
    for (std::size_t i = 0; i < r.transcriptions.size(); ++i) {
        CHECK(r.transcriptions[i].rank == static_cast<int>(i) + 1);
        if (i > 0) CHECK(r.transcriptions[i - 1].log_word_prob >= r.transcriptions[i].log_word_prob);
    }
}

TEST_CASE("no surviving edge leaves the word untranscribed") {
    const auto f = test::dato_fixture();
    const auto models = dato_models(f);
    PipelineConfig cfg;
    cfg.lattice.eta = 1e-6;
    const auto r = transcribe_word({f.image, "page", 0, 0}, models, cfg);
    CHECK(r.untranscribed);
    CHECK(r.transcriptions.empty());
}

TEST_CASE("an empty word is untranscribed with an error") {
    const auto f = test::dato_fixture();
    const auto models = dato_models(f);
    const auto r = transcribe_word({BinaryImage(10, 10), "page", 0, 0}, models, {});
    CHECK(r.untranscribed);
    CHECK_FALSE(r.error.empty());
}

TEST_CASE("config json round trip and validation") {
    PipelineConfig cfg;
    cfg.lattice.eta = 0.3;
    cfg.lattice.q = 4;
    cfg.lm_path = "/models/lm.txt";
    cfg.classifier_path = "/models/cls.bin";
    cfg.method = segmentation::Method::over;
    cfg.parallelism = 3;
    cfg.decode = false;
    const auto back = PipelineConfig::from_json(cfg.to_json());
    CHECK(back.lattice.eta == 0.3);
    CHECK(back.lattice.q == 4);
    CHECK(back.lm_path == cfg.lm_path);
    CHECK(back.classifier_path == cfg.classifier_path);
    CHECK(back.method == segmentation::Method::over);
    CHECK(back.parallelism == 3);
    CHECK_FALSE(back.decode);

    const auto rel = PipelineConfig::from_json(R"({"lm": "lm.txt"})", "/base");
    CHECK(rel.lm_path == std::filesystem::path("/base/lm.txt"));

    CHECK_THROWS_AS(PipelineConfig::from_json(R"({"lattice": {"eta": 0}})"), Error);
    CHECK_THROWS_AS(PipelineConfig::from_json(R"({"lattice": {"theta1": 0.05, "theta2": 0.1}})"), Error);
    CHECK_THROWS_AS(PipelineConfig::from_json(R"({"parallelism": 0})"), Error);
    CHECK_THROWS_AS(PipelineConfig::from_json(R"({"method": "oval"})"), Error);
    CHECK_THROWS_AS(PipelineConfig::from_json("[1, 2]"), Error);
    CHECK_THROWS_AS(PipelineConfig::from_json("{"), Error);
}

TEST_CASE("results jsonl round trip keeps infinite scores") {
    WordResult a;
    a.word_id = "p_000_001";
    a.width = 40;
    a.transcriptions = {{"dato", -3.5, 1, false}, {"dito", -std::numeric_limits<double>::infinity(), 2, true}};
    a.timing_ms = 1.25;
    WordResult b;
    b.word_id = "p_000_002";
    b.untranscribed = true;
    b.error = "word image has no ink";

    const auto path = std::filesystem::temp_directory_path() / "htr_results_test.jsonl";
    const std::vector<WordResult> rows{a, b};
    write_results(path, rows);
    const auto back = read_results(path);
    std::filesystem::remove(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].word_id == a.word_id);
    CHECK(back[0].width == 40);
    REQUIRE(back[0].transcriptions.size() == 2);
    CHECK(back[0].transcriptions[0].log_word_prob == -3.5);
    CHECK(std::isinf(back[0].transcriptions[1].log_word_prob));
    CHECK(back[0].transcriptions[1].decoded);
    CHECK(back[1].untranscribed);
    CHECK(back[1].error == b.error);
    CHECK_THROWS_AS(WordResult::from_json("{\"width\": 3}"), Error);
}

TEST_CASE("models load from config paths") {
    const auto dir = std::filesystem::temp_directory_path() / "htr_models_test";
    std::filesystem::create_directories(dir);
    const auto alphabet = classifier::SymbolAlphabet::default_latin();
    std::vector<double> weights(alphabet.size() * (classifier::kFeatureCount + 1), 0.0);
    classifier::ReferenceClassifier(alphabet, weights).save(dir / "cls.bin");
    dato_lm().save(dir / "lm.txt");
    std::ofstream(dir / "config.json") << R"({"classifier": "cls.bin", "lm": "lm.txt", "lattice": {"q": 4}})";

    const auto cfg = PipelineConfig::load(dir / "config.json");
    const auto models = Models::load(cfg);
    CHECK(models.classifier->alphabet() == alphabet);
    CHECK(models.lm->q() == 6);

    std::ofstream(dir / "bad.json") << R"({"classifier": "cls.bin"})";
    CHECK_THROWS_AS(Models::load(PipelineConfig::load(dir / "bad.json")), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("blank page gives no words") {
    const auto& s = synth_setup();
    GrayImage page(200, 100);
    CHECK(transcribe_page(page, "blank", s.models, {}).empty());
}

TEST_CASE("synthetic page is transcribed in reading order") {
    const auto& s = synth_setup();
    std::mt19937_64 rng(21);
    eval::LayoutOptions layout;
    layout.words_per_line = 4;
    layout.lines_per_page = 2;
    const auto corpus = eval::synth_generate(s.glyphs, s.alphabet, s.lexicon, 8, rng, layout);
    REQUIRE(corpus.pages.size() == 1);
    const auto& page = corpus.pages[0];
    const auto results = transcribe_page(page.image, page.id, s.models, {});
    REQUIRE(results.size() == 8);
    int exact = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        CHECK(results[i].word_id == page.words[i].id);
        if (!results[i].transcriptions.empty() && results[i].transcriptions[0].text == corpus.truth.at(page.words[i].id))
            ++exact;
    }
    CHECK(exact >= 6);
}

TEST_CASE("parallel and repeated runs agree") {
    const auto& s = synth_setup();
    std::mt19937_64 rng(8);
    const auto corpus = eval::synth_generate(s.glyphs, s.alphabet, s.lexicon, 12, rng);
    std::vector<imaging::WordImage> words;
    for (const auto& p : corpus.pages) {
        auto ws = imaging::preprocess_page(p.image, p.id);
        words.insert(words.end(), ws.begin(), ws.end());
    }
    REQUIRE(words.size() == 12);
    PipelineConfig cfg;
    const auto serial = transcribe_words(words, s.models, cfg);
    cfg.parallelism = 4;
    const auto parallel = transcribe_words(words, s.models, cfg);
    const auto again = transcribe_words(words, s.models, cfg);
    CHECK(top_texts(serial) == top_texts(parallel));
    CHECK(top_texts(parallel) == top_texts(again));
    for (std::size_t i = 0; i < words.size(); ++i) {
        CHECK(serial[i].word_id == words[i].id());
        CHECK(parallel[i].word_id == words[i].id());
        REQUIRE(serial[i].transcriptions.size() == parallel[i].transcriptions.size());
        for (std::size_t k = 0; k < serial[i].transcriptions.size(); ++k)
            CHECK(serial[i].transcriptions[k].log_word_prob == parallel[i].transcriptions[k].log_word_prob);
    }
}

TEST_CASE("synthetic training is deterministic for a seed") {
    const auto& s = synth_setup();
    std::mt19937_64 a(3), b(3);
    const auto x = eval::synth_training_samples(s.glyphs, s.alphabet, s.lexicon, 25.0, 20, a);
    const auto y = eval::synth_training_samples(s.glyphs, s.alphabet, s.lexicon, 25.0, 20, b);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(x[i].label == y[i].label);
        CHECK(x[i].image == y[i].image);
    }
}
