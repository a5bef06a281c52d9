// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "htr/decoding.hpp"
#include "htr/eval.hpp"
#include "htr/labeling.hpp"
#include "htr/lattice.hpp"
#include "htr/synth.hpp"
#include "test_fixtures.hpp"

namespace fs = std::filesystem;
using namespace htr;
using classifier::ClassDistribution;
using classifier::SymbolAlphabet;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("FAILED " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream o;
    o.precision(digits);
    o << v;
    return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ---------------------------------------------------------------- fixtures

ClassDistribution dist_of(const SymbolAlphabet& a, std::vector<std::pair<std::string, double>> entries) {
    ClassDistribution d;
    d.probs.assign(a.size(), 0.0);
    double rest = 1.0;
    for (const auto& [name, p] : entries) {
        d.probs[a.index_of(name)] = p;
        rest -= p;
    }
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (d.probs[i] == 0.0 && !a.is_nonchar(i)) free.push_back(i);
    for (auto i : free) d.probs[i] = rest / static_cast<double>(free.size());
    return d;
}

std::vector<std::string> names(const std::optional<std::vector<lattice::Label>>& labels, const SymbolAlphabet& a) {
    std::vector<std::string> out;
    if (labels)
        for (const auto& l : *labels) out.push_back(a[l.symbol].name);
    return out;
}

langmodel::CharLM dato_lm(langmodel::Smoothing s = langmodel::Smoothing::stupid_backoff) {
    const std::vector<std::string> words{"dato", "data", "datum", "dedit", "dicto", "dito", "ita", "id",
                                         "ad", "dat", "do", "tota", "dixit", "datio", "oda", "tradito"};
    return langmodel::CharLM::train(words, SymbolAlphabet::default_latin().text_chars(), {6, s, 0.4});
}

lattice::Lattice random_lattice(std::mt19937& rng, int n, const std::string& letters) {
    lattice::Lattice lat;
    for (int v = 0; v < n; ++v) lat.vertices.push_back(v * 5);
    std::bernoulli_distribution has(0.45);
    std::uniform_int_distribution<int> count(1, 3);
    std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (!has(rng)) continue;
            lattice::Edge e{i, j, {}};
            std::set<char> used;
            for (int t = count(rng); t > 0; --t) {
                const char c = letters[pick(rng)];
                if (used.insert(c).second) e.labels.push_back({0, c, 0.5});
            }
            lat.edges.push_back(e);
        }
    return lat;
}

std::vector<std::string> all_paths(const lattice::Lattice& lat, int v) {
    std::vector<std::string> out;
    bool any = false;
    for (const auto& e : lat.edges) {
        if (e.from != v) continue;
        any = true;
        const auto rest = all_paths(lat, e.to);
        for (const auto& l : e.labels)
            for (const auto& r : rest) out.push_back(l.text + r);
    }
    if (!any) out.push_back("");
    return out;
}

std::vector<std::string> sorted_texts(const std::vector<lattice::Candidate>& c) {
    std::vector<std::string> out;
    for (const auto& x : c) out.push_back(x.text);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> random_words(std::mt19937& rng, const std::string& alphabet, int n, int max_len) {
    std::uniform_int_distribution<int> len(1, max_len);
    std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
        std::string w;
        for (int k = len(rng); k > 0; --k) w += alphabet[ch(rng)];
        out.push_back(w);
    }
    return out;
}

std::size_t edit_oracle(const std::string& a, const std::string& b) {
    if (a.empty()) return b.size();
    if (b.empty()) return a.size();
    const std::string ra = a.substr(1), rb = b.substr(1);
    return std::min({edit_oracle(ra, rb) + (a[0] == b[0] ? 0 : 1), edit_oracle(ra, b) + 1, edit_oracle(a, rb) + 1});
}

class HashClassifier final : public classifier::CharacterClassifier {
public:
    explicit HashClassifier(SymbolAlphabet a) : alphabet_(std::move(a)) {}
    ClassDistribution classify(const BinaryImage& img) const override {
        std::mt19937_64 rng(fnv1a_hash(img));
        std::exponential_distribution<double> e(1.0);
        ClassDistribution d;
        double sum = 0.0;
        for (std::size_t i = 0; i < alphabet_.size(); ++i) {
            d.probs.push_back(std::pow(e(rng), 3.0));
            sum += d.probs.back();
        }
        for (auto& p : d.probs) p /= sum;
        return d;
    }
    const SymbolAlphabet& alphabet() const override { return alphabet_; }

private:
    SymbolAlphabet alphabet_;
};

std::vector<std::string> read_words(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

// ---------------------------------------------------------------- 1

Outcome worked_examples() {
    Outcome o;
    const auto a = SymbolAlphabet::default_latin();
    o.require(names(lattice::select_labels(dist_of(a, {{"a", 0.8}, {"o", 0.1}, {"d", 0.05}}), a, 0.8, 0.1), a) ==
                  std::vector<std::string>{"a"},
              "select_labels {a:.8,o:.1,d:.05} -> [a]");
    o.require(names(lattice::select_labels(dist_of(a, {{"a", 0.75}, {"o", 0.05}, {"d", 0.05}}), a, 0.8, 0.1), a) ==
                  std::vector<std::string>{"a"},
              "select_labels {a:.75,o:.05,d:.05} -> [a]");
    o.require(names(lattice::select_labels(dist_of(a, {{"a", 0.5}, {"o", 0.4}, {"d", 0.05}}), a, 0.8, 0.1), a) ==
                  std::vector<std::string>{"a", "o"},
              "select_labels {a:.5,o:.4,d:.05} -> [a,o]");

    auto variants = decoding::counterpart_variants("dito", decoding::CounterpartSets({"ai", "co"}));
    std::sort(variants.begin(), variants.end());
    o.require(variants == std::vector<std::string>{"datc", "dato", "ditc", "dito"}, "dito variants");

    const auto f = test::dato_fixture();
    const auto clf = f.classifier();
    const auto lat = lattice::build_lattice(f.segments, clf, {});
    const auto texts = sorted_texts(lattice::enumerate_candidates(lat, dato_lm(), {}));
    o.require(texts == std::vector<std::string>{"daid", "dato", "diid", "dito"}, "dato lattice candidates");
    o.note("select_labels 3/3, variants 4/4, dato candidates " + std::to_string(texts.size()));
    return o;
}

// ---------------------------------------------------------------- 2

Outcome oracle_equivalences() {
    Outcome o;
    std::mt19937 rng(12);
    const auto lm = dato_lm();
    lattice::LatticeParams free_params;
    free_params.beta = 0.0;
    int lattices_ok = 0;
    std::uniform_int_distribution<int> n(1, 8);
    for (int t = 0; t < 100; ++t) {
        const auto lat = random_lattice(rng, n(rng), "adiot");
        auto oracle = all_paths(lat, 0);
        std::erase(oracle, std::string());
        std::sort(oracle.begin(), oracle.end());
        lattices_ok += sorted_texts(lattice::enumerate_candidates(lat, lm, free_params)) == oracle;
    }
    o.require(lattices_ok == 100, "enumeration vs all paths " + std::to_string(lattices_ok) + "/100");

    int decode_ok = 0;
    const decoding::CounterpartSets sets({"ab", "cd"});
    for (int t = 0; t < 100; ++t) {
        const auto smoothing = t % 2 == 0 ? langmodel::Smoothing::stupid_backoff : langmodel::Smoothing::none;
        const auto tiny = langmodel::CharLM::train(random_words(rng, "abcd", 20, 5), "abcd", {3, smoothing, 0.4});
        const auto w = random_words(rng, "abcd", 1, 4).front();
        const std::vector<lattice::Candidate> cands{{w, tiny.log_word_prob(w), {}}};
        const auto out = decoding::decode(cands, tiny, sets, 5);
        decode_ok += !out.empty() && out[0].text == decoding::brute_force_decode(w, tiny, sets);
    }
    o.require(decode_ok == 100, "decode vs brute force " + std::to_string(decode_ok) + "/100");

    std::vector<std::string> ab{""};
    for (std::size_t k = 0; k < ab.size(); ++k)
        if (ab[k].size() < 6)
            for (char c : {'a', 'b'}) ab.push_back(ab[k] + c);
    std::size_t lev_ok = 0;
    for (const auto& x : ab)
        for (const auto& y : ab) lev_ok += eval::levenshtein(x, y) == edit_oracle(x, y);
    o.require(lev_ok == ab.size() * ab.size(), "levenshtein vs recursion");

    const std::vector<std::string> corpus{"ab", "ab", "ac"};
    const auto chain = langmodel::CharLM::train(corpus, "abc", {2, langmodel::Smoothing::none, 0.4});
    int chain_ok = 0, chain_total = 0;
    for (const std::string w : {"ab", "ac", "a", "abc", "ba", "aab"}) {
        ++chain_total;
        double product = 1.0;
        const std::string framed = "$" + w + "^";
        for (std::size_t i = 1; i < framed.size(); ++i) product *= chain.cond_prob(framed.substr(i - 1, 1), framed[i]);
        chain_ok += chain.word_prob(w) == product;
    }
    o.require(chain_ok == chain_total, "word_prob chain " + std::to_string(chain_ok) + "/" + std::to_string(chain_total));
    o.require(chain.word_prob("ab") == 2.0 / 3.0, "word_prob(ab) = 2/3");
    o.note("lattices 100/100, decode 100/100, levenshtein " + std::to_string(lev_ok) + " pairs, chain " +
           std::to_string(chain_ok) + "/" + std::to_string(chain_total));
    return o;
}

// ---------------------------------------------------------------- 3

Outcome invariants() {
    Outcome o;
    std::mt19937 rng(31);
    const auto a = SymbolAlphabet::default_latin();

    std::vector<double> weights(a.size() * (classifier::kFeatureCount + 1));
    std::normal_distribution<double> gauss(0.0, 0.05);
    for (auto& w : weights) w = gauss(rng);
    const classifier::ReferenceClassifier ref(a, weights);
    int simplex_ok = 0;
    for (int t = 0; t < 100; ++t) simplex_ok += ref.classify(test::random_blob_word(rng, 30, 40)).is_valid(a.size(), 1e-9);
    o.require(simplex_ok == 100, "classifier outputs on the simplex");

    const std::string letters = "abcde";
    const auto words = random_words(rng, letters, 100, 7);
    const auto mle = langmodel::CharLM::train(words, letters, {5, langmodel::Smoothing::none, 0.4});
    std::set<std::string> contexts;
    for (const auto& [ctx, sym] : mle.entries()) contexts.insert(ctx);
    std::size_t sums_ok = 0;
    for (const auto& ctx : contexts) {
        double sum = 0.0;
        for (char s : letters + "^") sum += mle.cond_prob(ctx, s);
        sums_ok += std::abs(sum - 1.0) <= 1e-9;
    }
    o.require(sums_ok == contexts.size(), "MLE conditionals sum to one");

    const auto backoff = langmodel::CharLM::train(words, letters, {4, langmodel::Smoothing::stupid_backoff, 0.4});
    int mono_ok = 0;
    std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
    const auto prefixes = random_words(rng, letters, 1000, 6);
    for (const auto& t : prefixes) {
        const std::string longer = t + letters[pick(rng)];
        mono_ok += backoff.log_substring_prob(longer) <= backoff.log_substring_prob(t) &&
                   mle.log_substring_prob(longer) <= mle.log_substring_prob(t);
    }
    o.require(mono_ok == 1000, "substring probability monotone " + std::to_string(mono_ok) + "/1000");

    const auto lm = dato_lm();
    int prune_ok = 0;
    for (int t = 0; t < 100; ++t) {
        const auto lat = random_lattice(rng, 8, "adiot");
        lattice::LatticeParams free_params;
        free_params.beta = 0.0;
        const auto all = sorted_texts(lattice::enumerate_candidates(lat, lm, free_params));
        bool ok = true;
        for (double beta : {1e-16, 1e-6, 1e-3}) {
            lattice::LatticeParams p;
            p.beta = beta;
            const auto kept = sorted_texts(lattice::enumerate_candidates(lat, lm, p));
            ok &= std::includes(all.begin(), all.end(), kept.begin(), kept.end());
            for (const auto& s : kept)
                for (std::size_t k = 1; k <= s.size(); ++k) ok &= lm.log_substring_prob(s.substr(0, k)) >= std::log(beta);
        }
        prune_ok += ok;
    }
    o.require(prune_ok == 100, "pruned candidates are a sound subset " + std::to_string(prune_ok) + "/100");

    HashClassifier hash(a);
    int acyclic_ok = 0, ink_ok = 0;
    for (int t = 0; t < 100; ++t) {
        const auto word = test::random_blob_word(rng, 60, 24);
        bool conserved = true;
        for (auto method : {segmentation::Method::over, segmentation::Method::polygonal}) {
            const auto segs = segmentation::segment(word, method);
            BinaryImage cover(word.width(), word.height());
            std::size_t pixels = 0;
            for (const auto& s : segs)
                for (const auto& p : s.mask) {
                    conserved &= word.at(p.x, p.y) && !cover.at(p.x, p.y);
                    cover.set(p.x, p.y);
                    ++pixels;
                }
            conserved &= pixels == word.ink_count() && cover == word;
        }
        ink_ok += conserved;

        lattice::LatticeParams wide;
        wide.eta = 0.5;
        const auto lat = lattice::build_lattice(segmentation::polygonal_segment(imaging::crop_margins(word)), hash, wide);
        bool forward = true;
        for (const auto& e : lat.edges) forward &= e.from < e.to;
        acyclic_ok += forward;
    }
    o.require(acyclic_ok == 100, "lattice edges point forward");
    o.require(ink_ok == 100, "segmentation conserves ink " + std::to_string(ink_ok) + "/100");
    o.note("simplex 100, contexts " + std::to_string(contexts.size()) + ", extensions 1000, pruning 100, lattices 100, "
           "segmentations 200");
    return o;
}

// ---------------------------------------------------------------- 4 and 6

struct SynthRun {
    SymbolAlphabet alphabet = SymbolAlphabet::default_latin();
    eval::GlyphSet glyphs = eval::GlyphSet::builtin();
    std::vector<std::string> lexicon;
    pipeline::Models models;
    std::vector<imaging::WordImage> words;
    eval::GroundTruth truth;
};

std::vector<imaging::WordImage> page_words(const eval::SynthCorpus& corpus) {
    std::vector<imaging::WordImage> words;
    for (const auto& p : corpus.pages) {
        auto ws = imaging::preprocess_page(p.image, p.id);
        words.insert(words.end(), ws.begin(), ws.end());
    }
    return words;
}

/// Words rendered with one letter swapped for its counterpart; the truth keeps the real spelling.
std::size_t decoding_gain(const SynthRun& run, Outcome& o) {
    const auto sets = decoding::CounterpartSets::defaults();
    std::vector<imaging::WordImage> words;
    eval::GroundTruth truth;
    std::mt19937_64 rng(44);
    for (const auto& w : run.lexicon) {
        std::size_t at = w.size();
        for (std::size_t i = 0; i < w.size(); ++i)
            if (sets.group_of(w[i]).size() > 1) {
                at = i;
                break;
            }
        if (at == w.size()) continue;
        std::string shown = w;
        const auto group = sets.group_of(w[at]);
        shown[at] = group[0] == w[at] ? group[1] : group[0];
        auto rendered = eval::render_word(shown, run.glyphs, run.alphabet, rng);
        imaging::WordImage img{rendered.image, "confusable", 0, static_cast<int>(words.size())};
        truth[img.id()] = w;
        words.push_back(std::move(img));
    }
    pipeline::PipelineConfig cfg;
    cfg.decode = false;
    const auto plain = pipeline::transcribe_words(words, run.models, cfg);
    cfg.decode = true;
    const auto decoded = pipeline::transcribe_words(words, run.models, cfg);
    auto exact = [&](const std::vector<pipeline::WordResult>& rs) {
        std::size_t n = 0;
        for (const auto& r : rs) n += !r.transcriptions.empty() && r.transcriptions[0].text == truth.at(r.word_id);
        return n;
    };
    const auto before = exact(plain), after = exact(decoded);
    o.note("confusable fixture " + std::to_string(words.size()) + " words: exact " + std::to_string(before) +
           " undecoded, " + std::to_string(after) + " decoded");
    return after > before ? after - before : 0;
}

Outcome end_to_end(SynthRun& run) {
    Outcome o;
    const fs::path data(HTR_DATA_DIR);
    run.lexicon = read_words(data / "lexicon.txt");
    o.require(run.lexicon.size() == 60, "60-word lexicon");
    o.require(run.glyphs.templates.size() + 1 == run.alphabet.size(), "one glyph template per letter class");

    std::mt19937_64 rng(2024);
    std::vector<std::string> training_words;
    for (int r = 0; r < 4; ++r) training_words.insert(training_words.end(), run.lexicon.begin(), run.lexicon.end());
    const auto samples = eval::synth_training_samples(run.glyphs, run.alphabet, training_words, 25.0,
                                                      training_words.size() * 8, rng);
    const auto balanced = classifier::balance_training_set(samples, run.alphabet, 1000, rng);
    std::vector<std::size_t> per_class(run.alphabet.size(), 0);
    for (const auto& s : balanced) ++per_class[s.label];
    const bool even = std::all_of(per_class.begin(), per_class.end(), [](std::size_t c) { return c == 1000; });
    o.require(balanced.size() == 23000 && even, "23000 training samples split evenly over 23 classes");
    run.models.classifier = std::make_shared<classifier::ReferenceClassifier>(
        classifier::train_reference(balanced, run.alphabet, {}, rng));
    const auto corpus_words = langmodel::read_corpus(data / "latin", run.alphabet.text_chars()).words;
    run.models.lm = std::make_shared<langmodel::CharLM>(
        langmodel::CharLM::train(corpus_words, run.alphabet.text_chars(), {}));

    std::mt19937_64 page_rng(7);
    const auto corpus = eval::synth_generate(run.glyphs, run.alphabet, run.lexicon, 200, page_rng);
    run.truth = corpus.truth;
    run.words = page_words(corpus);
    o.require(run.words.size() == 200, "200 words recovered from the pages");

    const lattice::LatticeParams defaults;
    o.require(defaults.sigma == 25 && defaults.eta == 0.1 && defaults.theta1 == 0.8 && defaults.theta2 == 0.1 &&
                  defaults.beta == 1e-16 && defaults.q == 6,
              "default parameters");
    const auto results = pipeline::transcribe_words(run.words, run.models, {});
    const std::vector<int> ms{1, 3, 5, 10};
    const auto report = eval::compute_report(results, run.truth, ms);
    const double top1 = report.m_precision.at(1);
    o.require(top1 >= 0.80, "top-1 >= 0.80");
    o.require(report.mrr >= 0.85, "MRR >= 0.85");
    o.note("samples " + std::to_string(balanced.size()) + ", top-1 " + fmt(top1) + ", MRR " + fmt(report.mrr));

    const auto gain = decoding_gain(run, o);
    o.require(gain >= 1, "decoding adds at least one exact match");
    return o;
}

Outcome parameter_trends(const SynthRun& run) {
    Outcome o;
    if (run.words.empty() || !run.models.classifier) {
        o.require(false, "synthetic run unavailable");
        return o;
    }
    eval::SweepOptions opt;
    opt.repeats = 15;
    lattice::LatticeParams base;
    std::vector<lattice::LatticeParams> etas;
    for (double eta : {0.05, 0.1, 0.3}) {
        auto p = base;
        p.eta = eta;
        etas.push_back(p);
    }
    const auto eta_rows = eval::sweep(etas, run.words, run.truth, run.models, {}, opt);
    bool rising = true;
    std::string times;
    for (std::size_t i = 0; i < eta_rows.size(); ++i) {
        if (i > 0) rising &= eta_rows[i].report.mwpt_ms >= eta_rows[i - 1].report.mwpt_ms;
        times += (i ? " / " : "") + fmt(eta_rows[i].report.mwpt_ms) + " ms";
    }
    o.require(rising, "MWPT non-decreasing in eta");

    std::vector<lattice::LatticeParams> betas;
    for (double beta : {1e-16, 1e-4}) {
        auto p = base;
        p.beta = beta;
        betas.push_back(p);
    }
    eval::SweepOptions once;
    const auto beta_rows = eval::sweep(betas, run.words, run.truth, run.models, {}, once);
    o.require(beta_rows[0].report.mrr >= beta_rows[1].report.mrr, "MRR at beta 1e-16 >= MRR at beta 1e-4");
    o.note("MWPT at eta .05/.1/.3: " + times + "; MRR at beta 1e-16 " + fmt(beta_rows[0].report.mrr) + ", 1e-4 " +
           fmt(beta_rows[1].report.mrr));
    return o;
}

// ---------------------------------------------------------------- 5

Outcome metric_arithmetic() {
    Outcome o;
    auto result = [](const std::string& id, std::vector<std::string> texts) {
        pipeline::WordResult r;
        r.word_id = id;
        for (std::size_t i = 0; i < texts.size(); ++i) r.transcriptions.push_back({texts[i], 0.0, int(i) + 1, false});
        return r;
    };
    const std::vector<pipeline::WordResult> rs{result("a", {"dato"}), result("b", {"dito", "dato"}),
                                               result("c", {"diid"})};
    const eval::GroundTruth truth{{"a", "dato"}, {"b", "dato"}, {"c", "dato"}};
    o.require(eval::compute_report(rs, truth).mrr == 0.5, "MRR of ranks 1, 2, absent is 0.5");

    std::mt19937 rng(5);
    const std::vector<std::string> pool{"dato", "dito", "data", "ita", "id"};
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::uniform_int_distribution<int> count(0, 5);
    const std::vector<int> ms{1, 2, 3, 5, 10};
    int mono_ok = 0;
    for (int t = 0; t < 100; ++t) {
        std::vector<pipeline::WordResult> fixture;
        eval::GroundTruth gt;
        for (int k = 0; k <= count(rng); ++k) {
            std::vector<std::string> texts;
            for (int c = count(rng); c > 0; --c) {
                const auto& w = pool[pick(rng)];
                if (std::find(texts.begin(), texts.end(), w) == texts.end()) texts.push_back(w);
            }
            const std::string id = "w" + std::to_string(k);
            fixture.push_back(result(id, texts));
            gt[id] = pool[pick(rng)];
        }
        const auto rep = eval::compute_report(fixture, gt, ms);
        bool ok = true;
        for (std::size_t i = 1; i < ms.size(); ++i) ok &= rep.m_precision.at(ms[i - 1]) <= rep.m_precision.at(ms[i]);
        mono_ok += ok;
    }
    o.require(mono_ok == 100, "m-precision non-decreasing in m");

    const std::vector<lattice::Candidate> cands{{"dato", -1.0, {}}, {"do", -1.0, {}}};
    const auto kept = lattice::length_filter(cands, 66, {});
    o.require(kept.size() == 1 && kept[0].text == "dato", "width 66 keeps 4 letters (76 >= 59.4), drops 2 (38 < 59.4)");
    o.note("MRR 0.5, m-precision 100/100, length filter kept " + std::to_string(kept.size()) + " of 2");
    return o;
}

// ---------------------------------------------------------------- 7

Outcome labeling_logic() {
    Outcome o;
    const auto a = SymbolAlphabet::default_latin();
    std::mt19937 rng(3);
    labeling::SegmentPool pool;
    for (int i = 0; i < 60; ++i) pool.items.push_back({"s" + std::to_string(i), test::random_blob_word(rng, 12, 18), {}, 0, {}});
    for (const std::string name : {"a", "o"})
        pool.exemplars[a.index_of(name)].positives.push_back({"ex_" + name, test::random_blob_word(rng, 10, 10)});
    labeling::LabelingService service(pool);
    std::vector<labeling::LabelingTask> tasks;
    for (int k = 0; k < 5; ++k) tasks.push_back(service.create_task(a.index_of(k % 2 ? "o" : "a")));

    long long expected = 0;
    for (int w = 0; w < 50; ++w) expected += w % 6 + 1;
    std::atomic<int> conflicts{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < 50; ++w) {
        threads.emplace_back([&, w] {
            const auto& t = tasks[static_cast<std::size_t>(w % 5)];
            const std::vector<std::string> sel(t.grid.begin(), t.grid.begin() + (w % 6 + 1));
            const std::string worker = "worker" + std::to_string(w);
            service.submit_votes({t.task_id, worker, sel});
            try {
                service.submit_votes({t.task_id, worker, sel});
            } catch (const labeling::Conflict&) {
                ++conflicts;
            }
        });
    }
    for (auto& th : threads) th.join();
    long long tallied = 0;
    for (const auto& item : pool.items)
        for (const auto& [symbol, c] : service.tallies(item.id)) tallied += c;
    o.require(tallied == expected && service.status().votes == expected, "tallies equal the accepted selections");
    o.require(conflicts == 50 && service.status().submissions == 50, "one submission per (task, worker)");

    const auto nc = a.nonchar_index();
    o.require(labeling::finalize_tally({{a.index_of("a"), 5}, {a.index_of("o"), 1}}, 3, 2, nc) == a.index_of("a"),
              "majority");
    o.require(labeling::finalize_tally({{a.index_of("a"), 3}, {a.index_of("o"), 3}}, 3, 2, nc) == nc, "tie");
    o.require(!labeling::finalize_tally({{a.index_of("a"), 1}}, 3, 2, nc).has_value(), "under quorum");

    const auto done = service.finalize(3, 2);
    o.require(!done.empty(), "concurrent votes finalize items");

    // Export: items 0-3 go to 'a', items 4-7 tie between 'a' and 'o' and become nonchar.
    labeling::SegmentPool small;
    for (int i = 0; i < 8; ++i) small.items.push_back({"e" + std::to_string(i), test::random_blob_word(rng, 12, 18), {}, 0, {}});
    small.exemplars = pool.exemplars;
    labeling::LabelingService crowd(small);
    const auto ta = crowd.create_task(a.index_of("a"));
    const auto to = crowd.create_task(a.index_of("o"));
    for (int w = 0; w < 3; ++w) {
        const std::string worker = "crowd" + std::to_string(w);
        crowd.submit_votes({ta.task_id, worker, {"e0", "e1", "e2", "e3", "e4", "e5", "e6", "e7"}});
        crowd.submit_votes({to.task_id, worker, {"e4", "e5", "e6", "e7"}});
    }
    const auto exported_items = crowd.finalize(3, 2);
    const auto dir = fs::temp_directory_path() / "htr_acceptance_export";
    fs::remove_all(dir);
    bool trained = false;
    try {
        crowd.export_manifest(dir / "manifest.jsonl");
        const auto small_alphabet = SymbolAlphabet::parse("a\nnonchar\n");
        const auto samples = classifier::read_manifest(dir / "manifest.jsonl", small_alphabet);
        std::mt19937_64 r(1);
        const auto balanced = classifier::balance_training_set(samples, small_alphabet, 20, r);
        classifier::TrainOptions quick;
        quick.epochs = 2;
        const auto clf = classifier::train_reference(balanced, small_alphabet, quick, r);
        trained = samples.size() == 8 && clf.classify(samples[0].image).is_valid(small_alphabet.size(), 1e-9);
    } catch (const std::exception& e) {
        o.note(std::string("export failed: ") + e.what());
    }
    fs::remove_all(dir);
    o.require(exported_items.size() == 8, "export fixture finalizes 8 items");
    o.require(trained, "exported manifest trains a classifier");
    o.note("50 workers, " + std::to_string(expected) + " votes conserved, " + std::to_string(done.size()) +
           " finalized; export of 8 crowd labels trained");
    return o;
}

}  // namespace

int main() {
    SynthRun run;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 worked examples", worked_examples},
        {"2 oracle equivalences", oracle_equivalences},
        {"3 invariant suites", invariants},
        {"4 end-to-end synthetic run", [&] { return end_to_end(run); }},
        {"5 metric arithmetic", metric_arithmetic},
        {"6 parameter trends", [&] { return parameter_trends(run); }},
        {"7 labeling service logic", labeling_logic},
    };
    const std::map<std::string, double> budget_s{{"1 worked examples", 1.0},
                                                 {"2 oracle equivalences", 30.0},
                                                 {"3 invariant suites", 60.0},
                                                 {"4 end-to-end synthetic run", 600.0}};
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.require(false, std::string("threw: ") + e.what());
        }
        const double took = seconds_since(start);
        if (auto it = budget_s.find(name); it != budget_s.end() && took > it->second)
            o.require(false, "time " + fmt(took) + " s over " + fmt(it->second) + " s");
        std::string detail;
        for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
        std::printf("criterion %-28s %s  (%.2f s) %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", took, detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
