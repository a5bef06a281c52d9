#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include "doctest.h"
#include "htr/classifier.hpp"
#include "htr/png_io.hpp"

using namespace htr;
using namespace htr::classifier;

namespace {

BinaryImage checkerboard(int side, int cell) {
    BinaryImage img(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            if (((x / cell) + (y / cell)) % 2 == 0) img.set(x, y);
    return img;
}

// Jittered bar: vertical for class 0, horizontal for class 1.
BinaryImage bar_glyph(std::mt19937_64& rng, bool vertical) {
    std::uniform_int_distribution<int> offset(-6, 6), len(30, 44);
    BinaryImage img(kSampleSide, kSampleSide);
    const int c = 28 + offset(rng), l = len(rng);
    const int start = (kSampleSide - l) / 2;
    for (int a = start; a < start + l; ++a)
        for (int t = c - 2; t <= c + 2; ++t) vertical ? img.set(t, a) : img.set(a, t);
    return img;
}

SymbolAlphabet three_class() {
    return SymbolAlphabet({{"a", 'a'}, {"b", 'b'}, {"nonchar", '\0'}});
}

std::vector<LabeledSample> bars(std::mt19937_64& rng, int per_class) {
    std::vector<LabeledSample> out;
    for (int i = 0; i < per_class; ++i) {
        out.push_back({bar_glyph(rng, true), 0, Origin::synthetic});
        out.push_back({bar_glyph(rng, false), 1, Origin::synthetic});
    }
    return out;
}

}  // namespace

TEST_CASE("default alphabet") {
    const auto a = SymbolAlphabet::default_latin();
    CHECK(a.size() == 23);
    CHECK(a[a.nonchar_index()].name == "nonchar");
    CHECK(a.index_of("⊗") == a.nonchar_index());
    CHECK(a[a.index_of("d-tall")].text == 'd');
    CHECK(a[a.index_of("s-long")].text == 's');
    CHECK(a.text_chars() == "abcdefghilmnopqrstux");
    CHECK_THROWS_AS(a.index_of("z"), Error);

    CHECK_THROWS_AS(SymbolAlphabet({{"a", 'a'}, {"a", 'a'}, {"nonchar", 0}}), Error);
    CHECK_THROWS_AS(SymbolAlphabet({{"a", 'a'}, {"b", 'b'}}), Error);

    const auto parsed = SymbolAlphabet::parse("# comment\na\nb\nd-tall d\n⊗\n");
    CHECK(parsed.size() == 4);
    CHECK(parsed.nonchar_index() == 3);
    CHECK(parsed[2].text == 'd');
}

TEST_CASE("class distribution validation") {
    CHECK(ClassDistribution::one_hot(3, 1).is_valid(3));
    CHECK_FALSE(ClassDistribution{{0.5, 0.6, 0.0}}.is_valid(3));
    CHECK_FALSE(ClassDistribution{{1.0, 0.0}}.is_valid(3));
    CHECK_FALSE(ClassDistribution{{1.5, -0.5, 0.0}}.is_valid(3));
    CHECK(ClassDistribution{{0.2, 0.3, 0.5}}.is_valid(3));
}

TEST_CASE("normalize_sample") {
    std::mt19937 rng(2);
    std::bernoulli_distribution ink(0.3);
    BinaryImage random56(56, 56);
    for (int y = 0; y < 56; ++y)
        for (int x = 0; x < 56; ++x)
            if (ink(rng)) random56.set(x, y);
    random56.set(0, 0);
    SUBCASE("56x56 is unchanged") { CHECK(normalize_sample(random56) == random56); }

    SUBCASE("112x112 downscales 2:1 by majority") {
        // 2-px checker cells collapse to a 1-px checker.
        CHECK(normalize_sample(checkerboard(112, 2)) == checkerboard(56, 1));
        // 1-px checker: every 2x2 box is a 2-2 tie, which goes to ink.
        CHECK(normalize_sample(checkerboard(112, 1)).ink_count() == 56u * 56u);

        BinaryImage big(112, 112);
        std::bernoulli_distribution half(0.5);
        for (int y = 0; y < 112; ++y)
            for (int x = 0; x < 112; ++x)
                if (half(rng)) big.set(x, y);
        BinaryImage expected(56, 56);
        for (int y = 0; y < 56; ++y)
            for (int x = 0; x < 56; ++x) {
                int n = big.at(2 * x, 2 * y) + big.at(2 * x + 1, 2 * y) + big.at(2 * x, 2 * y + 1) +
                        big.at(2 * x + 1, 2 * y + 1);
                if (n >= 2) expected.set(x, y);
            }
        CHECK(normalize_sample(big) == expected);
    }

    SUBCASE("10x56 is centered with a 23 px left pad") {
        BinaryImage narrow(10, 56, true);
        const auto out = normalize_sample(narrow);
        CHECK(out.width() == 56);
        CHECK(out.ink_count() == 560u);
        for (int y = 0; y < 56; ++y) {
            CHECK_FALSE(out.at(22, y));
            CHECK(out.at(23, y));
            CHECK(out.at(32, y));
            CHECK_FALSE(out.at(33, y));
        }
    }

    SUBCASE("upscaling is nearest neighbor") {
        auto tiny = BinaryImage::from_ascii({"#.", ".#"});
        const auto out = normalize_sample(tiny);
        CHECK(out.ink_count() == 2u * 28u * 28u);
        CHECK(out.at(0, 0));
        CHECK(out.at(27, 27));
        CHECK_FALSE(out.at(28, 0));
        CHECK(out.at(55, 55));
    }

    SUBCASE("idempotent") {
        std::mt19937_64 r64(3);
        for (int t = 0; t < 10; ++t) {
            const auto once = normalize_sample(bar_glyph(r64, t % 2 == 0));
            CHECK(normalize_sample(once) == once);
        }
        const auto wide = normalize_sample(BinaryImage(30, 7, true));
        CHECK(normalize_sample(wide) == wide);
    }

    CHECK_THROWS_AS(normalize_sample(BinaryImage()), Error);
    CHECK_THROWS_AS(normalize_sample(BinaryImage(5, 5)), Error);
}

TEST_CASE("augment") {
    std::mt19937_64 rng(7);
    const LabeledSample s{bar_glyph(rng, true), 4, Origin::crowd};

    CHECK(apply_affine(s.image, AffineParams{}) == s.image);

    std::mt19937_64 r1(99), r2(99);
    const auto a1 = augment(s, r1);
    const auto a2 = augment(s, r2);
    CHECK(fnv1a_hash(a1.image) == fnv1a_hash(a2.image));

    for (int i = 0; i < 50; ++i) {
        const auto a = augment(s, rng);
        CHECK(a.image.width() == 56);
        CHECK(a.image.height() == 56);
        CHECK(a.label == 4u);
        CHECK(a.origin == Origin::augmented);
        CHECK(a.image.ink_count() > 0);
    }

    // Pure shift moves ink by whole pixels.
    AffineParams shift;
    shift.shift_x = 3;
    const auto moved = apply_affine(s.image, shift);
    for (const auto& p : s.image.ink_pixels())
        if (p.x + 3 < 56) CHECK(moved.at(p.x + 3, p.y));

    // A lone pixel at the corner vanishes under any sizeable shift away from it.
    BinaryImage corner(56, 56);
    corner.set(0, 0);
    AffineParams away;
    away.shift_x = -3;
    CHECK(apply_affine(corner, away).ink_count() == 0u);
}

TEST_CASE("balance_training_set") {
    const auto alphabet = three_class();
    std::mt19937_64 rng(5);
    std::vector<LabeledSample> samples;
    for (int i = 0; i < 200; ++i) samples.push_back({bar_glyph(rng, true), 0, Origin::crowd});
    for (int i = 0; i < 1500; ++i) samples.push_back({bar_glyph(rng, false), 1, Origin::crowd});
    for (int i = 0; i < 1000; ++i) samples.push_back({bar_glyph(rng, i % 2 == 0), 2, Origin::crowd});

    const auto out = balance_training_set(samples, alphabet, 1000, rng);
    CHECK(out.size() == 3000u);
    std::map<std::size_t, int> hist, augmented;
    for (const auto& s : out) {
        ++hist[s.label];
        if (s.origin == Origin::augmented) ++augmented[s.label];
    }
    CHECK(hist[0] == 1000);
    CHECK(hist[1] == 1000);
    CHECK(hist[2] == 1000);
    CHECK(augmented[0] == 800);
    CHECK(augmented[1] == 0);
    CHECK(augmented[2] == 0);

    // Exactly on target: the class comes back unchanged.
    std::vector<std::uint64_t> in_hashes, out_hashes;
    for (const auto& s : samples)
        if (s.label == 2) in_hashes.push_back(fnv1a_hash(s.image));
    for (const auto& s : out)
        if (s.label == 2) out_hashes.push_back(fnv1a_hash(s.image));
    CHECK(in_hashes == out_hashes);

    std::vector<LabeledSample> missing(samples.begin(), samples.begin() + 200);
    try {
        balance_training_set(missing, alphabet, 10, rng);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
}

TEST_CASE("balance_training_set with 23 classes x 1000 gives 23000 uniform samples") {
    const auto alphabet = SymbolAlphabet::default_latin();
    std::mt19937_64 rng(11);
    std::vector<LabeledSample> samples;
    for (std::size_t c = 0; c < alphabet.size(); ++c) {
        for (int i = 0; i < 1000; ++i) {
            BinaryImage img(56, 56);
            img.set(static_cast<int>(c), i % 56);
            img.set(30 + i % 20, i / 56);
            samples.push_back({std::move(img), c, Origin::crowd});
        }
    }
    const auto out = balance_training_set(samples, alphabet, 1000, rng);
    CHECK(out.size() == 23000u);
    std::vector<int> hist(alphabet.size(), 0);
    bool any_augmented = false;
    for (const auto& s : out) {
        ++hist[s.label];
        any_augmented |= s.origin == Origin::augmented;
    }
    CHECK(std::all_of(hist.begin(), hist.end(), [](int n) { return n == 1000; }));
    CHECK_FALSE(any_augmented);
}

TEST_CASE("reference classifier on two separable classes") {
    const auto alphabet = three_class();
    std::mt19937_64 data_rng(21);
    const auto train = bars(data_rng, 150);
    const auto test = bars(data_rng, 50);

    std::mt19937_64 rng(1);
    const auto model = train_reference(train, alphabet, TrainOptions{}, rng);
    int correct = 0;
    for (const auto& s : train) {
        const auto d = model.classify_normalized(s.image);
        const auto best = std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin();
        correct += static_cast<std::size_t>(best) == s.label;
    }
    CHECK(correct >= static_cast<int>(0.99 * static_cast<double>(train.size())));
    correct = 0;
    for (const auto& s : test) {
        const auto d = model.classify(s.image);
        correct += static_cast<std::size_t>(std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin()) == s.label;
    }
    CHECK(correct >= 99);

    std::mt19937_64 rng2(1);
    const auto again = train_reference(train, alphabet, TrainOptions{}, rng2);
    CHECK(again.weights() == model.weights());

    std::mt19937 noise(4);
    std::bernoulli_distribution ink(0.2);
    for (int t = 0; t < 20; ++t) {
        BinaryImage img(20 + t, 30);
        img.set(0, 0);
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                if (ink(noise)) img.set(x, y);
        CHECK(model.classify(img).is_valid(alphabet.size()));
    }

    const std::vector<LabeledSample> one_class(train.begin(), train.begin() + 1);
    CHECK_THROWS_AS(train_reference(one_class, alphabet, TrainOptions{}, rng), Error);
}

TEST_CASE("model file round trip") {
    const auto alphabet = three_class();
    std::mt19937_64 rng(8);
    const auto model = train_reference(bars(rng, 20), alphabet, TrainOptions{2, 0.5, 8, 0.0}, rng);
    const auto bytes = model.serialize();
    CHECK(bytes.size() == 8 + 4 + (1 + 1 + 1) * 2 + (1 + 7 + 1) + 8 + 3 * 3137 * 8);
    const auto back = ReferenceClassifier::deserialize(bytes);
    CHECK(back.alphabet() == alphabet);
    CHECK(back.weights() == model.weights());

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(ReferenceClassifier::deserialize(truncated), Error);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(ReferenceClassifier::deserialize(bad), Error);

    const auto path = std::filesystem::temp_directory_path() / "htr_test_model.bin";
    model.save(path);
    CHECK(ReferenceClassifier::load(path).weights() == model.weights());
    std::filesystem::remove(path);
}

TEST_CASE("table classifier") {
    const auto alphabet = three_class();
    const auto img = BinaryImage::from_ascii({"#.", "##"});
    const ClassDistribution stored{{0.7, 0.2, 0.1}};
    const auto fallback = ClassDistribution::one_hot(3, 2);
    TableClassifier table(alphabet, {{fnv1a_hash(img), stored}}, fallback);
    CHECK(table.classify(img).probs == stored.probs);
    CHECK(table.classify(BinaryImage::from_ascii({"##"})).probs == fallback.probs);

    CHECK_THROWS_AS(TableClassifier(alphabet, {{1, ClassDistribution{{0.5, 0.4, 0.0}}}}, fallback), Error);
    CHECK_THROWS_AS(TableClassifier(alphabet, {}, ClassDistribution{{1.0}}), Error);
}

TEST_CASE("manifest round trip") {
    const auto alphabet = three_class();
    std::mt19937_64 rng(9);
    auto samples = bars(rng, 3);
    samples[0].origin = Origin::augmented;
    const auto dir = std::filesystem::temp_directory_path() / "htr_test_manifest";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_manifest(dir / "manifest.jsonl", samples, alphabet);
    const auto back = read_manifest(dir / "manifest.jsonl", alphabet);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(back[i].image == samples[i].image);
        CHECK(back[i].label == samples[i].label);
        CHECK(back[i].origin == samples[i].origin);
    }
    std::filesystem::remove_all(dir);
}
