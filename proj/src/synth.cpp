#include "htr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <regex>

#include "htr/imaging.hpp"
#include "htr/png_io.hpp"

namespace htr::eval {

namespace {

// Glyph strokes live on a 36-row design grid scaled by kScale.
constexpr double kScale = 1.3;
constexpr double kXScale = 1.15;  // horizontal, keeps glyph spans inside sigma
constexpr double kXTop = 14, kBase = 27, kAsc = 3, kDesc = 34;
constexpr int kCanvasRows = static_cast<int>(37 * kScale) + 2;

struct Stroke {
    enum Kind { line, arc } kind;
    double a, b, c, d, e = 0, f = 0;  // line: x0 y0 x1 y1; arc: cx cy rx ry deg0 deg1
};

Stroke L(double x0, double y0, double x1, double y1) { return {Stroke::line, x0, y0, x1, y1}; }
// Angles in degrees, counterclockwise with 90 at the top.
Stroke A(double cx, double cy, double rx, double ry, double a0, double a1) {
    return {Stroke::arc, cx, cy, rx, ry, a0, a1};
}

std::map<std::string, std::vector<Stroke>> glyph_strokes() {
    const double xt = kXTop, bl = kBase, at = kAsc, db = kDesc;
    return {
        {"a", {A(5, 21, 4.5, 5.5, 0, 360), L(10, xt + 1, 10, bl)}},
        {"b", {L(1, at, 1, bl), A(6, 21, 4.5, 5.5, 0, 360)}},
        {"c", {A(6, 20.5, 5, 6.5, 45, 315)}},
        {"d", {A(5, 21, 4.5, 5.5, 0, 360), L(10, at, 10, bl)}},
        {"d-tall", {A(5.5, 21, 4.5, 5.5, 0, 360), L(10, 23, 9, 14), L(9, 14, 2, 6)}},
        {"e", {A(5.5, 20.5, 5, 6.5, 0, 320), L(0.5, 20.5, 10.5, 20.5)}},
        {"f", {L(3, at + 3, 3, db), A(7, at + 3, 4, 2.5, 0, 180), L(0, xt, 8, xt)}},
        {"g", {A(5.5, 19.5, 4.5, 5, 0, 360), L(10, xt, 10, db - 3), A(6, db - 3, 4, 2.5, 180, 360)}},
        {"h", {L(1, at, 1, bl), A(5.5, 19, 4.5, 4, 0, 180), L(10, 19, 10, bl)}},
        {"i", {L(1, xt + 1, 1, bl), L(1, xt - 6, 1, xt - 4)}},
        {"l", {L(1, at, 1, bl - 1), L(1, bl, 4, bl - 1)}},
        {"m",
         {L(1, xt, 1, bl), A(3.75, 19, 2.75, 4, 0, 180), L(6.5, 19, 6.5, bl), A(9.25, 19, 2.75, 4, 0, 180),
          L(12, 19, 12, bl)}},
        {"n", {L(1, xt, 1, bl), A(5, 19, 4, 4, 0, 180), L(9, 19, 9, bl)}},
        {"o", {A(5.5, 20.5, 5, 6.5, 0, 360)}},
        {"p", {L(1, xt, 1, db), A(6, 20.5, 4.5, 6, 0, 360)}},
        {"q", {A(5, 20.5, 4.5, 6, 0, 360), L(10, xt, 10, db)}},
        {"r", {L(1, xt, 1, bl), A(5, 18, 4, 3, 30, 180)}},
        {"s", {A(5, 17.5, 4, 3.5, 20, 270), A(5, 24, 4, 3, 90, -160)}},
        {"s-long", {L(3, at + 3, 3, db - 2), A(7, at + 3, 4, 2.5, 0, 180)}},
        {"t", {L(3, xt - 5, 3, bl - 2), A(6, bl - 2, 3, 2, 180, 300), L(0, xt, 8, xt)}},
        {"u", {L(1, xt, 1, bl - 4), A(5, bl - 4, 4, 4, 180, 360), L(9, xt, 9, bl)}},
        {"x", {L(0, xt, 10, bl), L(10, xt, 0, bl)}},
    };
}

struct Jitter {
    double sx = 1.0, sy = 1.0, slant = 0.0;
    int pen = 3;
};

BinaryImage render_strokes(const std::vector<Stroke>& strokes, const Jitter& j) {
    const int width = static_cast<int>(std::ceil(24 * kXScale * j.sx)) + 2 * j.pen + 4;
    BinaryImage canvas(width, kCanvasRows);
    auto stamp = [&](double x, double y) {
        const double bx = x + j.slant * (kBase - y);
        const double by = kBase + j.sy * (y - kBase);
        const int px = static_cast<int>(std::lround(bx * kXScale * j.sx - (j.pen - 1) / 2.0)) + j.pen;
        const int py = static_cast<int>(std::lround(by * kScale - (j.pen - 1) / 2.0));
        for (int dy = 0; dy < j.pen; ++dy)
            for (int dx = 0; dx < j.pen; ++dx) {
                const int xx = px + dx, yy = py + dy;
                if (xx >= 0 && yy >= 0 && xx < canvas.width() && yy < canvas.height()) canvas.set(xx, yy);
            }
    };
    for (const auto& s : strokes) {
        if (s.kind == Stroke::line) {
            const double len = std::hypot(s.c - s.a, s.d - s.b);
            const int steps = std::max(1, static_cast<int>(len * 4));
            for (int k = 0; k <= steps; ++k) {
                const double t = static_cast<double>(k) / steps;
                stamp(s.a + t * (s.c - s.a), s.b + t * (s.d - s.b));
            }
        } else {
            const int steps = std::max(8, static_cast<int>(std::abs(s.f - s.e) / 2));
            for (int k = 0; k <= steps; ++k) {
                const double deg = s.e + (s.f - s.e) * k / steps;
                const double rad = deg * std::numbers::pi / 180.0;
                stamp(s.a + s.c * std::cos(rad), s.b - s.d * std::sin(rad));
            }
        }
    }
    const Box b = ink_bounds(canvas);
    return crop(canvas, Box{b.left, 0, b.right, canvas.height()});
}

const std::vector<BinaryImage>& variants_of(const GlyphSet& glyphs, const std::string& name) {
    auto it = glyphs.templates.find(name);
    if (it == glyphs.templates.end() || it->second.empty()) throw Error("no glyph template for symbol " + name);
    return it->second;
}

std::size_t pick(std::size_t n, std::mt19937_64& rng) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

GlyphSet GlyphSet::builtin(int variants, std::uint64_t seed) {
    if (variants < 1) throw Error("glyph variants must be at least 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> sx(0.9, 1.1), sy(0.95, 1.05), slant(-0.08, 0.08), u(0.0, 1.0);
    GlyphSet set;
    for (const auto& [name, strokes] : glyph_strokes()) {
        auto& out = set.templates[name];
        for (int v = 0; v < variants; ++v) {
            Jitter j;
            if (v > 0) {
                j.sx = sx(rng);
                j.sy = sy(rng);
                j.slant = slant(rng);
                j.pen = u(rng) < 0.2 ? 4 : 3;
            }
            out.push_back(render_strokes(strokes, j));
        }
    }
    return set;
}

GlyphSet GlyphSet::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("glyph directory not found: " + dir.string());
    static const std::regex name_re(R"(^(.+?)(?:_(\d+))?\.png$)");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    GlyphSet set;
    int height = -1;
    for (const auto& f : files) {
        std::smatch m;
        const std::string fn = f.filename().string();
        if (!std::regex_match(fn, m, name_re)) continue;
        auto img = png::read_binary(f);
        if (img.ink_count() == 0) throw Error("glyph image without ink: " + f.string());
        if (height < 0) height = img.height();
        if (img.height() != height) throw Error("glyph images must share one height: " + f.string());
        set.templates[m[1].str()].push_back(std::move(img));
    }
    if (set.templates.empty()) throw Error("no glyph images in " + dir.string());
    return set;
}

void GlyphSet::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [name, imgs] : templates)
        for (std::size_t k = 0; k < imgs.size(); ++k)
            png::write_binary(dir / (name + "_" + std::to_string(k) + ".png"), imgs[k]);
}

BinaryImage nonchar_fragment(const GlyphSet& glyphs, std::mt19937_64& rng) {
    if (glyphs.templates.empty()) throw Error("empty glyph set");
    auto random_glyph = [&]() -> const BinaryImage& {
        auto it = glyphs.templates.begin();
        std::advance(it, static_cast<long>(pick(glyphs.templates.size(), rng)));
        return it->second[pick(it->second.size(), rng)];
    };
    std::uniform_real_distribution<double> frac(0.3, 0.6);
    for (int attempt = 0; attempt < 20; ++attempt) {
        const BinaryImage& g = random_glyph();
        const int cut = std::max(1, static_cast<int>(g.width() * frac(rng)));
        BinaryImage piece;
        switch (pick(3, rng)) {
            case 0: piece = crop(g, Box{0, 0, cut, g.height()}); break;
            case 1: piece = crop(g, Box{g.width() - cut, 0, g.width(), g.height()}); break;
            default: {
                const BinaryImage& h = random_glyph();
                const int cut2 = std::max(1, static_cast<int>(h.width() * frac(rng)));
                const int gap = static_cast<int>(pick(3, rng));
                piece = BinaryImage(cut + gap + cut2, std::max(g.height(), h.height()));
                for (int y = 0; y < g.height(); ++y)
                    for (int x = 0; x < cut; ++x)
                        if (g.at(g.width() - cut + x, y)) piece.set(x, y);
                for (int y = 0; y < h.height(); ++y)
                    for (int x = 0; x < cut2; ++x)
                        if (h.at(x, y)) piece.set(cut + gap + x, y);
            }
        }
        if (piece.ink_count() >= 4) return imaging::crop_margins(piece);
    }
    throw Error("could not cut a non-character fragment");
}

SynthWord render_word(const std::string& text, const GlyphSet& glyphs, const classifier::SymbolAlphabet& alphabet,
                      std::mt19937_64& rng, const RenderOptions& options) {
    if (text.empty()) throw Error("cannot render an empty word");
    if (options.min_gap < 0 || options.max_gap < options.min_gap) throw Error("invalid glyph gap range");
    struct Placed {
        const BinaryImage* img;
        int x, dy;
    };
    SynthWord w;
    w.text = text;
    std::vector<Placed> placed;
    std::vector<std::pair<int, int>> ligatures;  // x range [from, to)
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> gap(options.min_gap, options.max_gap), overlap(1, 3), shift(-1, 1);
    int cursor = 2, height = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        std::vector<std::size_t> choices;
        for (std::size_t s = 0; s < alphabet.size(); ++s) {
            if (alphabet.is_nonchar(s) || alphabet[s].text != text[i]) continue;
            if (alphabet[s].name == "s-long" && i + 1 == text.size()) continue;
            if (alphabet[s].name == "s" && i + 1 < text.size() && alphabet.find("s-long")) continue;
            choices.push_back(s);
        }
        if (choices.empty()) throw Error(std::string("no symbol for character '") + text[i] + "'");
        const std::size_t sym = choices[pick(choices.size(), rng)];
        const auto& vars = variants_of(glyphs, alphabet[sym].name);
        const BinaryImage& img = vars[pick(vars.size(), rng)];
        if (i > 0) {
            const int g = gap(rng);
            if (u(rng) < options.ligature_prob) ligatures.emplace_back(cursor - 1, cursor + g + overlap(rng) - 1);
            cursor += g;
        }
        placed.push_back({&img, cursor, shift(rng)});
        w.symbols.push_back(sym);
        cursor += img.width();
        height = std::max(height, img.height());
    }
    const int rows = height + 2;
    BinaryImage canvas(cursor + 2, rows);
    std::vector<int> owner(static_cast<std::size_t>(canvas.width()) * rows, -1);
    for (std::size_t gi = 0; gi < placed.size(); ++gi) {
        const auto& p = placed[gi];
        for (int y = 0; y < p.img->height(); ++y)
            for (int x = 0; x < p.img->width(); ++x)
                if (p.img->at(x, y)) {
                    const int cx = p.x + x, cy = y + 1 + p.dy;
                    canvas.set(cx, cy);
                    owner[static_cast<std::size_t>(cy) * canvas.width() + cx] = static_cast<int>(gi);
                }
    }
    const int lig_row = static_cast<int>(std::lround((kXTop + kBase) / 2.0 * kScale));
    for (const auto& [from, to] : ligatures)
        for (int x = from; x < to; ++x)
            for (int y = lig_row; y < lig_row + 3; ++y) canvas.set(x, y);

    const Box b = ink_bounds(canvas);
    w.top = b.top;
    w.image = crop(canvas, b);
    w.owner.assign(static_cast<std::size_t>(b.width()) * b.height(), -1);
    for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x)
            w.owner[static_cast<std::size_t>(y) * b.width() + x] =
                owner[static_cast<std::size_t>(y + b.top) * canvas.width() + x + b.left];
    return w;
}

SynthCorpus synth_generate(const GlyphSet& glyphs, const classifier::SymbolAlphabet& alphabet,
                           std::span<const std::string> lexicon, std::size_t n, std::mt19937_64& rng,
                           const LayoutOptions& layout) {
    if (lexicon.empty()) throw Error("empty lexicon");
    if (layout.words_per_line < 1 || layout.lines_per_page < 1) throw Error("invalid page layout");
    if (layout.word_gap < 1 || layout.line_gap < 1 || layout.margin < 0) throw Error("invalid page spacing");
    SynthCorpus corpus;
    const std::size_t per_page = static_cast<std::size_t>(layout.words_per_line) * layout.lines_per_page;
    for (std::size_t start = 0; start < n; start += per_page) {
        SynthPage page;
        char id[32];
        std::snprintf(id, sizeof id, "p%03zu", corpus.pages.size() + 1);
        page.id = id;
        const std::size_t count = std::min(per_page, n - start);
        std::vector<std::vector<SynthWord>> lines;
        for (std::size_t k = 0; k < count; ++k) {
            if (k % layout.words_per_line == 0) lines.emplace_back();
            auto w = render_word(lexicon[pick(lexicon.size(), rng)], glyphs, alphabet, rng, layout.render);
            imaging::WordImage wi;
            wi.page_id = page.id;
            wi.line_index = static_cast<int>(lines.size()) - 1;
            wi.word_index = static_cast<int>(lines.back().size());
            w.id = wi.id();
            lines.back().push_back(std::move(w));
        }
        int width = 0, rows = 0;
        std::vector<int> line_top, line_bottom;
        for (const auto& line : lines) {
            int lw = 0, top = 1 << 30, bottom = 0;
            for (const auto& w : line) {
                lw += w.image.width() + layout.word_gap;
                top = std::min(top, w.top);
                bottom = std::max(bottom, w.top + w.image.height());
            }
            width = std::max(width, lw - layout.word_gap);
            line_top.push_back(top);
            line_bottom.push_back(bottom);
            rows += bottom - top;
        }
        rows += layout.line_gap * (static_cast<int>(lines.size()) - 1);
        GrayImage img(width + 2 * layout.margin, rows + 2 * layout.margin, 255);
        int y0 = layout.margin;
        for (std::size_t li = 0; li < lines.size(); ++li) {
            int x0 = layout.margin;
            for (const auto& w : lines[li]) {
                const int oy = y0 + w.top - line_top[li];
                for (int y = 0; y < w.image.height(); ++y)
                    for (int x = 0; x < w.image.width(); ++x)
                        if (w.image.at(x, y)) img.set(x0 + x, oy + y, 0);
                x0 += w.image.width() + layout.word_gap;
            }
            y0 += line_bottom[li] - line_top[li] + layout.line_gap;
        }
        page.image = std::move(img);
        for (auto& line : lines)
            for (auto& w : line) {
                corpus.truth[w.id] = w.text;
                page.words.push_back(std::move(w));
            }
        corpus.pages.push_back(std::move(page));
    }
    return corpus;
}

std::vector<classifier::LabeledSample> label_groups(const SynthWord& word,
                                                    const classifier::SymbolAlphabet& alphabet, double sigma,
                                                    segmentation::Method method) {
    const auto segs = segmentation::segment(word.image, method);
    const int w = word.image.width();
    std::vector<std::size_t> glyph_total(word.symbols.size(), 0);
    for (int o : word.owner)
        if (o >= 0) ++glyph_total[static_cast<std::size_t>(o)];
    auto vertex_x = [&](std::size_t k) { return k == 0 ? 0 : segs[k - 1].centroid_x; };

    std::vector<classifier::LabeledSample> out;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        for (std::size_t j = i + 1; j <= segs.size(); ++j) {
            if (vertex_x(j) - vertex_x(i) > sigma) break;
            std::vector<std::size_t> counts(word.symbols.size(), 0);
            std::size_t total = 0;  // ligature pixels are not counted
            for (std::size_t s = i; s < j; ++s)
                for (const auto& p : segs[s].mask) {
                    const int o = word.owner[static_cast<std::size_t>(p.y) * w + p.x];
                    if (o >= 0) {
                        ++counts[static_cast<std::size_t>(o)];
                        ++total;
                    }
                }
            std::size_t label = alphabet.nonchar_index();
            for (std::size_t g = 0; g < counts.size(); ++g) {
                if (counts[g] >= 0.85 * glyph_total[g] && counts[g] >= 0.85 * total) {
                    label = word.symbols[g];
                    break;
                }
            }
            const auto group = segmentation::group_image(std::span(segs).subspan(i, j - i));
            out.push_back({classifier::normalize_sample(group), label, classifier::Origin::synthetic});
        }
    }
    return out;
}

std::vector<classifier::LabeledSample> synth_training_samples(const GlyphSet& glyphs,
                                                              const classifier::SymbolAlphabet& alphabet,
                                                              std::span<const std::string> words, double sigma,
                                                              std::size_t fragments, std::mt19937_64& rng,
                                                              const RenderOptions& options) {
    std::vector<classifier::LabeledSample> out;
    for (std::size_t s = 0; s < alphabet.size(); ++s) {
        if (alphabet.is_nonchar(s)) continue;
        for (const auto& img : variants_of(glyphs, alphabet[s].name))
            out.push_back({classifier::normalize_sample(imaging::crop_margins(img)), s, classifier::Origin::synthetic});
    }
    for (const auto& text : words) {
        const auto w = render_word(text, glyphs, alphabet, rng, options);
        auto groups = label_groups(w, alphabet, sigma);
        std::move(groups.begin(), groups.end(), std::back_inserter(out));
    }
    for (std::size_t k = 0; k < fragments; ++k)
        out.push_back({classifier::normalize_sample(nonchar_fragment(glyphs, rng)), alphabet.nonchar_index(),
                       classifier::Origin::synthetic});
    return out;
}

pipeline::Models synth_models(const GlyphSet& glyphs, const classifier::SymbolAlphabet& alphabet,
                              std::span<const std::string> lexicon, std::span<const std::string> lm_words,
                              std::size_t per_class, std::mt19937_64& rng, const classifier::TrainOptions& train) {
    std::vector<std::string> words;
    for (int r = 0; r < 4; ++r) words.insert(words.end(), lexicon.begin(), lexicon.end());
    const auto samples = synth_training_samples(glyphs, alphabet, words, lattice::LatticeParams{}.sigma,
                                                words.size() * 8, rng);
    const auto balanced = classifier::balance_training_set(samples, alphabet, per_class, rng);
    pipeline::Models models;
    models.classifier =
        std::make_shared<classifier::ReferenceClassifier>(classifier::train_reference(balanced, alphabet, train, rng));
    models.lm = std::make_shared<langmodel::CharLM>(langmodel::CharLM::train(lm_words, alphabet.text_chars(), {}));
    return models;
}

}  // namespace htr::eval
