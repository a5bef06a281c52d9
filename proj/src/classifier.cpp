#include "htr/classifier.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "htr/png_io.hpp"
#include "json.hpp"

namespace htr::classifier {

namespace {

constexpr std::array<double, 2> kSubOffsets{-0.25, 0.25};
constexpr char kModelMagic[8] = {'H', 'T', 'R', 'C', 'L', 'S', '1', '\n'};
constexpr std::size_t kRowWidth = kFeatureCount + 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw Error("classifier model: truncated data");
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return std::bit_cast<double>(v);
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<double> softmax(std::vector<double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : logits) v /= sum;
    return logits;
}

std::vector<int> ink_features(const BinaryImage& sample) {
    std::vector<int> idx;
    const auto& bits = sample.bits();
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) idx.push_back(static_cast<int>(i));
    return idx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Alphabet

SymbolAlphabet::SymbolAlphabet(std::vector<Symbol> symbols) : symbols_(std::move(symbols)) {
    std::set<std::string> names;
    std::size_t nonchar_count = 0;
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        if (!names.insert(symbols_[i].name).second) throw Error("duplicate symbol name: " + symbols_[i].name);
        if (symbols_[i].name == kNonCharName) {
            ++nonchar_count;
            nonchar_ = i;
            symbols_[i].text = '\0';
        } else if (symbols_[i].text == '\0') {
            throw Error("symbol without a transcription character: " + symbols_[i].name);
        }
    }
    if (nonchar_count != 1) throw Error("alphabet needs exactly one nonchar class");
}

SymbolAlphabet SymbolAlphabet::default_latin() {
    std::vector<Symbol> s;
    for (const char* name : {"a", "b", "c", "d", "d-tall", "e", "f", "g", "h", "i", "l",
                             "m", "n", "o", "p", "q", "r", "s", "s-long", "t", "u", "x"}) {
        s.push_back({name, name[0]});
    }
    s.push_back({std::string(kNonCharName), '\0'});
    return SymbolAlphabet(std::move(s));
}

SymbolAlphabet SymbolAlphabet::parse(std::string_view text) {
    std::vector<Symbol> symbols;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string name, ch;
        if (!(ls >> name) || name.starts_with('#')) continue;
        if (name == "⊗") name = std::string(kNonCharName);
        ls >> ch;
        char t = name == kNonCharName ? '\0' : (ch.empty() ? name[0] : ch[0]);
        symbols.push_back({name, t});
    }
    return SymbolAlphabet(std::move(symbols));
}

SymbolAlphabet SymbolAlphabet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open alphabet file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<std::size_t> SymbolAlphabet::find(std::string_view name) const {
    if (name == "⊗") name = kNonCharName;
    for (std::size_t i = 0; i < symbols_.size(); ++i)
        if (symbols_[i].name == name) return i;
    return std::nullopt;
}

std::size_t SymbolAlphabet::index_of(std::string_view name) const {
    auto i = find(name);
    if (!i) throw Error("unknown symbol: " + std::string(name));
    return *i;
}

std::string SymbolAlphabet::text_chars() const {
    std::string out;
    for (const auto& s : symbols_)
        if (s.text != '\0' && out.find(s.text) == std::string::npos) out += s.text;
    return out;
}

bool operator==(const SymbolAlphabet& a, const SymbolAlphabet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || a[i].text != b[i].text) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Distributions and samples

void ClassDistribution::validate(std::size_t expected_size, double tolerance) const {
    if (probs.size() != expected_size) {
        throw Error("class distribution has " + std::to_string(probs.size()) + " entries, expected " +
                    std::to_string(expected_size));
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error("class probability outside [0, 1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) throw Error("class probabilities do not sum to 1");
}

bool ClassDistribution::is_valid(std::size_t expected_size, double tolerance) const {
    try {
        validate(expected_size, tolerance);
        return true;
    } catch (const Error&) {
        return false;
    }
}

ClassDistribution ClassDistribution::one_hot(std::size_t size, std::size_t index) {
    ClassDistribution d;
    d.probs.assign(size, 0.0);
    d.probs.at(index) = 1.0;
    return d;
}

std::string_view origin_name(Origin o) {
    switch (o) {
        case Origin::crowd: return "crowd";
        case Origin::augmented: return "augmented";
        case Origin::synthetic: return "synthetic";
    }
    return "crowd";
}

Origin parse_origin(std::string_view name) {
    if (name == "crowd") return Origin::crowd;
    if (name == "augmented") return Origin::augmented;
    if (name == "synthetic") return Origin::synthetic;
    throw Error("unknown sample origin: " + std::string(name));
}

BinaryImage normalize_sample(const BinaryImage& img) {
    if (img.empty() || img.ink_count() == 0) throw Error("normalize_sample: empty image");
    const double scale = std::min(static_cast<double>(kSampleSide) / img.width(),
                                  static_cast<double>(kSampleSide) / img.height());
    const int new_w = std::clamp(static_cast<int>(std::lround(img.width() * scale)), 1, kSampleSide);
    const int new_h = std::clamp(static_cast<int>(std::lround(img.height() * scale)), 1, kSampleSide);
    const double sx = static_cast<double>(new_w) / img.width();
    const double sy = static_cast<double>(new_h) / img.height();
    const int pad_x = (kSampleSide - new_w) / 2;
    const int pad_y = (kSampleSide - new_h) / 2;

    // Source pixel range whose centers fall in [o / s, (o + 1) / s).
    auto source_range = [](int o, double s, int limit) {
        const int lo = static_cast<int>(std::ceil(o / s - 0.5 - 1e-9));
        const int hi = static_cast<int>(std::ceil((o + 1) / s - 0.5 - 1e-9));
        return std::pair{std::clamp(lo, 0, limit), std::clamp(hi, 0, limit)};
    };

    BinaryImage out(kSampleSide, kSampleSide);
    for (int oy = 0; oy < new_h; ++oy) {
        auto [y0, y1] = source_range(oy, sy, img.height());
        if (y1 <= y0) {
            y0 = std::clamp(static_cast<int>(std::floor((oy + 0.5) / sy)), 0, img.height() - 1);
            y1 = y0 + 1;
        }
        for (int ox = 0; ox < new_w; ++ox) {
            auto [x0, x1] = source_range(ox, sx, img.width());
            if (x1 <= x0) {
                x0 = std::clamp(static_cast<int>(std::floor((ox + 0.5) / sx)), 0, img.width() - 1);
                x1 = x0 + 1;
            }
            int ink = 0, count = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    ink += img.at(x, y) ? 1 : 0;
                    ++count;
                }
            if (2 * ink >= count && ink > 0) out.set(ox + pad_x, oy + pad_y);
        }
    }
    return out;
}

BinaryImage apply_affine(const BinaryImage& img, const AffineParams& p) {
    const double a = p.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    // forward = zoom * rotation * shear
    const double m00 = p.zoom * c, m01 = p.zoom * (c * p.shear - s);
    const double m10 = p.zoom * s, m11 = p.zoom * (s * p.shear + c);
    const double det = m00 * m11 - m01 * m10;
    if (std::abs(det) < 1e-12) throw Error("apply_affine: singular transform");
    const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
    const double cx = img.width() / 2.0, cy = img.height() / 2.0;

    BinaryImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            int hits = 0;
            for (double dy : kSubOffsets) {
                for (double dx : kSubOffsets) {
                    const double px = x + 0.5 + dx - cx - p.shift_x;
                    const double py = y + 0.5 + dy - cy - p.shift_y;
                    const double sx = i00 * px + i01 * py + cx;
                    const double sy = i10 * px + i11 * py + cy;
                    if (img.get(static_cast<int>(std::floor(sx)), static_cast<int>(std::floor(sy)))) ++hits;
                }
            }
            if (hits * 2 >= 4) out.set(x, y);
        }
    }
    return out;
}

LabeledSample augment(const LabeledSample& sample, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> rot(-5.0, 5.0), zoom(0.9, 1.1), shear(-0.1, 0.1), shift(-3.0, 3.0);
    for (int attempt = 0; attempt <= 10; ++attempt) {
        AffineParams p;
        p.rotation_deg = rot(rng);
        p.zoom = zoom(rng);
        p.shear = shear(rng);
        p.shift_x = shift(rng);
        p.shift_y = shift(rng);
        BinaryImage warped = apply_affine(sample.image, p);
        if (warped.ink_count() == 0) continue;
        return LabeledSample{std::move(warped), sample.label, Origin::augmented};
    }
    throw Error("augment: transform kept producing empty images");
}

std::vector<LabeledSample> balance_training_set(std::span<const LabeledSample> samples, const SymbolAlphabet& alphabet,
                                                std::size_t target, std::mt19937_64& rng) {
    std::vector<std::vector<std::size_t>> by_class(alphabet.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].label >= alphabet.size()) throw Error("sample label outside the alphabet");
        by_class[samples[i].label].push_back(i);
    }
    for (std::size_t c = 0; c < alphabet.size(); ++c) {
        if (by_class[c].empty()) throw Error("no training samples for class " + alphabet[c].name);
    }

    std::vector<LabeledSample> out;
    out.reserve(alphabet.size() * target);
    for (std::size_t c = 0; c < alphabet.size(); ++c) {
        const auto& idx = by_class[c];
        if (idx.size() >= target) {
            std::vector<std::size_t> chosen;
            std::sample(idx.begin(), idx.end(), std::back_inserter(chosen), target, rng);
            for (auto i : chosen) out.push_back(samples[i]);
            continue;
        }
        for (auto i : idx) out.push_back(samples[i]);
        std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
        for (std::size_t k = idx.size(); k < target; ++k) out.push_back(augment(samples[idx[pick(rng)]], rng));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference classifier

ReferenceClassifier::ReferenceClassifier(SymbolAlphabet alphabet, std::vector<double> weights)
    : alphabet_(std::move(alphabet)), weights_(std::move(weights)) {
    if (weights_.size() != alphabet_.size() * kRowWidth) throw Error("classifier weight matrix has the wrong size");
}

ClassDistribution ReferenceClassifier::classify(const BinaryImage& img) const {
    return classify_normalized(normalize_sample(img));
}

ClassDistribution ReferenceClassifier::classify_normalized(const BinaryImage& sample) const {
    if (sample.width() != kSampleSide || sample.height() != kSampleSide) throw Error("sample must be 56x56");
    const auto features = ink_features(sample);
    std::vector<double> logits(alphabet_.size());
    for (std::size_t c = 0; c < alphabet_.size(); ++c) {
        const double* row = weights_.data() + c * kRowWidth;
        double z = row[kFeatureCount];
        for (int f : features) z += row[f];
        logits[c] = z;
    }
    return ClassDistribution{softmax(std::move(logits))};
}

std::vector<std::uint8_t> ReferenceClassifier::serialize() const {
    std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
    put_u32(out, static_cast<std::uint32_t>(alphabet_.size()));
    for (const auto& s : alphabet_.symbols()) {
        if (s.name.size() > 255) throw Error("symbol name too long");
        out.push_back(static_cast<std::uint8_t>(s.name.size()));
        out.insert(out.end(), s.name.begin(), s.name.end());
        out.push_back(static_cast<std::uint8_t>(s.text));
    }
    put_u32(out, static_cast<std::uint32_t>(alphabet_.size()));
    put_u32(out, static_cast<std::uint32_t>(kRowWidth));
    for (double w : weights_) put_f64(out, w);
    return out;
}

ReferenceClassifier ReferenceClassifier::deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.str(8) != std::string(kModelMagic, 8)) throw Error("classifier model: bad magic");
    const auto count = r.u32();
    if (count == 0 || count > 4096) throw Error("classifier model: bad symbol count");
    std::vector<Symbol> symbols;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.u8();
        std::string name = r.str(len);
        const char text = static_cast<char>(r.u8());
        symbols.push_back({std::move(name), text});
    }
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (rows != count || cols != kRowWidth) throw Error("classifier model: unexpected matrix shape");
    r.need(static_cast<std::size_t>(rows) * cols * 8);
    std::vector<double> weights(static_cast<std::size_t>(rows) * cols);
    for (auto& w : weights) w = r.f64();
    if (!r.done()) throw Error("classifier model: trailing bytes");
    return ReferenceClassifier(SymbolAlphabet(std::move(symbols)), std::move(weights));
}

void ReferenceClassifier::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ReferenceClassifier ReferenceClassifier::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

ReferenceClassifier train_reference(std::span<const LabeledSample> samples, const SymbolAlphabet& alphabet,
                                    const TrainOptions& options, std::mt19937_64& rng) {
    std::set<std::size_t> present;
    for (const auto& s : samples) {
        if (s.label >= alphabet.size()) throw Error("sample label outside the alphabet");
        if (s.image.width() != kSampleSide || s.image.height() != kSampleSide) {
            throw Error("training samples must be normalized to 56x56");
        }
        present.insert(s.label);
    }
    if (present.size() < 2) throw Error("training needs at least two classes");

    const std::size_t classes = alphabet.size();
    std::vector<double> weights(classes * kRowWidth, 0.0);
    std::vector<std::vector<int>> features;
    features.reserve(samples.size());
    for (const auto& s : samples) features.push_back(ink_features(s.image));

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

    std::vector<std::vector<double>> batch_probs;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = options.learning_rate / (1.0 + 0.5 * epoch);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            batch_probs.clear();
            for (std::size_t k = start; k < end; ++k) {
                const auto& f = features[order[k]];
                std::vector<double> logits(classes);
                for (std::size_t c = 0; c < classes; ++c) {
                    const double* row = weights.data() + c * kRowWidth;
                    double z = row[kFeatureCount];
                    for (int j : f) z += row[j];
                    logits[c] = z;
                }
                batch_probs.push_back(softmax(std::move(logits)));
            }
            const double step = lr / static_cast<double>(end - start);
            if (options.l2 > 0.0) {
                const double decay = 1.0 - lr * options.l2;
                for (auto& w : weights) w *= decay;
            }
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                const auto& probs = batch_probs[k - start];
                for (std::size_t c = 0; c < classes; ++c) {
                    const double g = probs[c] - (samples[i].label == c ? 1.0 : 0.0);
                    if (g == 0.0) continue;
                    double* row = weights.data() + c * kRowWidth;
                    const double delta = step * g;
                    for (int j : features[i]) row[j] -= delta;
                    row[kFeatureCount] -= delta;
                }
            }
        }
    }
    return ReferenceClassifier(alphabet, std::move(weights));
}

// ---------------------------------------------------------------------------
// Table mock

TableClassifier::TableClassifier(SymbolAlphabet alphabet, std::unordered_map<std::uint64_t, ClassDistribution> table,
                                 ClassDistribution fallback)
    : alphabet_(std::move(alphabet)), table_(std::move(table)), fallback_(std::move(fallback)) {
    for (const auto& [hash, dist] : table_) dist.validate(alphabet_.size());
    fallback_.validate(alphabet_.size());
}

ClassDistribution TableClassifier::classify(const BinaryImage& img) const {
    auto it = table_.find(fnv1a_hash(img));
    return it == table_.end() ? fallback_ : it->second;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<LabeledSample> read_manifest(const std::filesystem::path& manifest, const SymbolAlphabet& alphabet) {
    std::ifstream in(manifest);
    if (!in) throw Error("cannot open manifest " + manifest.string());
    const auto base = manifest.parent_path();
    std::vector<LabeledSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!rec.contains("path") || !rec.contains("label")) {
            throw Error("manifest line " + std::to_string(lineno) + ": missing path or label");
        }
        std::filesystem::path p = rec["path"].get<std::string>();
        if (p.is_relative()) p = base / p;
        LabeledSample s;
        s.image = normalize_sample(png::read_binary(p));
        s.label = alphabet.index_of(rec["label"].get<std::string>());
        s.origin = parse_origin(rec.value("origin", std::string("crowd")));
        out.push_back(std::move(s));
    }
    return out;
}

void write_manifest(const std::filesystem::path& manifest, std::span<const LabeledSample> samples,
                    const SymbolAlphabet& alphabet) {
    const auto base = manifest.parent_path();
    const auto image_dir = base / "images";
    std::filesystem::create_directories(image_dir);
    std::ofstream out(manifest);
    if (!out) throw Error("cannot write manifest " + manifest.string());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.png", i);
        png::write_binary(image_dir / name, samples[i].image);
        nlohmann::json rec{{"path", std::string("images/") + name},
                           {"label", alphabet[samples[i].label].name},
                           {"origin", std::string(origin_name(samples[i].origin))}};
        out << rec.dump() << '\n';
    }
}

}  // namespace htr::classifier
