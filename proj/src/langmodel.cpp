#include "htr/langmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "htr/image.hpp"

namespace htr::langmodel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Folded lowercase spelling of a letter code point, or "" for non-letters.
std::string fold_letter(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
    if (cp >= 'a' && cp <= 'z') {
        if (cp == 'v') return "u";
        if (cp == 'j') return "i";
        return std::string(1, static_cast<char>(cp));
    }
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) cp += 0x20;
    switch (cp) {
        case 0xE0: case 0xE1: case 0xE2: case 0xE3: case 0xE4: case 0xE5: return "a";
        case 0xE6: return "ae";
        case 0xE7: return "c";
        case 0xE8: case 0xE9: case 0xEA: case 0xEB: return "e";
        case 0xEC: case 0xED: case 0xEE: case 0xEF: return "i";
        case 0xF0: return "d";
        case 0xF1: return "n";
        case 0xF2: case 0xF3: case 0xF4: case 0xF5: case 0xF6: case 0xF8: return "o";
        case 0xF9: case 0xFA: case 0xFB: case 0xFC: return "u";
        case 0xFD: case 0xFF: return "y";
        case 0xFE: return "th";
        case 0xDF: return "ss";
        case 0x152: case 0x153: return "oe";
        case 0x100: case 0x101: return "a";
        case 0x112: case 0x113: return "e";
        case 0x12A: case 0x12B: return "i";
        case 0x14C: case 0x14D: return "o";
        case 0x16A: case 0x16B: return "u";
        default: return "";
    }
}

// Decodes one UTF-8 sequence; malformed bytes decode as U+FFFD.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i++]);
    if (b0 < 0x80) return b0;
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        return 0xFFFD;
    }
    for (int k = 0; k < extra; ++k) {
        if (i >= s.size() || (static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) return 0xFFFD;
        cp = (cp << 6) | (static_cast<unsigned char>(s[i++]) & 0x3F);
    }
    return cp;
}

std::string smoothing_label(Smoothing s, double alpha) {
    if (s == Smoothing::none) return "none";
    std::ostringstream o;
    o.precision(17);
    o << "stupid-backoff(" << alpha << ")";
    return o.str();
}

}  // namespace

Tokens tokenize(std::string_view text, std::string_view alphabet) {
    Tokens out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) out.words.push_back(std::move(word));
        word.clear();
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const std::string folded = fold_letter(next_code_point(text, i));
        if (folded.empty()) {
            flush();
            continue;
        }
        for (char c : folded) {
            if (alphabet.find(c) != std::string_view::npos) {
                word += c;
            } else {
                ++out.dropped;
            }
        }
    }
    flush();
    return out;
}

Tokens read_corpus(const std::filesystem::path& dir, std::string_view alphabet) {
    if (!std::filesystem::is_directory(dir)) throw Error("corpus directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    Tokens all;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        auto t = tokenize(ss.str(), alphabet);
        all.dropped += t.dropped;
        for (auto& w : t.words) all.words.push_back(std::move(w));
    }
    return all;
}

CharLM::CharLM(std::string alphabet, const Options& options)
    : q_(options.q), smoothing_(options.smoothing), alpha_(options.alpha), alphabet_(std::move(alphabet)) {
    if (q_ < 2 || q_ > kMaxOrder) throw Error("gram order must be in [2, 8], got " + std::to_string(q_));
    if (smoothing_ == Smoothing::stupid_backoff && !(alpha_ > 0.0 && alpha_ <= 1.0)) {
        throw Error("backoff factor must be in (0, 1]");
    }
    if (alphabet_.empty()) throw Error("empty language-model alphabet");
    for (char c : alphabet_) {
        if (c == kWordStart || c == kWordEnd || c == '\t' || c == ' ' || c == '\n') {
            throw Error("reserved character in language-model alphabet");
        }
    }
}

CharLM CharLM::train(std::span<const std::string> words, std::string_view alphabet, const Options& options) {
    CharLM lm{std::string(alphabet), options};
    if (words.empty()) throw Error("empty training corpus");
    for (const auto& w : words) {
        if (w.empty()) continue;
        for (char c : w) {
            if (c == kWordEnd) throw Error("end marker inside a training word");
            lm.check_symbol(c);
        }
        const std::string padded = kWordStart + w + kWordEnd;
        for (std::size_t i = 1; i < padded.size(); ++i) {
            const std::size_t longest = std::min<std::size_t>(static_cast<std::size_t>(lm.q_ - 1), i);
            for (std::size_t len = 0; len <= longest; ++len) {
                if (len == 0 && padded[i] == kWordEnd) continue;
                lm.add(padded.substr(i - len, len), padded[i], 1);
            }
        }
    }
    if (lm.rows_.empty()) throw Error("empty training corpus");
    return lm;
}

void CharLM::add(const std::string& context, char symbol, std::uint64_t n) {
    auto& row = rows_[context];
    row.counts[symbol] += n;
    row.total += n;
}

std::uint64_t CharLM::count(std::string_view context, char symbol) const {
    auto it = rows_.find(std::string(context));
    if (it == rows_.end()) return 0;
    auto c = it->second.counts.find(symbol);
    return c == it->second.counts.end() ? 0 : c->second;
}

std::uint64_t CharLM::context_total(std::string_view context) const {
    auto it = rows_.find(std::string(context));
    return it == rows_.end() ? 0 : it->second.total;
}

int CharLM::effective_order(int order) const {
    if (order == 0) return q_;
    if (order < 1 || order > q_) {
        throw Error("scoring order " + std::to_string(order) + " exceeds the trained order " + std::to_string(q_));
    }
    return order;
}

void CharLM::check_symbol(char symbol) const {
    if (symbol != kWordEnd && alphabet_.find(symbol) == std::string::npos) {
        throw Error(std::string("symbol outside the language-model alphabet: '") + symbol + "'");
    }
}

void CharLM::check_context(std::string_view context) const {
    for (std::size_t i = 0; i < context.size(); ++i) {
        const char c = context[i];
        if (c == kWordStart && i == 0) continue;
        if (c == kWordEnd || alphabet_.find(c) == std::string::npos) {
            throw Error(std::string("invalid context symbol: '") + c + "'");
        }
    }
}

double CharLM::log_backoff(std::string_view context, char symbol) const {
    double penalty = 0.0;
    for (;;) {
        auto it = rows_.find(std::string(context));
        if (it != rows_.end()) {
            auto c = it->second.counts.find(symbol);
            if (c != it->second.counts.end()) {
                return penalty + std::log(static_cast<double>(c->second) / static_cast<double>(it->second.total));
            }
        }
        if (context.empty()) break;
        context.remove_prefix(1);
        penalty += std::log(alpha_);
    }
    // add-one unigram over the letters plus the end marker
    auto it = rows_.find("");
    const double n = it == rows_.end() ? 0.0 : static_cast<double>(it->second.total);
    const double seen = static_cast<double>(count("", symbol));
    return penalty + std::log((seen + 1.0) / (n + static_cast<double>(alphabet_.size()) + 1.0));
}

double CharLM::log_cond_prob(std::string_view context, char symbol, int order) const {
    check_symbol(symbol);
    check_context(context);
    const auto keep = static_cast<std::size_t>(effective_order(order) - 1);
    if (context.size() > keep) context.remove_prefix(context.size() - keep);
    if (smoothing_ == Smoothing::stupid_backoff) return log_backoff(context, symbol);
    auto it = rows_.find(std::string(context));
    if (it == rows_.end() || it->second.total == 0) return kNegInf;
    auto c = it->second.counts.find(symbol);
    if (c == it->second.counts.end()) return kNegInf;
    return std::log(static_cast<double>(c->second) / static_cast<double>(it->second.total));
}

double CharLM::cond_prob(std::string_view context, char symbol, int order) const {
    return std::exp(log_cond_prob(context, symbol, order));
}

double CharLM::log_word_prob(std::string_view text, int order) const {
    if (text.empty()) throw Error("word_prob: empty text");
    const std::string padded = kWordStart + std::string(text) + kWordEnd;
    const auto keep = static_cast<std::size_t>(effective_order(order) - 1);
    double total = 0.0;
    for (std::size_t i = 1; i < padded.size(); ++i) {
        const std::size_t len = std::min(keep, i);
        total += log_cond_prob(std::string_view(padded).substr(i - len, len), padded[i], order);
        if (total == kNegInf) return kNegInf;
    }
    return total;
}

double CharLM::word_prob(std::string_view text, int order) const { return std::exp(log_word_prob(text, order)); }

double CharLM::log_extend(std::string_view prefix, char symbol, int order) const {
    if (symbol == kWordEnd) throw Error("substring chains do not include the end marker");
    const auto keep = static_cast<std::size_t>(effective_order(order) - 1);
    if (prefix.size() > keep) prefix.remove_prefix(prefix.size() - keep);
    return log_cond_prob(prefix, symbol, order);
}

double CharLM::log_substring_prob(std::string_view text, int order) const {
    if (text.empty()) throw Error("substring_prob: empty text");
    double total = 0.0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        total += log_extend(text.substr(0, i), text[i], order);
        if (total == kNegInf) return kNegInf;
    }
    return total;
}

double CharLM::substring_prob(std::string_view text, int order) const {
    return std::exp(log_substring_prob(text, order));
}

std::vector<std::pair<std::string, char>> CharLM::entries() const {
    std::vector<std::pair<std::string, char>> out;
    for (const auto& [ctx, row] : rows_)
        for (const auto& [sym, n] : row.counts) out.emplace_back(ctx, sym);
    std::sort(out.begin(), out.end());
    return out;
}

std::string CharLM::serialize() const {
    const auto rows = entries();
    std::ostringstream o;
    o << "charlm v1 q=" << q_ << " smoothing=" << smoothing_label(smoothing_, alpha_) << " alphabet=" << alphabet_
      << " rows=" << rows.size() << '\n';
    for (const auto& [ctx, sym] : rows) o << ctx << '\t' << sym << '\t' << count(ctx, sym) << '\n';
    return o.str();
}

CharLM CharLM::deserialize(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header;
    if (!std::getline(in, header) || header.empty()) throw Error("language model: empty file");
    std::istringstream hs(header);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != "charlm") throw Error("language model: not a charlm file");
    if (version != "v1") throw Error("language model: unsupported version " + version);

    Options opt;
    std::string alphabet;
    long long declared = -1;
    std::string field;
    try {
    while (hs >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw Error("language model: malformed header field " + field);
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "q") {
            opt.q = std::stoi(value);
        } else if (key == "smoothing") {
            if (value == "none") {
                opt.smoothing = Smoothing::none;
            } else if (value.starts_with("stupid-backoff(") && value.ends_with(")")) {
                opt.smoothing = Smoothing::stupid_backoff;
                opt.alpha = std::stod(value.substr(15, value.size() - 16));
            } else {
                throw Error("language model: unknown smoothing " + value);
            }
        } else if (key == "alphabet") {
            alphabet = value;
        } else if (key == "rows") {
            declared = std::stoll(value);
        }
    }
    } catch (const std::logic_error&) {
        throw Error("language model: malformed header value in " + field);
    }
    if (declared < 0) throw Error("language model: missing row count");
    CharLM lm{alphabet, opt};

    std::string line;
    long long seen = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos || t2 != t1 + 2) throw Error("language model: malformed row " + line);
        const std::string ctx = line.substr(0, t1);
        const char sym = line[t1 + 1];
        std::uint64_t n = 0;
        const char* first = line.data() + t2 + 1;
        const char* last = line.data() + line.size();
        auto [ptr, ec] = std::from_chars(first, last, n);
        if (ec != std::errc() || ptr != last || n == 0) throw Error("language model: bad count in row " + line);
        if (static_cast<int>(ctx.size()) > lm.q_ - 1) throw Error("language model: context longer than q-1");
        lm.check_context(ctx);
        lm.check_symbol(sym);
        lm.add(ctx, sym, n);
        ++seen;
    }
    if (seen != declared) throw Error("language model: row count mismatch (truncated file?)");
    if (lm.rows_.empty()) throw Error("language model: no counts");
    return lm;
}

void CharLM::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << serialize();
}

CharLM CharLM::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace htr::langmodel
