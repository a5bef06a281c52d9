#include "htr/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace htr::decoding {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double variant_count(std::string_view text, const CounterpartSets& sets) {
    double n = 1.0;
    for (char c : text) n *= static_cast<double>(sets.group_of(c).size());
    return n;
}

void product(std::string_view text, const CounterpartSets& sets, std::string& cur, std::vector<std::string>& out) {
    if (cur.size() == text.size()) {
        out.push_back(cur);
        return;
    }
    for (char c : sets.group_of(text[cur.size()])) {
        cur.push_back(c);
        product(text, sets, cur, out);
        cur.pop_back();
    }
}

// Best-first over prefixes. Every factor is at most 1, so a prefix score bounds
// all of its completions and complete words pop in score order.
std::vector<std::string> best_variants(std::string_view text, const CounterpartSets& sets, std::size_t cap,
                                       const langmodel::CharLM& lm, int order) {
    struct Node {
        double score;
        std::string prefix;
        bool complete;
    };
    auto worse = [](const Node& a, const Node& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.complete != b.complete) return !a.complete;
        return a.prefix > b.prefix;
    };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
    open.push({0.0, "", false});
    const int q = order == 0 ? lm.q() : order;
    std::vector<std::string> out;
    while (!open.empty() && out.size() < cap) {
        Node n = open.top();
        open.pop();
        if (n.complete) {
            out.push_back(std::move(n.prefix));
            continue;
        }
        const std::string padded = langmodel::kWordStart + n.prefix;
        const std::size_t keep = static_cast<std::size_t>(q - 1);
        const std::string_view ctx =
            std::string_view(padded).substr(padded.size() > keep ? padded.size() - keep : 0);
        if (n.prefix.size() == text.size()) {
            open.push({n.score + lm.log_cond_prob(ctx, langmodel::kWordEnd, order), std::move(n.prefix), true});
            continue;
        }
        for (char c : sets.group_of(text[n.prefix.size()])) {
            open.push({n.score + lm.log_cond_prob(ctx, c, order), n.prefix + c, false});
        }
    }
    return out;
}

}  // namespace

CounterpartSets::CounterpartSets(std::vector<std::string> groups) : groups_(std::move(groups)) {
    std::set<char> seen;
    for (auto& g : groups_) {
        if (g.empty()) throw Error("empty counterpart group");
        std::set<char> local(g.begin(), g.end());
        if (local.size() != g.size()) throw Error("repeated symbol in counterpart group " + g);
        for (char c : g) {
            if (!seen.insert(c).second) throw Error(std::string("symbol in two counterpart groups: ") + c);
        }
    }
}

CounterpartSets CounterpartSets::defaults() { return CounterpartSets({"ir", "od", "nm", "lf", "ce"}); }

CounterpartSets CounterpartSets::parse_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("counterpart file: ") + e.what());
    }
    if (!doc.is_array()) throw Error("counterpart file: expected a list of symbol arrays");
    std::vector<std::string> groups;
    for (const auto& g : doc) {
        if (!g.is_array()) throw Error("counterpart file: expected a list of symbol arrays");
        std::string group;
        for (const auto& s : g) {
            if (!s.is_string() || s.get<std::string>().size() != 1) {
                throw Error("counterpart file: symbols must be one-character strings");
            }
            group += s.get<std::string>()[0];
        }
        groups.push_back(group);
    }
    return CounterpartSets(std::move(groups));
}

CounterpartSets CounterpartSets::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str());
}

std::string CounterpartSets::group_of(char c) const {
    for (const auto& g : groups_)
        if (g.find(c) != std::string::npos) return g;
    return std::string(1, c);
}

std::vector<std::string> counterpart_variants(std::string_view text, const CounterpartSets& sets, std::size_t cap,
                                              const langmodel::CharLM* lm, int order) {
    if (text.empty()) throw Error("counterpart_variants: empty text");
    if (cap == 0) throw Error("counterpart_variants: cap must be positive");
    if (variant_count(text, sets) <= static_cast<double>(cap)) {
        std::vector<std::string> out;
        std::string cur;
        product(text, sets, cur, out);
        return out;
    }
    if (lm == nullptr) throw Error("counterpart_variants: a language model is needed above the cap");
    auto out = best_variants(text, sets, cap, *lm, order);
    if (std::find(out.begin(), out.end(), text) == out.end()) {
        out.back() = std::string(text);
    }
    return out;
}

std::vector<Decoded> decode(std::span<const lattice::Candidate> candidates, const langmodel::CharLM& lm,
                            const CounterpartSets& sets, std::size_t m, std::size_t cap, int order) {
    std::set<std::string> inputs;
    for (const auto& c : candidates) inputs.insert(c.text);
    std::unordered_map<std::string, double> best;
    for (const auto& c : candidates) {
        if (c.text.empty()) continue;
        for (auto& v : counterpart_variants(c.text, sets, cap, &lm, order)) {
            const double s = lm.log_word_prob(v, order);
            auto [it, fresh] = best.emplace(std::move(v), s);
            if (!fresh) it->second = std::max(it->second, s);
        }
    }
    std::vector<Decoded> out;
    out.reserve(best.size());
    for (auto& [text, score] : best) out.push_back({text, score, inputs.count(text) == 0});
    std::sort(out.begin(), out.end(), [](const Decoded& a, const Decoded& b) {
        if (a.log_word_prob != b.log_word_prob) return a.log_word_prob > b.log_word_prob;
        return a.text < b.text;
    });
    if (out.size() > m) out.resize(m);
    return out;
}

std::string brute_force_decode(std::string_view observed, const langmodel::CharLM& lm, const CounterpartSets& sets,
                               int order) {
    if (observed.empty()) throw Error("brute_force_decode: empty input");
    if (variant_count(observed, sets) > kBruteForceLimit) throw Error("brute_force_decode: too many hidden sequences");
    double emission = 0.0;
    for (char c : observed) emission += std::log(1.0 / static_cast<double>(sets.group_of(c).size()));

    std::string best;
    double best_score = kNegInf;
    bool have = false;
    std::string hidden(observed.size(), ' ');
    std::vector<std::size_t> idx(observed.size(), 0);
    std::vector<std::string> groups;
    for (char c : observed) groups.push_back(sets.group_of(c));
    for (;;) {
        for (std::size_t i = 0; i < observed.size(); ++i) hidden[i] = groups[i][idx[i]];
        const double s = lm.log_word_prob(hidden, order) + emission;
        if (!have || s > best_score || (s == best_score && hidden < best)) {
            best = hidden;
            best_score = s;
            have = true;
        }
        std::size_t k = 0;
        while (k < idx.size() && ++idx[k] == groups[k].size()) idx[k++] = 0;
        if (k == idx.size()) break;
    }
    return best;
}

}  // namespace htr::decoding
