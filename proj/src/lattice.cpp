#include "htr/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace htr::lattice {

namespace {

constexpr std::size_t kMaxLabels = 3;
constexpr double kMassTolerance = 1e-12;

struct Walker {
    const Lattice& lat;
    const langmodel::CharLM& lm;
    const LatticeParams& params;
    Deadline deadline;
    std::vector<std::vector<std::size_t>> out;
    double log_beta;
    std::vector<Candidate> found;
    std::string text;
    std::vector<PathStep> path;
    std::size_t visits = 0;

    void walk(int v, double log_prefix) {
        if (deadline && (++visits & 0xFF) == 0 && std::chrono::steady_clock::now() > *deadline) {
            throw Timeout("candidate enumeration timed out");
        }
        const auto& next = out[static_cast<std::size_t>(v)];
        if (next.empty()) {
            if (!text.empty()) found.push_back({text, lm.log_word_prob(text, params.q), path});
            return;
        }
        for (std::size_t e : next) {
            const auto& edge = lat.edges[e];
            for (std::size_t l = 0; l < edge.labels.size(); ++l) {
                const char c = edge.labels[l].text;
                const double lp = log_prefix + lm.log_extend(text, c, params.q);
                if (params.beta > 0.0 && !(lp >= log_beta)) continue;
                text.push_back(c);
                path.push_back({e, l});
                walk(edge.to, lp);
                text.pop_back();
                path.pop_back();
            }
        }
    }
};

}  // namespace

void LatticeParams::validate() const {
    if (!(sigma > 0.0)) throw Error("sigma must be positive");
    if (!(eta > 0.0 && eta <= 1.0)) throw Error("eta must be in (0, 1]");
    if (!(theta2 > 0.0 && theta2 <= theta1 && theta1 <= 1.0)) throw Error("need 0 < theta2 <= theta1 <= 1");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error("beta must be in [0, 1]");
    if (m < 1) throw Error("m must be at least 1");
    if (q < 2 || q > langmodel::kMaxOrder) throw Error("q must be in [2, 8]");
    if (!(avg_char_px > 0.0) || !(min_len_ratio >= 0.0)) throw Error("bad length-filter constants");
}

std::vector<std::vector<std::size_t>> Lattice::out_edges() const {
    std::vector<std::vector<std::size_t>> out(vertices.size());
    for (std::size_t e = 0; e < edges.size(); ++e) out.at(static_cast<std::size_t>(edges[e].from)).push_back(e);
    return out;
}

std::vector<int> Lattice::sinks() const {
    const auto out = out_edges();
    std::vector<int> s;
    for (std::size_t v = 1; v < vertices.size(); ++v)
        if (out[v].empty()) s.push_back(static_cast<int>(v));
    return s;
}

std::optional<std::vector<Label>> select_labels(const classifier::ClassDistribution& dist,
                                                const classifier::SymbolAlphabet& alphabet, double theta1,
                                                double theta2) {
    dist.validate(alphabet.size());
    std::vector<std::size_t> order(dist.probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist.probs[a] > dist.probs[b]; });

    std::vector<std::size_t> taken;
    double mass = 0.0;
    for (std::size_t i : order) {
        if (dist.probs[i] < theta2) break;
        taken.push_back(i);
        mass += dist.probs[i];
        if (mass >= theta1 - kMassTolerance) break;
    }
    if (taken.empty()) return std::nullopt;
    for (std::size_t i : taken)
        if (alphabet.is_nonchar(i)) return std::nullopt;
    if (taken.size() > kMaxLabels) taken.resize(kMaxLabels);

    std::vector<Label> labels;
    for (std::size_t i : taken) {
        const char c = alphabet[i].text;
        auto same = std::find_if(labels.begin(), labels.end(), [c](const Label& l) { return l.text == c; });
        if (same != labels.end()) continue;  // already holds the larger probability
        labels.push_back({i, c, dist.probs[i]});
    }
    return labels;
}

Lattice build_lattice(std::span<const segmentation::Segment> segments, const classifier::CharacterClassifier& clf,
                      const LatticeParams& params) {
    params.validate();
    if (segments.empty()) throw Error("build_lattice: no segments");
    Lattice lat;
    lat.vertices.push_back(0);
    for (std::size_t k = 0; k < segments.size(); ++k) {
        if (k > 0 && segments[k].centroid_x < segments[k - 1].centroid_x) {
            throw Error("build_lattice: segments are not in centroid order");
        }
        lat.vertices.push_back(segments[k].centroid_x);
    }
    const auto& alphabet = clf.alphabet();
    const std::size_t n = lat.vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (lat.vertices[j] - lat.vertices[i] > params.sigma) break;
            const auto group = segments.subspan(i, j - i);
            const auto dist = clf.classify(segmentation::group_image(group));
            dist.validate(alphabet.size());
            if (dist.probs[alphabet.nonchar_index()] >= params.eta) continue;
            auto labels = select_labels(dist, alphabet, params.theta1, params.theta2);
            if (!labels) continue;
            lat.edges.push_back({static_cast<int>(i), static_cast<int>(j), std::move(*labels)});
        }
    }
    return lat;
}

std::vector<Candidate> enumerate_candidates(const Lattice& lat, const langmodel::CharLM& lm,
                                            const LatticeParams& params, Deadline deadline) {
    params.validate();
    if (lat.vertices.empty()) return {};
    Walker w{lat, lm, params, deadline, lat.out_edges(), params.beta > 0.0 ? std::log(params.beta) : 0.0, {}, {}, {}, 0};
    w.walk(0, 0.0);
    return std::move(w.found);
}

std::vector<Candidate> length_filter(std::vector<Candidate> cands, int word_width, const LatticeParams& params) {
    if (word_width <= 0) throw Error("length_filter: word width must be positive");
    std::erase_if(cands, [&](const Candidate& c) {
        return params.avg_char_px * static_cast<double>(c.text.size()) < params.min_len_ratio * word_width;
    });
    return cands;
}

std::vector<Candidate> rank_candidates(std::vector<Candidate> cands, std::size_t m) {
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.log_word_prob != b.log_word_prob) return a.log_word_prob > b.log_word_prob;
        return a.text < b.text;
    });
    std::vector<Candidate> out;
    for (auto& c : cands) {
        if (out.size() >= m) break;
        if (!out.empty() && std::any_of(out.begin(), out.end(), [&](const Candidate& o) { return o.text == c.text; })) {
            continue;
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace htr::lattice
