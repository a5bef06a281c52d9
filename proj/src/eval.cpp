#include "htr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace htr::eval {

namespace {

void normalize(std::map<int, double>& hist, std::size_t n) {
    for (auto& [k, v] : hist) v /= static_cast<double>(n);
}

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

}  // namespace

GroundTruth read_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open truth file " + path.string());
    GroundTruth truth;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
            throw Error("truth file line " + std::to_string(lineno) + ": expected word_id<TAB>transcription");
        }
        truth[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return truth;
}

void write_truth(const std::filesystem::path& path, const GroundTruth& truth) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& [id, text] : truth) out << id << '\t' << text << '\n';
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

int exact_rank(const pipeline::WordResult& result, std::string_view truth) {
    for (std::size_t i = 0; i < result.transcriptions.size(); ++i)
        if (result.transcriptions[i].text == truth) return static_cast<int>(i) + 1;
    return -1;
}

double reciprocal_rank(const pipeline::WordResult& result, std::string_view truth) {
    if (truth.empty()) throw Error("reciprocal_rank: empty truth");
    const int r = exact_rank(result, truth);
    return r > 0 ? 1.0 / r : 0.0;
}

EvalReport compute_report(std::span<const pipeline::WordResult> results, const GroundTruth& truth,
                          std::span<const int> m_values) {
    EvalReport rep;
    rep.words = results.size();
    std::vector<int> ms(m_values.begin(), m_values.end());
    if (ms.empty()) ms = {1, 3, 5, 10};
    for (int m : ms) {
        if (m < 1) throw Error("m values must be positive");
        rep.m_precision[m] = 0.0;
    }
    if (results.empty()) return rep;

    double rr = 0.0, ms_total = 0.0;
    for (const auto& r : results) {
        auto it = truth.find(r.word_id);
        if (it == truth.end()) throw Error("no ground truth for word " + r.word_id);
        const int rank = exact_rank(r, it->second);
        rr += rank > 0 ? 1.0 / rank : 0.0;
        ms_total += r.timing_ms;
        rep.rank_histogram[rank] += 1.0;
        for (int m : ms)
            if (rank > 0 && rank <= m) rep.m_precision[m] += 1.0;
        const std::string top = r.transcriptions.empty() ? std::string() : r.transcriptions.front().text;
        rep.ed_histogram[static_cast<int>(levenshtein(top, it->second))] += 1.0;
    }
    const auto n = results.size();
    rep.mrr = rr / static_cast<double>(n);
    rep.mwpt_ms = ms_total / static_cast<double>(n);
    normalize(rep.rank_histogram, n);
    normalize(rep.ed_histogram, n);
    normalize(rep.m_precision, n);
    return rep;
}

std::string EvalReport::to_json() const {
    auto hist = [](const std::map<int, double>& h) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : h) j[std::to_string(k)] = v;
        return j;
    };
    nlohmann::json j{{"words", words},
                     {"mrr", mrr},
                     {"mwpt_ms", mwpt_ms},
                     {"m_precision", hist(m_precision)},
                     {"ed_histogram", hist(ed_histogram)},
                     {"rank_histogram", hist(rank_histogram)}};
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream o;
    o << "metric,key,value\n";
    o << "words,," << words << '\n';
    o << "mrr,," << fmt(mrr) << '\n';
    o << "mwpt_ms,," << fmt(mwpt_ms) << '\n';
    for (const auto& [k, v] : m_precision) o << "m_precision," << k << ',' << fmt(v) << '\n';
    for (const auto& [k, v] : ed_histogram) o << "ed_histogram," << k << ',' << fmt(v) << '\n';
    for (const auto& [k, v] : rank_histogram) o << "rank_histogram," << k << ',' << fmt(v) << '\n';
    return o.str();
}

SweepGrid SweepGrid::parse_json(std::string_view text) {
    SweepGrid g;
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_object()) throw Error("sweep grid must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            if (!value.is_array() || value.empty()) throw Error("sweep grid axis " + key + " must be a non-empty array");
            if (key == "eta") g.eta = value.get<std::vector<double>>();
            else if (key == "theta1") g.theta1 = value.get<std::vector<double>>();
            else if (key == "theta2") g.theta2 = value.get<std::vector<double>>();
            else if (key == "beta") g.beta = value.get<std::vector<double>>();
            else if (key == "q") g.q = value.get<std::vector<int>>();
            else throw Error("unknown sweep axis " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("sweep grid: ") + e.what());
    }
    return g;
}

std::vector<lattice::LatticeParams> SweepGrid::points(const lattice::LatticeParams& base) const {
    auto axis = [](const std::vector<double>& v, double d) { return v.empty() ? std::vector<double>{d} : v; };
    const auto etas = axis(eta, base.eta), t1s = axis(theta1, base.theta1), t2s = axis(theta2, base.theta2),
               betas = axis(beta, base.beta);
    const auto qs = q.empty() ? std::vector<int>{base.q} : q;
    std::vector<lattice::LatticeParams> out;
    for (double e : etas)
        for (double a : t1s)
            for (double b : t2s)
                for (double be : betas)
                    for (int qq : qs) {
                        auto p = base;
                        p.eta = e;
                        p.theta1 = a;
                        p.theta2 = b;
                        p.beta = be;
                        p.q = qq;
                        p.validate();
                        out.push_back(p);
                    }
    return out;
}

std::vector<SweepRow> sweep(const std::vector<lattice::LatticeParams>& points,
                            std::span<const imaging::WordImage> words, const GroundTruth& truth,
                            const pipeline::Models& models, const pipeline::PipelineConfig& base,
                            const SweepOptions& options) {
    if (options.repeats < 1) throw Error("sweep repeats must be at least 1");
    std::vector<pipeline::PipelineConfig> cfgs;
    for (const auto& p : points) {
        auto cfg = base;
        cfg.lattice = p;
        cfg.word_timeout_s = options.word_timeout_s;
        cfgs.push_back(cfg);
    }
    // Each word is timed at every point back to back, so drift hits all points alike.
    // The first run of a word is cold; the starting point rotates so no point always pays for it.
    std::vector<std::vector<pipeline::WordResult>> results(points.size(),
                                                           std::vector<pipeline::WordResult>(words.size()));
    std::vector<std::vector<bool>> seen(points.size(), std::vector<bool>(words.size(), false));
    for (int rep = 0; rep < options.repeats; ++rep) {
        for (std::size_t i = 0; i < words.size(); ++i) {
            for (std::size_t step = 0; step < points.size(); ++step) {
                const std::size_t k = (step + i + static_cast<std::size_t>(rep)) % points.size();
                auto again = pipeline::transcribe_words(words.subspan(i, 1), models, cfgs[k]);
                if (!seen[k][i]) {
                    results[k][i] = std::move(again.front());
                    seen[k][i] = true;
                } else {
                    results[k][i].timing_ms = std::min(results[k][i].timing_ms, again.front().timing_ms);
                }
            }
        }
    }
    std::vector<SweepRow> rows;
    for (std::size_t k = 0; k < points.size(); ++k) {
        SweepRow row;
        row.params = points[k];
        for (const auto& r : results[k])
            if (r.error.find("timed out") != std::string::npos) ++row.timeouts;
        row.report = compute_report(results[k], truth, options.m_values);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_table(std::span<const SweepRow> rows) {
    std::ostringstream o;
    char line[256];
    std::snprintf(line, sizeof line, "%8s %8s %8s %10s %3s %8s %10s %8s %8s\n", "eta", "theta1", "theta2", "beta", "q",
                  "MRR", "MWPT(ms)", "1-prec", "timeouts");
    o << line;
    for (const auto& r : rows) {
        const auto it = r.report.m_precision.find(1);
        const double p1 = it == r.report.m_precision.end() ? 0.0 : it->second;
        std::snprintf(line, sizeof line, "%8.3g %8.3g %8.3g %10.3g %3d %8.4f %10.3f %8.4f %8zu\n", r.params.eta,
                      r.params.theta1, r.params.theta2, r.params.beta, r.params.q, r.report.mrr, r.report.mwpt_ms, p1,
                      r.timeouts);
        o << line;
    }
    return o.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::ostringstream o;
    o << "eta,theta1,theta2,beta,q,mrr,mwpt_ms,precision_1,timeouts\n";
    for (const auto& r : rows) {
        const auto it = r.report.m_precision.find(1);
        o << fmt(r.params.eta) << ',' << fmt(r.params.theta1) << ',' << fmt(r.params.theta2) << ','
          << fmt(r.params.beta) << ',' << r.params.q << ',' << fmt(r.report.mrr) << ',' << fmt(r.report.mwpt_ms) << ','
          << fmt(it == r.report.m_precision.end() ? 0.0 : it->second) << ',' << r.timeouts << '\n';
    }
    return o.str();
}

}  // namespace htr::eval
