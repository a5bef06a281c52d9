#include "htr/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace htr::pipeline {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

json score_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double score_from(const json& j) {
    return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

void PipelineConfig::validate() const {
    lattice.validate();
    if (parallelism < 1) throw Error("parallelism must be at least 1");
    if (word_gap < 1) throw Error("word gap must be at least 1");
    if (variant_cap < 1) throw Error("variant cap must be at least 1");
    if (word_timeout_s < 0) throw Error("word timeout must be non-negative");
}

PipelineConfig PipelineConfig::from_json(std::string_view text, const std::filesystem::path& base) {
    PipelineConfig cfg;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw Error("pipeline config must be a JSON object");
        if (j.contains("lattice")) {
            const auto& l = j["lattice"];
            cfg.lattice.sigma = l.value("sigma", cfg.lattice.sigma);
            cfg.lattice.eta = l.value("eta", cfg.lattice.eta);
            cfg.lattice.theta1 = l.value("theta1", cfg.lattice.theta1);
            cfg.lattice.theta2 = l.value("theta2", cfg.lattice.theta2);
            cfg.lattice.beta = l.value("beta", cfg.lattice.beta);
            cfg.lattice.m = l.value("m", cfg.lattice.m);
            cfg.lattice.q = l.value("q", cfg.lattice.q);
            cfg.lattice.avg_char_px = l.value("avg_char_px", cfg.lattice.avg_char_px);
            cfg.lattice.min_len_ratio = l.value("min_len_ratio", cfg.lattice.min_len_ratio);
        }
        cfg.lm_path = resolve(j.value("lm", std::string()), base);
        cfg.classifier_path = resolve(j.value("classifier", std::string()), base);
        cfg.counterparts_path = resolve(j.value("counterparts", std::string()), base);
        cfg.method = segmentation::parse_method(j.value("method", std::string("polygonal")));
        cfg.word_gap = j.value("word_gap", cfg.word_gap);
        cfg.parallelism = j.value("parallelism", cfg.parallelism);
        cfg.decode = j.value("decode", cfg.decode);
        cfg.variant_cap = j.value("variant_cap", cfg.variant_cap);
        cfg.word_timeout_s = j.value("word_timeout_s", cfg.word_timeout_s);
    } catch (const json::exception& e) {
        throw Error(std::string("pipeline config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str(), path.parent_path());
}

std::string PipelineConfig::to_json() const {
    json j{{"lattice",
            {{"sigma", lattice.sigma},
             {"eta", lattice.eta},
             {"theta1", lattice.theta1},
             {"theta2", lattice.theta2},
             {"beta", lattice.beta},
             {"m", lattice.m},
             {"q", lattice.q},
             {"avg_char_px", lattice.avg_char_px},
             {"min_len_ratio", lattice.min_len_ratio}}},
           {"lm", lm_path.string()},
           {"classifier", classifier_path.string()},
           {"counterparts", counterparts_path.string()},
           {"method", std::string(segmentation::method_name(method))},
           {"word_gap", word_gap},
           {"parallelism", parallelism},
           {"decode", decode},
           {"variant_cap", variant_cap},
           {"word_timeout_s", word_timeout_s}};
    return j.dump(2);
}

Models Models::load(const PipelineConfig& cfg) {
    if (cfg.classifier_path.empty()) throw Error("config names no classifier model");
    if (cfg.lm_path.empty()) throw Error("config names no language model");
    Models m;
    m.classifier = std::make_shared<classifier::ReferenceClassifier>(classifier::ReferenceClassifier::load(cfg.classifier_path));
    m.lm = std::make_shared<langmodel::CharLM>(langmodel::CharLM::load(cfg.lm_path));
    if (!cfg.counterparts_path.empty()) m.counterparts = decoding::CounterpartSets::load(cfg.counterparts_path);
    if (cfg.lattice.q > m.lm->q()) {
        throw Error("config asks for order " + std::to_string(cfg.lattice.q) + " but the language model has order " +
                    std::to_string(m.lm->q()));
    }
    return m;
}

std::string WordResult::to_json() const {
    json cands = json::array();
    for (const auto& t : transcriptions) {
        json c{{"text", t.text}, {"log_word_prob", score_json(t.log_word_prob)}, {"rank", t.rank}};
        if (t.decoded) c["decoded"] = true;
        cands.push_back(std::move(c));
    }
    json j{{"word_id", word_id}, {"width", width}, {"candidates", std::move(cands)}, {"timing_ms", timing_ms}};
    if (untranscribed) j["untranscribed"] = true;
    if (!error.empty()) j["error"] = error;
    return j.dump();
}

WordResult WordResult::from_json(std::string_view line) {
    try {
        const json j = json::parse(line);
        WordResult r;
        r.word_id = j.at("word_id").get<std::string>();
        r.width = j.value("width", 0);
        r.timing_ms = j.value("timing_ms", 0.0);
        r.untranscribed = j.value("untranscribed", false);
        r.error = j.value("error", std::string());
        for (const auto& c : j.at("candidates")) {
            r.transcriptions.push_back({c.at("text").get<std::string>(), score_from(c.at("log_word_prob")),
                                        c.value("rank", 0), c.value("decoded", false)});
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(std::string("word result: ") + e.what());
    }
}

WordResult transcribe_word(const imaging::WordImage& word, const Models& models, const PipelineConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    WordResult r;
    r.word_id = word.id();
    r.width = word.image.width();
    lattice::Deadline deadline;
    if (cfg.word_timeout_s > 0) {
        deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                               std::chrono::duration<double>(cfg.word_timeout_s));
    }
    try {
        if (word.image.empty() || word.image.ink_count() == 0) throw Error("word image has no ink");
        const BinaryImage img = imaging::crop_margins(word.image);
        r.width = img.width();
        const auto segments = segmentation::segment(img, cfg.method);
        const auto lat = lattice::build_lattice(segments, *models.classifier, cfg.lattice);
        auto cands = lattice::enumerate_candidates(lat, *models.lm, cfg.lattice, deadline);
        cands = lattice::length_filter(std::move(cands), img.width(), cfg.lattice);
        cands = lattice::rank_candidates(std::move(cands), cfg.lattice.m);
        if (cfg.decode) {
            const auto decoded = decoding::decode(cands, *models.lm, models.counterparts, cfg.lattice.m,
                                                  cfg.variant_cap, cfg.lattice.q);
            for (const auto& d : decoded) r.transcriptions.push_back({d.text, d.log_word_prob, 0, d.decoded});
        } else {
            for (const auto& c : cands) r.transcriptions.push_back({c.text, c.log_word_prob, 0, false});
        }
        for (std::size_t i = 0; i < r.transcriptions.size(); ++i) r.transcriptions[i].rank = static_cast<int>(i) + 1;
    } catch (const lattice::Timeout& e) {
        r.transcriptions.clear();
        r.error = e.what();
    } catch (const std::exception& e) {
        r.transcriptions.clear();
        r.error = e.what();
    }
    r.untranscribed = r.transcriptions.empty();
    r.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

std::vector<WordResult> transcribe_words(std::span<const imaging::WordImage> words, const Models& models,
                                         const PipelineConfig& cfg) {
    cfg.validate();
    std::vector<WordResult> results(words.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < words.size(); i = next++) results[i] = transcribe_word(words[i], models, cfg);
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.parallelism), words.size());
    if (threads <= 1) {
        worker();
        return results;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    pool.clear();
    return results;
}

std::vector<WordResult> transcribe_page(const GrayImage& page, const std::string& page_id, const Models& models,
                                        const PipelineConfig& cfg) {
    imaging::PreprocessOptions opt;
    opt.word_gap = cfg.word_gap;
    const auto words = imaging::preprocess_page(page, page_id, opt);
    return transcribe_words(words, models, cfg);
}

void write_results(const std::filesystem::path& path, std::span<const WordResult> results) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : results) out << r.to_json() << '\n';
}

std::vector<WordResult> read_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<WordResult> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(WordResult::from_json(line));
    return out;
}

}  // namespace htr::pipeline
