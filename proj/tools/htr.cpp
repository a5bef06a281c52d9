#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

#include "CLI11.hpp"
#include "htr/eval.hpp"
#include "htr/imaging.hpp"
#include "htr/labeling.hpp"
#include "htr/langmodel.hpp"
#include "htr/pipeline.hpp"
#include "htr/png_io.hpp"
#include "htr/segmentation.hpp"
#include "htr/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace htr;

namespace {

std::vector<fs::path> pngs_in(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

classifier::SymbolAlphabet alphabet_from(const std::string& path) {
    return path.empty() ? classifier::SymbolAlphabet::default_latin() : classifier::SymbolAlphabet::load(path);
}

std::vector<std::string> read_lexicon(const fs::path& path, std::string_view letters) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open lexicon " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto words = langmodel::tokenize(ss.str(), letters).words;
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    if (words.empty()) throw Error("lexicon has no usable words");
    return words;
}

/// `{page}_{line:03}_{word:03}` stems map back to their position; anything else is a one-word page.
imaging::WordImage word_from_file(const fs::path& file) {
    static const std::regex pattern(R"((.+)_(\d{3})_(\d{3}))");
    const auto stem = file.stem().string();
    imaging::WordImage w;
    w.image = png::read_binary(file);
    std::smatch m;
    if (std::regex_match(stem, m, pattern)) {
        w.page_id = m[1];
        w.line_index = std::stoi(m[2]);
        w.word_index = std::stoi(m[3]);
    } else {
        w.page_id = stem;
    }
    return w;
}

std::vector<imaging::WordImage> words_from_pages(const fs::path& dir, int gap) {
    imaging::PreprocessOptions opt;
    opt.word_gap = gap;
    std::vector<imaging::WordImage> words;
    for (const auto& file : pngs_in(dir)) {
        auto ws = imaging::preprocess_page(png::read_gray(file), file.stem().string(), opt);
        words.insert(words.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
    }
    return words;
}

labeling::LabelingServer* active_server = nullptr;

void on_signal(int) {
    if (active_server) active_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Handwritten word transcription over segmentation lattices"};
    app.require_subcommand(1);

    auto* pre = app.add_subcommand("preprocess", "Cut page images into word images");
    std::string pre_in, pre_out;
    int pre_gap = 7;
    bool no_deskew = false, no_deslant = false;
    pre->add_option("--in", pre_in, "Directory of page PNGs")->required();
    pre->add_option("--out", pre_out, "Output directory")->required();
    pre->add_option("--gap", pre_gap, "Minimum blank columns between words");
    pre->add_flag("--no-deskew", no_deskew);
    pre->add_flag("--no-deslant", no_deslant);

    auto* seg = app.add_subcommand("segment", "Segment word images");
    std::string seg_in, seg_out, seg_method = "polygonal";
    seg->add_option("--in", seg_in, "Directory of word PNGs")->required();
    seg->add_option("--out", seg_out, "Output directory")->required();
    seg->add_option("--method", seg_method)->check(CLI::IsMember({"over", "polygonal"}));

    auto* tc = app.add_subcommand("train-classifier", "Train the reference classifier");
    std::string tc_manifest, tc_out, tc_alphabet;
    std::size_t tc_target = 1000;
    std::uint64_t tc_seed = 1;
    classifier::TrainOptions tc_opt;
    tc->add_option("--manifest", tc_manifest)->required();
    tc->add_option("--out", tc_out)->required();
    tc->add_option("--target", tc_target, "Samples per class after balancing");
    tc->add_option("--seed", tc_seed);
    tc->add_option("--alphabet", tc_alphabet);
    tc->add_option("--epochs", tc_opt.epochs);
    tc->add_option("--learning-rate", tc_opt.learning_rate);

    auto* tl = app.add_subcommand("train-lm", "Train a character language model");
    std::string tl_corpus, tl_out, tl_alphabet, tl_smoothing = "stupid-backoff";
    langmodel::CharLM::Options tl_opt;
    tl->add_option("--corpus", tl_corpus, "Directory of plain-text files")->required();
    tl->add_option("--out", tl_out)->required();
    tl->add_option("--q", tl_opt.q);
    tl->add_option("--smoothing", tl_smoothing)->check(CLI::IsMember({"none", "stupid-backoff"}));
    tl->add_option("--alpha", tl_opt.alpha);
    tl->add_option("--alphabet", tl_alphabet);

    auto* tr = app.add_subcommand("transcribe", "Transcribe every word of a page");
    std::string tr_page, tr_config, tr_out;
    int tr_jobs = 0;
    tr->add_option("--page", tr_page)->required();
    tr->add_option("--config", tr_config)->required();
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--jobs", tr_jobs, "Overrides the config's parallelism");

    auto* tw = app.add_subcommand("transcribe-word", "Transcribe word images");
    std::vector<std::string> tw_words;
    std::string tw_config, tw_out;
    tw->add_option("--word", tw_words, "Word PNG (repeatable)")->required();
    tw->add_option("--config", tw_config)->required();
    tw->add_option("--out", tw_out, "JSONL output; stdout when omitted");

    auto* ev = app.add_subcommand("evaluate", "Score results against ground truth");
    std::string ev_results, ev_truth, ev_csv;
    std::vector<int> ev_m{1, 3, 5, 10};
    ev->add_option("--results", ev_results)->required();
    ev->add_option("--truth", ev_truth)->required();
    ev->add_option("--m", ev_m, "Cut-offs for m-precision")->delimiter(',');
    ev->add_option("--csv", ev_csv);

    auto* sw = app.add_subcommand("sweep", "Evaluate a parameter grid");
    std::string sw_grid, sw_data, sw_truth, sw_config, sw_csv;
    eval::SweepOptions sw_opt;
    sw->add_option("--grid", sw_grid)->required();
    sw->add_option("--data", sw_data, "Directory of page PNGs")->required();
    sw->add_option("--truth", sw_truth)->required();
    sw->add_option("--config", sw_config)->required();
    sw->add_option("--csv", sw_csv);
    sw->add_option("--repeats", sw_opt.repeats);
    sw->add_option("--timeout", sw_opt.word_timeout_s, "Seconds per word");

    auto* sy = app.add_subcommand("synth", "Render a synthetic corpus");
    std::string sy_glyphs, sy_lexicon, sy_out;
    std::size_t sy_n = 200, sy_samples = 0;
    std::uint64_t sy_seed = 1;
    sy->add_option("--glyphs", sy_glyphs, "Glyph PNG directory; built-in strokes when omitted");
    sy->add_option("--lexicon", sy_lexicon)->required();
    sy->add_option("--n", sy_n);
    sy->add_option("--seed", sy_seed);
    sy->add_option("--out", sy_out)->required();
    sy->add_option("--training-fragments", sy_samples,
                   "Also write a training manifest with this many non-character fragments");

    auto* sl = app.add_subcommand("serve-labeling", "Run the crowd-labeling service");
    std::string sl_pool, sl_store, sl_ui, sl_host = "127.0.0.1", sl_export;
    int sl_port = 8080;
    sl->add_option("--pool", sl_pool)->required();
    sl->add_option("--port", sl_port);
    sl->add_option("--store", sl_store, "Vote journal file");
    sl->add_option("--ui", sl_ui, "Static UI directory served at /");
    sl->add_option("--host", sl_host);
    sl->add_option("--export", sl_export, "Manifest path for /api/export");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pre->parsed()) {
            imaging::PreprocessOptions opt;
            opt.word_gap = pre_gap;
            opt.deskew = !no_deskew;
            opt.deslant = !no_deslant;
            fs::create_directories(pre_out);
            std::size_t n = 0;
            for (const auto& file : pngs_in(pre_in)) {
                for (const auto& w : imaging::preprocess_page(png::read_gray(file), file.stem().string(), opt)) {
                    png::write_binary(fs::path(pre_out) / (w.id() + ".png"), w.image);
                    ++n;
                }
            }
            std::cout << n << " words\n";
        } else if (seg->parsed()) {
            const auto method = segmentation::parse_method(seg_method);
            fs::create_directories(seg_out);
            for (const auto& file : pngs_in(seg_in)) {
                const auto stem = file.stem().string();
                const auto img = imaging::crop_margins(png::read_binary(file));
                const auto segments = segmentation::segment(img, method);
                nlohmann::json j{{"word", stem}, {"method", seg_method}, {"width", img.width()}, {"segments", nlohmann::json::array()}};
                fs::create_directories(fs::path(seg_out) / stem);
                for (std::size_t k = 0; k < segments.size(); ++k) {
                    const auto& s = segments[k];
                    const auto mask = fs::path(stem) / (std::to_string(k) + ".png");
                    png::write_binary(fs::path(seg_out) / mask,
                                      segmentation::group_image(std::span<const segmentation::Segment>(&s, 1)));
                    j["segments"].push_back({{"id", s.id},
                                             {"left", s.left},
                                             {"right", s.right},
                                             {"centroid", s.centroid_x},
                                             {"mask", mask.generic_string()}});
                }
                std::ofstream(fs::path(seg_out) / (stem + ".json")) << j.dump(2) << '\n';
            }
        } else if (tc->parsed()) {
            const auto alphabet = alphabet_from(tc_alphabet);
            const auto samples = classifier::read_manifest(tc_manifest, alphabet);
            std::mt19937_64 rng(tc_seed);
            const auto balanced = classifier::balance_training_set(samples, alphabet, tc_target, rng);
            const auto model = classifier::train_reference(balanced, alphabet, tc_opt, rng);
            model.save(tc_out);
            std::cout << balanced.size() << " training samples, " << alphabet.size() << " classes\n";
        } else if (tl->parsed()) {
            const auto alphabet = alphabet_from(tl_alphabet);
            tl_opt.smoothing = tl_smoothing == "none" ? langmodel::Smoothing::none : langmodel::Smoothing::stupid_backoff;
            const auto tokens = langmodel::read_corpus(tl_corpus, alphabet.text_chars());
            langmodel::CharLM::train(tokens.words, alphabet.text_chars(), tl_opt).save(tl_out);
            std::cout << tokens.words.size() << " words; letters dropped: " << tokens.dropped << "\n";
        } else if (tr->parsed()) {
            auto cfg = pipeline::PipelineConfig::load(tr_config);
            if (tr_jobs > 0) cfg.parallelism = tr_jobs;
            const auto models = pipeline::Models::load(cfg);
            const auto page = fs::path(tr_page);
            const auto results = pipeline::transcribe_page(png::read_gray(page), page.stem().string(), models, cfg);
            pipeline::write_results(tr_out, results);
            std::size_t done = 0;
            for (const auto& r : results) done += !r.untranscribed;
            std::cout << results.size() << " words, " << done << " transcribed\n";
        } else if (tw->parsed()) {
            const auto cfg = pipeline::PipelineConfig::load(tw_config);
            const auto models = pipeline::Models::load(cfg);
            std::vector<imaging::WordImage> words;
            for (const auto& f : tw_words) words.push_back(word_from_file(f));
            auto results = pipeline::transcribe_words(words, models, cfg);
            if (tw_out.empty()) {
                for (const auto& r : results) std::cout << r.to_json() << '\n';
            } else {
                pipeline::write_results(tw_out, results);
            }
        } else if (ev->parsed()) {
            const auto results = pipeline::read_results(ev_results);
            const auto report = eval::compute_report(results, eval::read_truth(ev_truth), ev_m);
            std::cout << report.to_json() << '\n';
            if (!ev_csv.empty()) std::ofstream(ev_csv) << report.to_csv();
        } else if (sw->parsed()) {
            const auto cfg = pipeline::PipelineConfig::load(sw_config);
            const auto models = pipeline::Models::load(cfg);
            std::ifstream in(sw_grid);
            if (!in) throw Error("cannot open grid " + sw_grid);
            std::stringstream ss;
            ss << in.rdbuf();
            const auto points = eval::SweepGrid::parse_json(ss.str()).points(cfg.lattice);
            const auto words = words_from_pages(sw_data, cfg.word_gap);
            const auto rows = eval::sweep(points, words, eval::read_truth(sw_truth), models, cfg, sw_opt);
            std::cout << eval::sweep_table(rows);
            if (!sw_csv.empty()) std::ofstream(sw_csv) << eval::sweep_csv(rows);
        } else if (sy->parsed()) {
            const auto alphabet = classifier::SymbolAlphabet::default_latin();
            const auto glyphs = sy_glyphs.empty() ? eval::GlyphSet::builtin() : eval::GlyphSet::load(sy_glyphs);
            const auto lexicon = read_lexicon(sy_lexicon, alphabet.text_chars());
            std::mt19937_64 rng(sy_seed);
            const auto corpus = eval::synth_generate(glyphs, alphabet, lexicon, sy_n, rng);
            const fs::path out(sy_out);
            fs::create_directories(out / "pages");
            for (const auto& p : corpus.pages) png::write_gray(out / "pages" / (p.id + ".png"), p.image);
            eval::write_truth(out / "truth.tsv", corpus.truth);
            if (sy_samples > 0) {
                const auto samples = eval::synth_training_samples(glyphs, alphabet, lexicon,
                                                                  lattice::LatticeParams{}.sigma, sy_samples, rng);
                fs::create_directories(out / "training");
                classifier::write_manifest(out / "training" / "manifest.jsonl", samples, alphabet);
            }
            std::cout << corpus.truth.size() << " words on " << corpus.pages.size() << " pages\n";
        } else if (sl->parsed()) {
            labeling::LabelingService::Options opt;
            opt.store = sl_store;
            labeling::LabelingService service(labeling::SegmentPool::load(sl_pool), opt);
            const fs::path manifest = sl_export.empty() ? fs::path(sl_pool) / "export" / "manifest.jsonl" : fs::path(sl_export);
            std::optional<fs::path> ui;
            if (!sl_ui.empty()) ui = sl_ui;
            labeling::LabelingServer server(service, manifest, ui);
            active_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "serving on http://" << sl_host << ':' << sl_port << std::endl;
            server.listen(sl_host, sl_port);
            active_server = nullptr;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
