#include "htr/labeling.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "htr/imaging.hpp"
#include "htr/png_io.hpp"

namespace htr::labeling {

using nlohmann::json;

namespace {

std::vector<std::filesystem::path> pngs_under(const std::filesystem::path& dir, bool recursive) {
    std::vector<std::filesystem::path> out;
    if (!std::filesystem::is_directory(dir)) return out;
    auto take = [&](const std::filesystem::directory_entry& e) {
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    };
    if (recursive) {
        for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) take(e);
    } else {
        for (const auto& e : std::filesystem::directory_iterator(dir)) take(e);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string item_id(const std::filesystem::path& root, const std::filesystem::path& file) {
    auto rel = std::filesystem::relative(file, root);
    rel.replace_extension();
    std::string id = rel.generic_string();
    std::replace(id.begin(), id.end(), '/', '_');
    return id;
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

json task_json(const LabelingTask& t, const classifier::SymbolAlphabet& alphabet) {
    return {{"task_id", t.task_id},   {"symbol", alphabet[t.symbol].name}, {"positives", t.positives},
            {"negatives", t.negatives}, {"grid", t.grid},                    {"issued_at", t.issued_at_ms}};
}

LabelingTask task_from_json(const json& j, const classifier::SymbolAlphabet& alphabet) {
    LabelingTask t;
    t.task_id = j.at("task_id").get<std::string>();
    t.symbol = alphabet.index_of(j.at("symbol").get<std::string>());
    t.positives = j.at("positives").get<std::vector<std::string>>();
    t.negatives = j.at("negatives").get<std::vector<std::string>>();
    t.grid = j.at("grid").get<std::vector<std::string>>();
    t.issued_at_ms = j.at("issued_at").get<std::int64_t>();
    return t;
}

}  // namespace

SegmentPool SegmentPool::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("pool directory not found: " + dir.string());
    SegmentPool pool;
    if (std::filesystem::exists(dir / "alphabet.txt")) pool.alphabet = classifier::SymbolAlphabet::load(dir / "alphabet.txt");
    const auto seg_root = dir / "segments";
    std::set<std::string> seen;
    for (const auto& file : pngs_under(seg_root, true)) {
        PoolItem item;
        item.id = item_id(seg_root, file);
        if (!seen.insert(item.id).second) throw Error("duplicate pool id " + item.id);
        item.image = png::read_binary(file);
        if (item.image.ink_count() == 0) throw Error("pool image has no ink: " + file.string());
        pool.items.push_back(std::move(item));
    }
    const auto ex_root = dir / "exemplars";
    if (std::filesystem::is_directory(ex_root)) {
        for (const auto& e : std::filesystem::directory_iterator(ex_root)) {
            if (!e.is_directory()) continue;
            const auto name = e.path().filename().string();
            const auto symbol = pool.alphabet.find(name);
            if (!symbol) throw Error("exemplars for unknown symbol " + name);
            auto& ex = pool.exemplars[*symbol];
            for (const auto& [kind, list] : {std::pair{"pos", &ex.positives}, std::pair{"neg", &ex.negatives}}) {
                for (const auto& file : pngs_under(e.path() / kind, false)) {
                    list->push_back({"ex_" + name + "_" + kind + "_" + file.stem().string(), png::read_binary(file)});
                }
            }
        }
    }
    return pool;
}

void SegmentPool::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "segments");
    for (const auto& item : items) png::write_binary(dir / "segments" / (item.id + ".png"), item.image);
    for (const auto& [symbol, ex] : exemplars) {
        const auto base = dir / "exemplars" / alphabet[symbol].name;
        std::size_t k = 0;
        for (const auto& [kind, list] : {std::pair{"pos", &ex.positives}, std::pair{"neg", &ex.negatives}}) {
            if (list->empty()) continue;
            std::filesystem::create_directories(base / kind);
            for (const auto& e : *list) png::write_binary(base / kind / (std::to_string(k++) + ".png"), e.image);
        }
    }
    std::ofstream out(dir / "alphabet.txt");
    for (const auto& s : alphabet.symbols()) {
        out << s.name;
        if (s.text != '\0' && s.name != std::string(1, s.text)) out << ' ' << s.text;
        out << '\n';
    }
}

std::optional<std::size_t> finalize_tally(const std::map<std::size_t, int>& tallies, int quorum, int margin,
                                          std::size_t nonchar) {
    int total = 0, top = 0, runner_up = 0;
    std::size_t best = nonchar;
    for (const auto& [symbol, count] : tallies) {
        if (count < 0) throw Error("negative tally");
        total += count;
        if (count > top) {
            runner_up = top;
            top = count;
            best = symbol;
        } else if (count > runner_up) {
            runner_up = count;
        }
    }
    if (total < quorum) return std::nullopt;
    return top - runner_up >= margin ? best : nonchar;
}

LabelingService::LabelingService(SegmentPool pool, const Options& options)
    : pool_(std::move(pool)), options_(options), rng_(options.seed) {
    if (options_.snapshot_every == 0) throw Error("snapshot interval must be positive");
    for (std::size_t i = 0; i < pool_.items.size(); ++i) {
        if (!index_.emplace(pool_.items[i].id, i).second) throw Error("duplicate pool id " + pool_.items[i].id);
    }
    for (const auto& [symbol, ex] : pool_.exemplars) {
        for (const auto* list : {&ex.positives, &ex.negatives})
            for (const auto& e : *list) {
                if (index_.count(e.id) || !exemplar_index_.emplace(e.id, &e).second)
                    throw Error("duplicate image id " + e.id);
            }
    }
    if (!options_.store.empty()) replay();
}

std::vector<std::size_t> LabelingService::task_symbols() const {
    std::vector<std::size_t> out;
    for (const auto& [symbol, ex] : pool_.exemplars)
        if (!ex.positives.empty() && !pool_.alphabet.is_nonchar(symbol)) out.push_back(symbol);
    return out;
}

const SymbolExemplars& LabelingService::exemplars(std::size_t symbol) const {
    auto it = pool_.exemplars.find(symbol);
    if (it == pool_.exemplars.end()) throw NotFound("no exemplars for symbol " + pool_.alphabet[symbol].name);
    return it->second;
}

std::size_t LabelingService::item_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFound("unknown pool item " + id);
    return it->second;
}

LabelingTask LabelingService::create_task(std::size_t symbol) {
    std::lock_guard lock(mutex_);
    auto t = create_task_locked(symbol, now_ms());
    journal_locked(json{{"op", "task"}, {"task", task_json(t, pool_.alphabet)}}.dump());
    return t;
}

LabelingTask LabelingService::create_task_locked(std::size_t symbol, std::int64_t issued_at_ms) {
    if (symbol >= pool_.alphabet.size() || pool_.alphabet.is_nonchar(symbol)) throw BadRequest("not a task symbol");
    auto ex = pool_.exemplars.find(symbol);
    if (ex == pool_.exemplars.end() || ex->second.positives.empty())
        throw BadRequest("no exemplars for symbol " + pool_.alphabet[symbol].name);

    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < pool_.items.size(); ++i)
        if (!pool_.items[i].label) open.push_back(i);
    if (open.empty()) throw PoolExhausted("every pool item is finalized");
    std::shuffle(open.begin(), open.end(), rng_);
    std::stable_sort(open.begin(), open.end(),
                     [&](std::size_t a, std::size_t b) { return pool_.items[a].appearances < pool_.items[b].appearances; });
    open.resize(std::min(open.size(), kGridSize));

    LabelingTask t;
    char id[16];
    std::snprintf(id, sizeof id, "t%06zu", next_task_++);
    t.task_id = id;
    t.symbol = symbol;
    t.issued_at_ms = issued_at_ms;
    for (const auto& e : ex->second.positives) t.positives.push_back(e.id);
    for (const auto& e : ex->second.negatives) t.negatives.push_back(e.id);
    if (t.negatives.empty()) {
        // Positives of other symbols stand in as negatives.
        for (const auto& [other, oex] : pool_.exemplars) {
            if (other == symbol || oex.positives.empty()) continue;
            t.negatives.push_back(oex.positives.front().id);
            if (t.negatives.size() == 3) break;
        }
    }
    TaskState state;
    for (std::size_t i : open) {
        ++pool_.items[i].appearances;
        t.grid.push_back(pool_.items[i].id);
        state.grid_ids.insert(pool_.items[i].id);
    }
    state.task = t;
    tasks_.emplace(t.task_id, std::move(state));
    return t;
}

LabelingTask LabelingService::task(const std::string& task_id) const {
    std::lock_guard lock(mutex_);
    auto it = tasks_.find(task_id);
    if (it == tasks_.end()) throw NotFound("unknown task " + task_id);
    return it->second.task;
}

std::size_t LabelingService::submit_votes(const VoteSubmission& vote) {
    std::lock_guard lock(mutex_);
    const auto n = apply_votes_locked(vote);
    journal_locked(json{{"op", "vote"}, {"task_id", vote.task_id}, {"worker_id", vote.worker_id}, {"selected", vote.selected}}
                       .dump());
    return n;
}

std::size_t LabelingService::apply_votes_locked(const VoteSubmission& vote) {
    auto it = tasks_.find(vote.task_id);
    if (it == tasks_.end()) throw NotFound("unknown task " + vote.task_id);
    auto& state = it->second;
    if (vote.worker_id.empty()) throw BadRequest("worker id is empty");
    const std::set<std::string> selected(vote.selected.begin(), vote.selected.end());
    if (selected.size() != vote.selected.size()) throw BadRequest("selection repeats an id");
    for (const auto& id : selected)
        if (!state.grid_ids.count(id)) throw BadRequest("id not in the task grid: " + id);
    if (!state.workers.insert(vote.worker_id).second)
        throw Conflict("worker " + vote.worker_id + " already voted on " + vote.task_id);
    for (const auto& id : selected) ++pool_.items[index_.at(id)].tallies[state.task.symbol];
    ++submissions_;
    return selected.size();
}

std::vector<std::pair<std::string, std::size_t>> LabelingService::finalize(int quorum, int margin) {
    if (quorum < 1 || margin < 0) throw BadRequest("quorum must be positive and margin non-negative");
    std::lock_guard lock(mutex_);
    auto out = finalize_locked(quorum, margin);
    journal_locked(json{{"op", "finalize"}, {"quorum", quorum}, {"margin", margin}}.dump());
    return out;
}

std::vector<std::pair<std::string, std::size_t>> LabelingService::finalize_locked(int quorum, int margin) {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (auto& item : pool_.items) {
        if (item.label) continue;
        if (auto l = finalize_tally(item.tallies, quorum, margin, pool_.alphabet.nonchar_index())) {
            item.label = *l;
            out.emplace_back(item.id, *l);
        }
    }
    return out;
}

PoolStatus LabelingService::status() const {
    std::lock_guard lock(mutex_);
    PoolStatus s;
    for (const auto& item : pool_.items) {
        (item.label ? s.finalized : s.pending) += 1;
        for (const auto& [symbol, count] : item.tallies) s.votes += count;
    }
    s.tasks = tasks_.size();
    s.submissions = submissions_;
    return s;
}

std::map<std::size_t, int> LabelingService::tallies(const std::string& item_id) const {
    std::lock_guard lock(mutex_);
    return pool_.items[item_index(item_id)].tallies;
}

std::optional<std::size_t> LabelingService::label(const std::string& item_id) const {
    std::lock_guard lock(mutex_);
    return pool_.items[item_index(item_id)].label;
}

BinaryImage LabelingService::image(const std::string& id) const {
    if (auto it = exemplar_index_.find(id); it != exemplar_index_.end()) return it->second->image;
    return pool_.items[item_index(id)].image;
}

std::vector<classifier::LabeledSample> LabelingService::finalized_samples() const {
    std::lock_guard lock(mutex_);
    std::vector<classifier::LabeledSample> out;
    for (const auto& item : pool_.items) {
        if (!item.label) continue;
        out.push_back({classifier::normalize_sample(imaging::crop_margins(item.image)), *item.label,
                       classifier::Origin::crowd});
    }
    return out;
}

void LabelingService::export_manifest(const std::filesystem::path& manifest) const {
    const auto samples = finalized_samples();
    if (samples.empty()) throw Conflict("no finalized items to export");
    if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
    classifier::write_manifest(manifest, samples, pool_.alphabet);
}

void LabelingService::journal_locked(const std::string& line) {
    if (options_.store.empty() || replaying_) return;
    {
        std::ofstream out(options_.store, std::ios::app);
        if (!out) throw Error("cannot append to store " + options_.store.string());
        out << line << '\n';
        out.flush();
        if (!out) throw Error("write failed on store " + options_.store.string());
    }
    if (++journal_entries_ % options_.snapshot_every == 0) snapshot_locked();
}

void LabelingService::snapshot_locked() {
    json items = json::array();
    for (const auto& item : pool_.items) {
        json tallies = json::object();
        for (const auto& [symbol, count] : item.tallies) tallies[pool_.alphabet[symbol].name] = count;
        items.push_back({{"id", item.id},
                         {"tallies", std::move(tallies)},
                         {"appearances", item.appearances},
                         {"label", item.label ? json(pool_.alphabet[*item.label].name) : json(nullptr)}});
    }
    json tasks = json::array();
    for (const auto& [id, state] : tasks_) {
        auto t = task_json(state.task, pool_.alphabet);
        t["workers"] = state.workers;
        tasks.push_back(std::move(t));
    }
    const json snap{{"entries", journal_entries_}, {"next_task", next_task_}, {"submissions", submissions_},
                    {"items", std::move(items)},   {"tasks", std::move(tasks)}};
    auto path = options_.store;
    path += ".snapshot";
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        out << snap.dump();
        if (!out) throw Error("cannot write snapshot " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void LabelingService::replay() {
    replaying_ = true;
    std::size_t skip = 0;
    try {
        auto snap_path = options_.store;
        snap_path += ".snapshot";
        if (std::filesystem::exists(snap_path)) {
            std::ifstream in(snap_path);
            const auto snap = json::parse(in);
            skip = snap.at("entries").get<std::size_t>();
            next_task_ = snap.at("next_task").get<std::size_t>();
            submissions_ = snap.at("submissions").get<std::size_t>();
            for (const auto& j : snap.at("items")) {
                auto& item = pool_.items[item_index(j.at("id").get<std::string>())];
                item.tallies.clear();
                for (const auto& [name, count] : j.at("tallies").items())
                    item.tallies[pool_.alphabet.index_of(name)] = count.get<int>();
                item.appearances = j.at("appearances").get<int>();
                if (!j.at("label").is_null()) item.label = pool_.alphabet.index_of(j.at("label").get<std::string>());
            }
            for (const auto& j : snap.at("tasks")) {
                TaskState state;
                state.task = task_from_json(j, pool_.alphabet);
                state.grid_ids.insert(state.task.grid.begin(), state.task.grid.end());
                for (const auto& w : j.at("workers")) state.workers.insert(w.get<std::string>());
                tasks_.emplace(state.task.task_id, std::move(state));
            }
        }
        std::ifstream in(options_.store);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (n++ < skip) continue;
            const auto j = json::parse(line);
            const auto op = j.at("op").get<std::string>();
            if (op == "task") {
                TaskState state;
                state.task = task_from_json(j.at("task"), pool_.alphabet);
                for (const auto& id : state.task.grid) {
                    ++pool_.items[item_index(id)].appearances;
                    state.grid_ids.insert(id);
                }
                const auto num = std::stoul(state.task.task_id.substr(1));
                next_task_ = std::max(next_task_, num + 1);
                tasks_.emplace(state.task.task_id, std::move(state));
            } else if (op == "vote") {
                apply_votes_locked({j.at("task_id").get<std::string>(), j.at("worker_id").get<std::string>(),
                                    j.at("selected").get<std::vector<std::string>>()});
            } else if (op == "finalize") {
                finalize_locked(j.at("quorum").get<int>(), j.at("margin").get<int>());
            } else {
                throw Error("unknown journal op " + op);
            }
        }
        journal_entries_ = n;
    } catch (const json::exception& e) {
        replaying_ = false;
        throw Error(std::string("corrupt labeling store: ") + e.what());
    } catch (const std::logic_error& e) {
        replaying_ = false;
        throw Error(std::string("corrupt labeling store: ") + e.what());
    }
    replaying_ = false;
    rng_.seed(options_.seed + next_task_);
}

}  // namespace htr::labeling
