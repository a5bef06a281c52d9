#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "htr/classifier.hpp"

namespace htr::labeling {

struct NotFound : Error {
    using Error::Error;
};
struct Conflict : Error {
    using Error::Error;
};
struct BadRequest : Error {
    using Error::Error;
};
/// No unfinalized item is left to put in a grid.
struct PoolExhausted : Error {
    using Error::Error;
};

inline constexpr std::size_t kGridSize = 40;

struct PoolItem {
    std::string id;
    BinaryImage image;
    std::map<std::size_t, int> tallies;  // alphabet index -> votes
    int appearances = 0;
    std::optional<std::size_t> label;    // set once finalized
};

struct Exemplar {
    std::string id;
    BinaryImage image;
};

struct SymbolExemplars {
    std::vector<Exemplar> positives;
    std::vector<Exemplar> negatives;
};

/// Unlabeled segments plus exemplars. On disk:
///   segments/**.png                 pool items, id = relative path without extension, '/' -> '_'
///   exemplars/<symbol>/pos/*.png    positives
///   exemplars/<symbol>/neg/*.png    negatives (optional)
///   alphabet.txt                    optional, default Latin alphabet otherwise
struct SegmentPool {
    classifier::SymbolAlphabet alphabet = classifier::SymbolAlphabet::default_latin();
    std::vector<PoolItem> items;
    std::map<std::size_t, SymbolExemplars> exemplars;

    static SegmentPool load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;
};

struct LabelingTask {
    std::string task_id;
    std::size_t symbol = 0;
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    std::vector<std::string> grid;
    std::int64_t issued_at_ms = 0;  // unix epoch
};

struct VoteSubmission {
    std::string task_id;
    std::string worker_id;
    std::vector<std::string> selected;
};

struct PoolStatus {
    std::size_t pending = 0;
    std::size_t finalized = 0;
    std::size_t tasks = 0;
    std::size_t submissions = 0;
    long long votes = 0;
};

/// Label for one item's tallies: nullopt while total votes < quorum; the top
/// symbol when it leads the runner-up by at least `margin`; `nonchar` otherwise.
std::optional<std::size_t> finalize_tally(const std::map<std::size_t, int>& tallies, int quorum, int margin,
                                          std::size_t nonchar);

/// Thread-safe task issue, vote collection and finalization over one pool.
/// With a store path, every state change is appended to a JSON-lines journal
/// and a snapshot is rewritten every `snapshot_every` entries; construction
/// replays snapshot and journal.
class LabelingService {
public:
    struct Options {
        std::filesystem::path store;  // empty: in memory only
        std::size_t snapshot_every = 100;
        std::uint64_t seed = 1;
    };

    LabelingService(SegmentPool pool, const Options& options);
    explicit LabelingService(SegmentPool pool) : LabelingService(std::move(pool), Options{}) {}

    const classifier::SymbolAlphabet& alphabet() const { return pool_.alphabet; }

    /// Symbols that have at least one positive exemplar, in alphabet order.
    std::vector<std::size_t> task_symbols() const;
    const SymbolExemplars& exemplars(std::size_t symbol) const;

    LabelingTask create_task(std::size_t symbol);
    LabelingTask task(const std::string& task_id) const;

    /// Returns the number of votes added.
    std::size_t submit_votes(const VoteSubmission& vote);

    /// Newly finalized (id, label) pairs.
    std::vector<std::pair<std::string, std::size_t>> finalize(int quorum = 3, int margin = 2);

    PoolStatus status() const;
    std::map<std::size_t, int> tallies(const std::string& item_id) const;
    std::optional<std::size_t> label(const std::string& item_id) const;

    /// Pool item or exemplar image.
    BinaryImage image(const std::string& id) const;

    /// Normalized copies of every finalized item, non-character ones included.
    std::vector<classifier::LabeledSample> finalized_samples() const;
    /// Classifier manifest plus images next to it. Throws Conflict when nothing is finalized.
    void export_manifest(const std::filesystem::path& manifest) const;

private:
    struct TaskState {
        LabelingTask task;
        std::set<std::string> grid_ids;
        std::set<std::string> workers;
    };

    std::size_t item_index(const std::string& id) const;
    LabelingTask create_task_locked(std::size_t symbol, std::int64_t issued_at_ms);
    std::size_t apply_votes_locked(const VoteSubmission& vote);
    std::vector<std::pair<std::string, std::size_t>> finalize_locked(int quorum, int margin);
    void journal_locked(const std::string& line);
    void snapshot_locked();
    void replay();

    mutable std::mutex mutex_;
    SegmentPool pool_;
    Options options_;
    std::mt19937_64 rng_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, const Exemplar*> exemplar_index_;
    std::map<std::string, TaskState> tasks_;
    std::size_t next_task_ = 1;
    std::size_t submissions_ = 0;
    std::size_t journal_entries_ = 0;
    bool replaying_ = false;
};

/// HTTP front end. `ui_dir`, when set, is served as static files at `/`.
class LabelingServer {
public:
    LabelingServer(LabelingService& service, std::filesystem::path manifest_path,
                   std::optional<std::filesystem::path> ui_dir = std::nullopt);
    ~LabelingServer();
    LabelingServer(const LabelingServer&) = delete;
    LabelingServer& operator=(const LabelingServer&) = delete;

    /// Binds `host:port` (port 0 picks a free one) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Blocks serving on the calling thread.
    void listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace htr::labeling
