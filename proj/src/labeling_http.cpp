#include <fstream>
#include <sstream>
#include <thread>

#include "htr/labeling.hpp"
#include "htr/png_io.hpp"
#include "httplib.h"
#include "json.hpp"

namespace htr::labeling {

using nlohmann::json;

namespace {

std::string image_url(const std::string& id) { return "/img/" + id + ".png"; }

json refs(const std::vector<std::string>& ids) {
    json out = json::array();
    for (const auto& id : ids) out.push_back({{"id", id}, {"url", image_url(id)}});
    return out;
}

json task_body(const LabelingTask& t, const classifier::SymbolAlphabet& alphabet) {
    return {{"task_id", t.task_id},
            {"symbol", alphabet[t.symbol].name},
            {"positives", refs(t.positives)},
            {"negatives", refs(t.negatives)},
            {"grid", refs(t.grid)},
            {"issued_at", t.issued_at_ms}};
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

int param_int(const httplib::Request& req, const std::string& key, int fallback) {
    if (!req.has_param(key)) return fallback;
    const auto v = req.get_param_value(key);
    std::size_t used = 0;
    int n = 0;
    try {
        n = std::stoi(v, &used);
    } catch (const std::exception&) {
        throw BadRequest("bad integer for " + key);
    }
    if (used != v.size()) throw BadRequest("bad integer for " + key);
    return n;
}

/// Maps service errors onto status codes.
template <class F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const NotFound& e) {
        send_error(res, 404, e.what());
    } catch (const Conflict& e) {
        send_error(res, 409, e.what());
    } catch (const PoolExhausted& e) {
        send_error(res, 410, e.what());
    } catch (const BadRequest& e) {
        send_error(res, 400, e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

}  // namespace

struct LabelingServer::Impl {
    LabelingService& service;
    std::filesystem::path manifest_path;
    httplib::Server server;
    std::thread thread;

    Impl(LabelingService& s, std::filesystem::path manifest) : service(s), manifest_path(std::move(manifest)) {}
    void routes(const std::optional<std::filesystem::path>& ui_dir);
};

void LabelingServer::Impl::routes(const std::optional<std::filesystem::path>& ui_dir) {
    const auto& alphabet = service.alphabet();

    server.Get("/api/symbols", [this, &alphabet](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json symbols = json::array();
            for (std::size_t s : service.task_symbols()) {
                const auto& ex = service.exemplars(s);
                std::vector<std::string> pos, neg;
                for (const auto& e : ex.positives) pos.push_back(e.id);
                for (const auto& e : ex.negatives) neg.push_back(e.id);
                symbols.push_back({{"name", alphabet[s].name},
                                   {"text", std::string(1, alphabet[s].text)},
                                   {"positives", refs(pos)},
                                   {"negatives", refs(neg)}});
            }
            send_json(res, 200, {{"symbols", symbols}});
        });
    });

    server.Post("/api/tasks", [this, &alphabet](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!req.has_param("symbol")) throw BadRequest("missing symbol");
            const auto symbol = alphabet.find(req.get_param_value("symbol"));
            if (!symbol) throw BadRequest("unknown symbol " + req.get_param_value("symbol"));
            send_json(res, 200, task_body(service.create_task(*symbol), alphabet));
        });
    });

    server.Get(R"(/api/tasks/([^/]+))", [this, &alphabet](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, task_body(service.task(req.matches[1]), alphabet)); });
    });

    server.Post(R"(/api/tasks/([^/]+)/votes)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = json::parse(req.body);
            if (!body.is_object()) throw BadRequest("vote body must be an object");
            VoteSubmission v;
            v.task_id = req.matches[1];
            v.worker_id = body.at("worker_id").get<std::string>();
            v.selected = body.at("selected").get<std::vector<std::string>>();
            const auto added = service.submit_votes(v);
            send_json(res, 200, {{"task_id", v.task_id}, {"accepted", added}});
        });
    });

    server.Get("/api/pool/status", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            const auto s = service.status();
            send_json(res, 200,
                      {{"pending", s.pending},
                       {"finalized", s.finalized},
                       {"tasks", s.tasks},
                       {"submissions", s.submissions},
                       {"votes", s.votes}});
        });
    });

    server.Post("/api/finalize", [this, &alphabet](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto done = service.finalize(param_int(req, "quorum", 3), param_int(req, "margin", 2));
            json items = json::array();
            for (const auto& [id, label] : done) items.push_back({{"id", id}, {"label", alphabet[label].name}});
            send_json(res, 200, {{"finalized", items}, {"pending", service.status().pending}});
        });
    });

    server.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            service.export_manifest(manifest_path);
            std::ifstream in(manifest_path);
            std::stringstream ss;
            ss << in.rdbuf();
            res.status = 200;
            res.set_content(ss.str(), "application/x-ndjson");
        });
    });

    server.Get(R"(/img/([^/]+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto bytes = png::encode_binary(service.image(req.matches[1]));
            res.status = 200;
            res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
        });
    });

    if (ui_dir) {
        if (!server.set_mount_point("/", ui_dir->string())) throw Error("cannot serve UI from " + ui_dir->string());
    }
}

LabelingServer::LabelingServer(LabelingService& service, std::filesystem::path manifest_path,
                               std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(service, std::move(manifest_path))) {
    impl_->routes(ui_dir);
}

LabelingServer::~LabelingServer() { stop(); }

int LabelingServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void LabelingServer::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void LabelingServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace htr::labeling
