#include "fixtures.hpp"

#include "ptool/prompts.hpp"
#include "ptool/review_service.hpp"

#include <gtest/gtest.h>

#include <random>
#include <thread>

using namespace ptool;
using namespace ptool::testing;

namespace {

Sample queued(const std::string& id, const std::string& scenario = "shopping") {
    Sample s = register_sample();
    s.id = id;
    s.scenario = scenario;
    return s;
}

/// Store holding the shop registry, the wine profile and `n` queued samples.
void seed_store(const std::filesystem::path& dir, std::size_t n) {
    DatasetStore store(dir);
    store.save_registry(shop_registry());
    store.save_profiles({wine_profile()});
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "s%03zu", i);
        samples.push_back(queued(id));
    }
    store.save_samples("samples.jsonl", samples);
}

ReviewDecision decision(const std::string& id, ReviewAction action, const std::string& ts = "2026-01-01T00:00:00Z") {
    ReviewDecision d;
    d.sample_id = id;
    d.action = action;
    d.annotator_id = "ann-1";
    d.timestamp = ts;
    return d;
}

Provenance consent_from_query() {
    Provenance p = register_sample().provenance;
    p.tags[{0, "marketingConsent"}] = Origin::query;
    return p;
}

struct RunningServer {
    ReviewServer server;
    std::thread thread;
    int port;
    RunningServer(ReviewService& svc, std::size_t page_size) : server(svc, page_size) {
        port = server.bind("127.0.0.1", 0);
        thread = std::thread([this] { server.listen(); });
        server.wait_until_ready();
    }
    ~RunningServer() {
        server.stop();
        thread.join();
    }
    [[nodiscard]] httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

httplib::Result post_decision(httplib::Client& c, const std::string& id, const Json& body, const std::string& annotator = "ann-1") {
    httplib::Headers h;
    if (!annotator.empty()) h.emplace("X-Annotator-Id", annotator);
    return c.Post("/api/samples/" + id + "/decision", h, body.dump(), "application/json");
}

} // namespace

TEST(ReviewService, AcceptTwoEditOneExportTwo) {
    TempDir dir("review");
    seed_store(dir.path(), 3);
    ReviewService svc{DatasetStore(dir.path())};
    EXPECT_EQ(svc.list_pending().total, 3u);

    EXPECT_EQ(svc.submit_decision(decision("s000", ReviewAction::accept)).status, DecisionResult::Status::ok);
    ReviewDecision edit = decision("s001", ReviewAction::edit);
    edit.edited_provenance = consent_from_query();
    const auto edited = svc.submit_decision(edit);
    ASSERT_EQ(edited.status, DecisionResult::Status::ok) << edited.message;
    EXPECT_EQ(edited.sample.status, SampleStatus::accepted);
    EXPECT_EQ(edited.sample.provenance.tags.at({0, "marketingConsent"}), Origin::query);
    EXPECT_EQ(svc.submit_decision(decision("s002", ReviewAction::reject)).status, DecisionResult::Status::ok);

    const auto p = svc.progress();
    EXPECT_EQ(p.total, 3u);
    EXPECT_EQ(p.pending, 0u);
    EXPECT_EQ(p.accepted, 2u);
    EXPECT_EQ(p.rejected, 1u);

    EXPECT_EQ(svc.export_benchmark(dir / "export"), 2u);
    const auto exported = DatasetStore(dir / "export").load_samples("benchmark.jsonl");
    ASSERT_EQ(exported.size(), 2u);
    EXPECT_EQ(exported[1].provenance, consent_from_query());
    const Json m = Json::parse(read_file(dir / "export/manifest.json"));
    EXPECT_EQ(m["count"], 2);
    EXPECT_EQ(m["split_counts"]["none"], 2);
}

TEST(ReviewService, StatePersistsAndAuditReplays) {
    TempDir dir("review");
    seed_store(dir.path(), 4);
    {
        ReviewService svc{DatasetStore(dir.path())};
        svc.submit_decision(decision("s003", ReviewAction::accept));
        ReviewDecision e = decision("s000", ReviewAction::edit);
        e.edited_gold = parse_solution("{MegaMart:[searchProducts(keyword='wine')]}").value();
        e.edited_provenance = Provenance{{{{0, "keyword"}, Origin::profile}}};
        ASSERT_EQ(svc.submit_decision(e).status, DecisionResult::Status::ok);
    }
    ReviewService again{DatasetStore(dir.path())};
    EXPECT_EQ(again.audit_log().size(), 2u);
    EXPECT_EQ(again.progress().accepted, 2u);
    EXPECT_EQ(again.get("s000")->gold.calls[0].function, "searchProducts");
    EXPECT_EQ(replay_audit(again.initial_samples(), again.audit_log(), again.registry()), again.current_samples());
}

TEST(ReviewService, RejectsConflictsAndInvalidEdits) {
    TempDir dir("review");
    seed_store(dir.path(), 2);
    ReviewService svc{DatasetStore(dir.path())};
    ASSERT_EQ(svc.submit_decision(decision("s000", ReviewAction::accept)).status, DecisionResult::Status::ok);
    // identical resubmission reports the stored outcome without a new entry
    EXPECT_EQ(svc.submit_decision(decision("s000", ReviewAction::accept)).status, DecisionResult::Status::ok);
    EXPECT_EQ(svc.audit_log().size(), 1u);
    EXPECT_EQ(svc.submit_decision(decision("s000", ReviewAction::reject, "2026-01-02T00:00:00Z")).status,
              DecisionResult::Status::conflict);
    EXPECT_EQ(svc.submit_decision(decision("nope", ReviewAction::accept)).status, DecisionResult::Status::not_found);
    ReviewDecision anon = decision("s001", ReviewAction::accept);
    anon.annotator_id.clear();
    EXPECT_EQ(svc.submit_decision(anon).status, DecisionResult::Status::bad_request);

    EXPECT_EQ(svc.submit_decision(decision("s001", ReviewAction::edit)).status, DecisionResult::Status::invalid_edit);
    ReviewDecision bad_tool = decision("s001", ReviewAction::edit);
    bad_tool.edited_gold = parse_solution("{MegaMart:[signUp(username='x')]}").value();
    const auto r = svc.submit_decision(bad_tool);
    EXPECT_EQ(r.status, DecisionResult::Status::invalid_edit);
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_EQ(r.violations[0].kind, ViolationKind::unknown_tool);
    ReviewDecision partial = decision("s001", ReviewAction::edit);
    partial.edited_provenance = Provenance{{{{0, "username"}, Origin::profile}}};
    EXPECT_EQ(svc.submit_decision(partial).status, DecisionResult::Status::invalid_edit);
    EXPECT_EQ(svc.get("s001")->status, SampleStatus::model_verified);
    EXPECT_EQ(svc.audit_log().size(), 1u);
}

TEST(ReviewServiceProperty, RandomSessionsReplayToCurrentState) {
    std::mt19937_64 rng(17);
    for (int session = 0; session < 5; ++session) {
        TempDir dir("review");
        seed_store(dir.path(), 30);
        ReviewService svc{DatasetStore(dir.path())};
        std::size_t applied = 0;
        for (int i = 0; i < 80; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "s%03zu", static_cast<std::size_t>(rng() % 30));
            const auto action = static_cast<ReviewAction>(rng() % 3);
            ReviewDecision d = decision(id, action, "t" + std::to_string(i));
            d.annotator_id = "ann-" + std::to_string(rng() % 3);
            if (action == ReviewAction::edit) {
                if (rng() % 2) d.edited_provenance = consent_from_query();
                else d.edited_gold = parse_solution("{MegaMart:[nope()]}").value();
            }
            const bool was_pending = svc.get(id)->status == SampleStatus::model_verified;
            const auto r = svc.submit_decision(d);
            if (r.status == DecisionResult::Status::ok) ++applied;
            if (!was_pending) {
                EXPECT_EQ(r.status, DecisionResult::Status::conflict);
            }
        }
        const auto p = svc.progress();
        EXPECT_EQ(p.pending + p.accepted + p.rejected, 30u);
        EXPECT_EQ(p.accepted + p.rejected, applied);
        EXPECT_EQ(svc.audit_log().size(), applied);
        EXPECT_EQ(replay_audit(svc.initial_samples(), svc.audit_log(), svc.registry()), svc.current_samples());
    }
}

TEST(ReviewHttp, PaginationAndFilters) {
    TempDir dir("review");
    seed_store(dir.path(), 25);
    ReviewService svc{DatasetStore(dir.path())};
    RunningServer srv(svc, 10);
    auto c = srv.client();

    auto res = c.Get("/api/samples?page=3");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    Json j = Json::parse(res->body);
    EXPECT_EQ(j["total"], 25);
    EXPECT_EQ(j["pages"], 3);
    EXPECT_EQ(j["page"], 3);
    ASSERT_EQ(j["items"].size(), 5u);
    EXPECT_EQ(j["items"][0]["id"], "s020");
    EXPECT_EQ(j["items"][0]["profile"]["user_id"], wine_profile().user_id);

    EXPECT_EQ(Json::parse(c.Get("/api/samples?page=4")->body)["items"].size(), 0u);
    EXPECT_EQ(Json::parse(c.Get("/api/samples?scenario=travel")->body)["total"], 0);
    EXPECT_EQ(c.Get("/api/samples?status=maybe")->status, 400);
    EXPECT_EQ(c.Get("/api/samples?page=x")->status, 400);
    EXPECT_EQ(c.Get("/api/samples/s004")->status, 200);
    EXPECT_EQ(c.Get("/api/samples/zzz")->status, 404);
}

TEST(ReviewHttp, DecisionsThroughHttp) {
    TempDir dir("review");
    seed_store(dir.path(), 3);
    ReviewService svc{DatasetStore(dir.path())};
    RunningServer srv(svc, 10);
    auto c = srv.client();

    EXPECT_EQ(post_decision(c, "s000", Json{{"action", "accept"}}, "")->status, 400);
    EXPECT_EQ(post_decision(c, "s000", Json{{"action", "approve"}})->status, 400);
    EXPECT_EQ(c.Post("/api/samples/s000/decision", httplib::Headers{{"X-Annotator-Id", "a"}}, "[1", "application/json")->status, 400);
    EXPECT_EQ(post_decision(c, "missing", Json{{"action", "accept"}})->status, 404);

    const Json accept{{"action", "accept"}, {"timestamp", "2026-03-01T10:00:00Z"}};
    auto ok = post_decision(c, "s000", accept);
    ASSERT_EQ(ok->status, 200);
    EXPECT_EQ(Json::parse(ok->body)["status"], "accepted");
    EXPECT_EQ(post_decision(c, "s000", accept)->status, 200);
    EXPECT_EQ(svc.audit_log().size(), 1u);
    auto conflict = post_decision(c, "s000", Json{{"action", "reject"}});
    EXPECT_EQ(conflict->status, 409);
    EXPECT_EQ(Json::parse(conflict->body)["error"], "conflict");

    auto bad = post_decision(c, "s001", Json{{"action", "edit"}, {"edited_gold", "{MegaMart:[signUp(username='x')]}"}});
    ASSERT_EQ(bad->status, 422);
    Json bj = Json::parse(bad->body);
    EXPECT_EQ(bj["error"], "invalid-edit");
    EXPECT_EQ(bj["violations"][0]["kind"], "unknown-tool");
    EXPECT_EQ(post_decision(c, "s001", Json{{"action", "edit"}, {"edited_gold", "not a solution"}})->status, 422);
    EXPECT_EQ(post_decision(c, "s001", Json{{"action", "edit"}, {"edited_provenance", Json{{"x", 1}}}})->status, 422);

    auto edit = post_decision(c, "s001", Json{{"action", "edit"}, {"edited_provenance", to_json(consent_from_query())}});
    ASSERT_EQ(edit->status, 200) << edit->body;
    EXPECT_EQ(post_decision(c, "s002", Json{{"action", "reject"}})->status, 200);

    const Json progress = Json::parse(c.Get("/api/progress")->body);
    EXPECT_EQ(progress, (Json{{"total", 3}, {"pending", 0}, {"accepted", 2}, {"rejected", 1}}));

    auto exported = c.Post("/api/export", Json{{"destination", (dir / "out").string()}}.dump(), "application/json");
    ASSERT_EQ(exported->status, 200);
    EXPECT_EQ(Json::parse(exported->body)["count"], 2);
    EXPECT_EQ(DatasetStore(dir / "out").load_samples("benchmark.jsonl").size(), 2u);
    EXPECT_EQ(replay_audit(svc.initial_samples(), svc.audit_log(), svc.registry()), svc.current_samples());
}

TEST(ReviewHttp, ExportDefaultsUnderExportRoot) {
    TempDir dir("review");
    seed_store(dir.path(), 1);
    ReviewService svc{DatasetStore(dir.path())};
    ReviewServer server(svc);
    server.set_export_root(dir.path());
    const int port = server.bind("127.0.0.1", 0);
    std::thread t([&] { server.listen(); });
    server.wait_until_ready();
    httplib::Client c("127.0.0.1", port);
    auto res = c.Post("/api/export", "", "application/json");
    server.stop();
    t.join();
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_TRUE(std::filesystem::exists(dir / "export/benchmark.jsonl"));
}

TEST(Prompts, CheckedInTemplatesMatchDefaults) {
    const auto dir = std::filesystem::path(PTOOL_SOURCE_DIR) / "prompts";
    const PromptSet defaults;
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        ++files;
        const std::string name = e.path().stem().string();
        ASSERT_TRUE(defaults.all().contains(name)) << name;
        EXPECT_EQ(read_file(e.path()), defaults.get(name)) << name;
    }
    EXPECT_EQ(files, defaults.all().size());
    EXPECT_EQ(PromptSet::load(dir).all(), defaults.all());
}
