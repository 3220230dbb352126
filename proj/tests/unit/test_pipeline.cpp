#include "fixtures.hpp"
#include "sim_llm.hpp"

#include "ptool/pipeline.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

using namespace ptool;
using namespace ptool::testing;

namespace {

const std::filesystem::path kDesk = std::filesystem::path(PTOOL_SOURCE_DIR) / "data/desk";

Json desk_json() { return Json::parse(read_file(kDesk / "config.json")); }

PipelineConfig desk_config(const std::filesystem::path& data_dir) {
    PipelineConfig c = parse_config(desk_json(), kDesk);
    c.data_dir = data_dir;
    return c;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::io;
}

std::map<std::string, std::string> tree_bytes(const std::filesystem::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = read_file(e.path());
    return out;
}

int run_cli(const std::string& args, const std::filesystem::path& cwd) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" + PTOOL_CLI + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Config, DeskConfigParses) {
    const PipelineConfig c = parse_config(desk_json(), kDesk);
    EXPECT_EQ(c.seed, 20240601u);
    EXPECT_EQ(c.data_dir, kDesk / "out");
    EXPECT_EQ(c.transcript, kDesk / "transcript.jsonl");
    EXPECT_EQ(c.k_per_layer, (std::vector<int>{2, 2}));
    EXPECT_EQ(c.untrained_user_count, 1u);
    EXPECT_DOUBLE_EQ(c.trained_test_fraction, 0.25);
    EXPECT_EQ(c.review_page_size, 10u);
}

TEST(Config, RejectsBadInput) {
    auto with = [](const std::function<void(Json&)>& edit) {
        Json j = desk_json();
        edit(j);
        return code_of([&] { (void)parse_config(j); });
    };
    EXPECT_EQ(with([](Json& j) { j["colour"] = 1; }), ErrorCode::config_invalid);
    EXPECT_EQ(with([](Json& j) { j["toolgen"]["depth"] = 1; }), ErrorCode::config_invalid);
    EXPECT_EQ(with([](Json& j) { j.erase("seed"); }), ErrorCode::config_invalid);
    EXPECT_EQ(with([](Json& j) { j["seed"] = "x"; }), ErrorCode::config_invalid);
    EXPECT_EQ(with([](Json& j) { j["scenarios"] = Json::array(); }), ErrorCode::config_invalid);
    EXPECT_EQ(with([](Json& j) { j["gateway"]["backend"] = "carrier-pigeon"; }), ErrorCode::config_invalid);
    EXPECT_EQ(with([](Json& j) { j["toolgen"]["platforms_per_scenario"] = 1; }), ErrorCode::config_invalid);
    EXPECT_EQ(with([](Json& j) { j["profilegen"]["k_per_layer"] = Json::array({2, 0}); }), ErrorCode::config_invalid);
    EXPECT_EQ(with([](Json& j) { j["split"]["trained_test_fraction"] = 1.0; }), ErrorCode::config_invalid);
    EXPECT_EQ(code_of([] { (void)load_config("/nonexistent/config.json"); }), ErrorCode::config_invalid);
}

TEST(Pipeline, StagesNeedTheirUpstream) {
    TempDir dir("pipe");
    Pipeline p(desk_config(dir.path()), std::make_shared<SimulatedBackend>());
    EXPECT_EQ(code_of([&] { p.run("verify"); }), ErrorCode::missing_dependency);
    EXPECT_EQ(code_of([&] { p.run("eval", "m"); }), ErrorCode::missing_dependency);
    EXPECT_EQ(code_of([&] { p.run("gen-everything"); }), ErrorCode::config_invalid);
    p.run("gen-tools");
    EXPECT_EQ(code_of([&] { p.run("gen-queries"); }), ErrorCode::missing_dependency);
}

TEST(Pipeline, RerunIsANoOpAndConfigChangeInvalidatesDownstream) {
    TempDir dir("pipe");
    {
        Pipeline p(desk_config(dir.path()), std::make_shared<SimulatedBackend>());
        p.run_all();
        const auto again = p.run("gen-tools");
        EXPECT_TRUE(again.skipped);
        EXPECT_EQ(again.summary, "gen-tools: up to date");
    }
    const auto before = tree_bytes(dir.path());
    const CorpusManifest m = DatasetStore(dir.path()).load_manifest();
    EXPECT_EQ(m.stages.size(), 6u);
    EXPECT_EQ(m.counts.at("apis"), 6u);
    EXPECT_EQ(m.counts.at("users"), 4u);
    EXPECT_EQ(m.untrained_users.size(), 1u);

    Json j = desk_json();
    j["split"]["trained_test_fraction"] = 0.5;
    PipelineConfig changed = parse_config(j, kDesk);
    changed.data_dir = dir.path();
    Pipeline p(changed, std::make_shared<SimulatedBackend>());
    EXPECT_TRUE(p.run("verify").skipped);
    EXPECT_FALSE(p.run("split").skipped);
    EXPECT_EQ(read_file(dir / "samples.jsonl"), before.at("samples.jsonl"));
    EXPECT_NE(read_file(dir / "splits/test.jsonl"), before.at("splits/test.jsonl"));

    j["toolgen"]["regen_budget"] = 3;
    PipelineConfig retool = parse_config(j, kDesk);
    retool.data_dir = dir.path();
    Pipeline p2(retool, std::make_shared<SimulatedBackend>());
    EXPECT_FALSE(p2.run("gen-tools").skipped);
    const CorpusManifest after = DatasetStore(dir.path()).load_manifest();
    EXPECT_EQ(after.stages.size(), 1u);
    EXPECT_EQ(code_of([&] { p2.run("split"); }), ErrorCode::missing_dependency);
}

TEST(Pipeline, DeskTranscriptRunsAreBitIdentical) {
    TempDir a("pipe-a"), b("pipe-b");
    for (const auto* dir : {&a, &b}) {
        Pipeline p(desk_config(dir->path()), ScriptedBackend::from_file(kDesk / "transcript.jsonl"));
        p.run_all();
    }
    const auto ta = tree_bytes(a.path());
    EXPECT_EQ(ta, tree_bytes(b.path()));
    EXPECT_TRUE(ta.contains("splits/test.jsonl"));
    EXPECT_TRUE(ta.contains("feature_tree.json"));
}

TEST(Pipeline, EvalOfGoldIsPerfect) {
    TempDir dir("pipe");
    Pipeline p(desk_config(dir.path()), ScriptedBackend::from_file(kDesk / "transcript.jsonl"));
    p.run_all();
    const DatasetStore& store = p.store();
    std::map<std::string, std::string> preds;
    std::vector<std::string> order;
    for (const auto& s : store.load_samples("splits/test.jsonl")) {
        preds[s.id] = serialize_solution(s.gold);
        order.push_back(s.id);
    }
    ASSERT_FALSE(order.empty());
    store.save_predictions("gold", preds, order);
    p.run("eval", "gold");
    const Json report = Json::parse(read_file(dir / "reports/gold.json"));
    for (const auto& [name, m] : report["metrics"].items()) EXPECT_EQ(m["value"], 1.0) << name;

    // a file lacking predictions fails every missing sample instead of erroring
    store.save_predictions("partial", preds, {order[0]});
    p.run("eval", "partial");
    const Json partial = Json::parse(read_file(dir / "reports/partial.json"));
    if (order.size() > 1) {
        EXPECT_LT(partial["metrics"]["overall"]["value"].get<double>(), 1.0);
    }
}

TEST(Cli, ExitCodes) {
    TempDir dir("cli");
    std::filesystem::copy_file(kDesk / "config.json", dir / "config.json");
    std::filesystem::copy_file(kDesk / "transcript.jsonl", dir / "transcript.jsonl");
    EXPECT_EQ(run_cli("--config config.json --stage verify", dir.path()), 3);
    EXPECT_EQ(run_cli("--config missing.json --stage gen-tools", dir.path()), 2);
    EXPECT_EQ(run_cli("--config config.json --stage nonsense", dir.path()), 2);

    Json j = desk_json();
    j.erase("seed");
    write_file_atomic(dir / "noseed.json", j.dump());
    EXPECT_EQ(run_cli("--config noseed.json --stage gen-tools", dir.path()), 2);

    EXPECT_EQ(run_cli("--config config.json --stage gen-tools", dir.path()), 0);
    EXPECT_EQ(run_cli("--config config.json --stage gen-tools", dir.path()), 0);
}
