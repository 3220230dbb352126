// Command-line driver for the synthesis pipeline, evaluation and review server.

#include "ptool/pipeline.hpp"
#include "ptool/review_service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace {

ptool::ReviewServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int exit_code(ptool::ErrorCode code) {
    switch (code) {
    case ptool::ErrorCode::config_invalid: return 2;
    case ptool::ErrorCode::missing_dependency: return 3;
    default: return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized tool-invocation data synthesis and evaluation"};
    std::string config_path;
    std::string stage = "all";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<std::string> model;
    std::optional<std::string> predictions;
    std::optional<std::string> static_dir;
    app.add_option("--config", config_path, "Pipeline config (JSON)")->required();
    app.add_option("--stage", stage,
                   "gen-tools, gen-profiles, gen-behaviors, gen-queries, verify, split, eval, serve-review, or all")
        ->capture_default_str();
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--backend", backend, "Override the LLM backend")->check(CLI::IsMember({"remote", "scripted"}));
    app.add_option("--model", model, "Model id: generation model, or the evaluated model for eval");
    app.add_option("--predictions", predictions, "Prediction file for eval (default predictions/<model>.jsonl)");
    app.add_option("--static", static_dir, "Directory of review UI assets to serve");
    CLI11_PARSE(app, argc, argv);

    try {
        ptool::PipelineConfig config = ptool::load_config(config_path);
        if (seed) config.seed = *seed;
        if (backend) config.backend = *backend;
        if (model && stage != "eval") config.gateway.model_id = *model;

        if (stage == "serve-review") {
            ptool::Pipeline pipeline(config);
            if (!pipeline.store().load_manifest().stages.contains("verify"))
                throw ptool::Error(ptool::ErrorCode::missing_dependency, "serve-review needs verify to run first");
            ptool::ReviewService service{ptool::DatasetStore(config.data_dir)};
            std::optional<std::filesystem::path> assets;
            if (static_dir) assets = *static_dir;
            ptool::ReviewServer server(service, config.review_page_size, assets);
            server.set_export_root(config.data_dir);
            const int port = server.bind(config.review_host, config.review_port);
            if (port < 0) throw ptool::Error(ptool::ErrorCode::io, "cannot bind " + config.review_host + ":" +
                                                                      std::to_string(config.review_port));
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "review service on http://" << config.review_host << ":" << port << "\n";
            server.listen();
            return 0;
        }

        ptool::Pipeline pipeline(config, nullptr, &std::cerr);
        if (stage == "all") {
            pipeline.run_all();
            return 0;
        }
        std::optional<std::filesystem::path> pred_path;
        if (predictions) pred_path = *predictions;
        const auto outcome = pipeline.run(stage, model, pred_path);
        (stage == "eval" ? std::cout : std::cerr) << outcome.summary << (stage == "eval" ? "" : "\n");
        return 0;
    } catch (const ptool::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
