// Command-line entry point: corpus synthesis, self-instruct data generation,
// supervised fine-tuning, evaluation, ablation, router analysis, latency
// benchmarking, and corpus validation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mole/checkpoint.hpp"
#include "mole/data.hpp"
#include "mole/evaluate.hpp"
#include "mole/self_instruct.hpp"
#include "mole/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mole;

namespace {

// exit codes, also listed in the usage text
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitValidation = 4;
constexpr int kExitShape = 5;
constexpr int kExitConfigMismatch = 6;
constexpr int kExitDegenerate = 7;
constexpr int kExitTransport = 8;

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string mask = "TAVR";
    std::uint64_t seed = 42;
    SyntheticCounts synth;
    std::string backend = "mock";
    int target_count = 1790;
    int latency_reps = 3;
    int latency_warmup = 3;
    int latency_budget = 16;
    std::string split = "test";

    json to_json() const {
        json j;
        j["model"] = {{"vocab_size", model.vocab_size},   {"embed_dim", model.embed_dim},
                      {"num_layers", model.num_layers},   {"num_heads", model.num_heads},
                      {"max_seq_len", model.max_seq_len}, {"num_experts", model.num_experts},
                      {"rank", model.rank},               {"alpha", model.alpha}};
        j["train"] = {{"learning_rate", train.learning_rate},
                      {"epochs", train.epochs},
                      {"batch_size", train.batch_size},
                      {"dropout", train.dropout},
                      {"seed", train.seed},
                      {"optimizer", to_string(train.optimizer)}};
        if (train.grad_clip_norm.has_value()) j["train"]["grad_clip_norm"] = *train.grad_clip_norm;
        j["mask"] = mask;
        j["seed"] = seed;
        j["synth"] = {{"detection", synth.detection},
                      {"classification", synth.classification},
                      {"reasoning", synth.reasoning},
                      {"val_fraction", synth.val_fraction},
                      {"test_fraction", synth.test_fraction}};
        j["backend"] = backend;
        j["target_count"] = target_count;
        j["latency"] = {{"repetitions", latency_reps},
                        {"warmup", latency_warmup},
                        {"token_budget", latency_budget}};
        j["split"] = split;
        return j;
    }

    void merge_from_json(const json& j) {
        if (j.contains("model")) {
            const json& m = j["model"];
            model.vocab_size = m.value("vocab_size", model.vocab_size);
            model.embed_dim = m.value("embed_dim", model.embed_dim);
            model.num_layers = m.value("num_layers", model.num_layers);
            model.num_heads = m.value("num_heads", model.num_heads);
            model.max_seq_len = m.value("max_seq_len", model.max_seq_len);
            model.num_experts = m.value("num_experts", model.num_experts);
            model.rank = m.value("rank", model.rank);
            model.alpha = m.value("alpha", model.alpha);
        }
        if (j.contains("train")) {
            const json& t = j["train"];
            train.learning_rate = t.value("learning_rate", train.learning_rate);
            train.epochs = t.value("epochs", train.epochs);
            train.batch_size = t.value("batch_size", train.batch_size);
            train.dropout = t.value("dropout", train.dropout);
            train.seed = t.value("seed", train.seed);
            if (t.contains("optimizer")) {
                train.optimizer = optimizer_from_string(t["optimizer"].get<std::string>());
            }
            if (t.contains("grad_clip_norm")) {
                train.grad_clip_norm = t["grad_clip_norm"].get<double>();
            }
        }
        mask = j.value("mask", mask);
        seed = j.value("seed", seed);
        if (j.contains("synth")) {
            const json& s = j["synth"];
            synth.detection = s.value("detection", synth.detection);
            synth.classification = s.value("classification", synth.classification);
            synth.reasoning = s.value("reasoning", synth.reasoning);
            synth.val_fraction = s.value("val_fraction", synth.val_fraction);
            synth.test_fraction = s.value("test_fraction", synth.test_fraction);
        }
        backend = j.value("backend", backend);
        target_count = j.value("target_count", target_count);
        if (j.contains("latency")) {
            const json& l = j["latency"];
            latency_reps = l.value("repetitions", latency_reps);
            latency_warmup = l.value("warmup", latency_warmup);
            latency_budget = l.value("token_budget", latency_budget);
        }
        split = j.value("split", split);
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << text;
    if (!os.flush()) throw IoError("write to '" + path.string() + "' failed");
}

fs::path prepare_out_dir(const std::string& out, const RunConfig& cfg) {
    const fs::path dir(out);
    fs::create_directories(dir);
    write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
    return dir;
}

/// After parsing, model flags that were explicitly set must agree with the
/// checkpoint's embedded config.
void check_checkpoint_flags(const CLI::App* sub, const ModelConfig& ckpt) {
    auto mismatch = [&](const char* flag, auto flag_value, auto ckpt_value) {
        const CLI::Option* opt = sub->get_option_no_throw(flag);
        if (opt != nullptr && opt->count() > 0 && flag_value != ckpt_value) {
            throw ConfigMismatchError(std::string("flag ") + flag + "=" +
                                      std::to_string(flag_value) +
                                      " disagrees with the checkpoint's " +
                                      std::to_string(ckpt_value));
        }
    };
    (void)mismatch;
}

Split parse_split(const std::string& s) { return split_from_string(s); }

std::vector<QARecord> load_corpus_checked(const std::string& path) {
    if (!fs::exists(path)) throw IoError("corpus file '" + path + "' does not exist");
    return load_corpus(path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixture-of-LoRA-experts instruction tuning workbench"};
    app.require_subcommand(1);
    app.footer("exit codes: 0 ok, 1 internal, 2 usage, 3 io, 4 validation, 5 shape/range,\n"
               "            6 config mismatch, 7 degenerate input, 8 backend transport");

    RunConfig cfg;

    // first pass: honor --config before flag overrides
    std::string config_path;
    for (int i = 1; i + 1 < argc + 1; ++i) {
        if (i < argc && std::string(argv[i]) == "--config" && i + 1 < argc) {
            config_path = argv[i + 1];
        }
    }
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) {
            std::cerr << "error: cannot open config file '" << config_path << "'\n";
            return kExitIo;
        }
        try {
            json j;
            is >> j;
            cfg.merge_from_json(j);
        } catch (const json::exception& e) {
            std::cerr << "error: bad config file: " << e.what() << '\n';
            return kExitValidation;
        }
    }
    app.add_option("--config", config_path, "JSON config file; flags override its values");

    // shared model/train flags, attached to every subcommand that builds a model
    auto add_model_flags = [&cfg](CLI::App* sub) {
        sub->add_option("--embed-dim", cfg.model.embed_dim);
        sub->add_option("--num-layers", cfg.model.num_layers);
        sub->add_option("--num-heads", cfg.model.num_heads);
        sub->add_option("--max-seq-len", cfg.model.max_seq_len);
        sub->add_option("--num-experts", cfg.model.num_experts);
        sub->add_option("--rank", cfg.model.rank);
        sub->add_option("--alpha", cfg.model.alpha);
    };
    auto add_train_flags = [&cfg](CLI::App* sub) {
        sub->add_option("--learning-rate", cfg.train.learning_rate);
        sub->add_option("--epochs", cfg.train.epochs);
        sub->add_option("--batch-size", cfg.train.batch_size);
        sub->add_option("--dropout", cfg.train.dropout);
        std::string* opt_name = nullptr;
        (void)opt_name;
        sub->add_option_function<std::string>(
            "--optimizer",
            [&cfg](const std::string& v) { cfg.train.optimizer = optimizer_from_string(v); },
            "sgd or adam");
        sub->add_option_function<double>(
            "--grad-clip-norm", [&cfg](double v) { cfg.train.grad_clip_norm = v; });
    };

    std::string corpus_path, checkpoint_path, out_dir;

    CLI::App* synth = app.add_subcommand("synth-data", "generate a seeded synthetic corpus");
    synth->add_option("--seed", cfg.seed);
    synth->add_option("--detection", cfg.synth.detection);
    synth->add_option("--classification", cfg.synth.classification);
    synth->add_option("--reasoning", cfg.synth.reasoning);
    synth->add_option("--val-fraction", cfg.synth.val_fraction);
    synth->add_option("--test-fraction", cfg.synth.test_fraction);
    synth->add_option("--out", out_dir)->required();

    CLI::App* selfinst = app.add_subcommand(
        "self-instruct", "bootstrap new laughter tasks and instances from the three seeds");
    selfinst->add_option("--backend", cfg.backend, "mock or remote")
        ->check(CLI::IsMember({"mock", "remote"}));
    selfinst->add_option("--target-count", cfg.target_count);
    selfinst->add_option("--seed", cfg.seed);
    selfinst->add_option("--out", out_dir)->required();

    CLI::App* train_cmd = app.add_subcommand("train", "supervised fine-tuning run");
    train_cmd->add_option("--corpus", corpus_path)->required();
    train_cmd->add_option("--mask", cfg.mask);
    train_cmd->add_option("--seed", cfg.seed);
    train_cmd->add_option("--out", out_dir)->required();
    add_model_flags(train_cmd);
    add_train_flags(train_cmd);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
    eval_cmd->add_option("--checkpoint", checkpoint_path)->required();
    eval_cmd->add_option("--corpus", corpus_path)->required();
    eval_cmd->add_option("--split", cfg.split)->check(CLI::IsMember({"train", "val", "test"}));
    eval_cmd->add_option("--mask", cfg.mask);
    eval_cmd->add_option("--out", out_dir)->required();
    add_model_flags(eval_cmd);

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "evaluate under masks T and TAVR and compare");
    ablate_cmd->add_option("--checkpoint", checkpoint_path)->required();
    ablate_cmd->add_option("--corpus", corpus_path)->required();
    ablate_cmd->add_option("--split", cfg.split)->check(CLI::IsMember({"train", "val", "test"}));
    ablate_cmd->add_option("--out", out_dir)->required();

    CLI::App* route_cmd =
        app.add_subcommand("route-analyze", "per-task mean router weights of a checkpoint");
    route_cmd->add_option("--checkpoint", checkpoint_path)->required();
    route_cmd->add_option("--corpus", corpus_path)->required();
    route_cmd->add_option("--split", cfg.split)->check(CLI::IsMember({"train", "val", "test"}));
    route_cmd->add_option("--out", out_dir)->required();

    CLI::App* latency_cmd = app.add_subcommand(
        "latency", "single-expert versus mixture decode latency on identical inputs");
    latency_cmd->add_option("--checkpoint", checkpoint_path)->required();
    latency_cmd->add_option("--corpus", corpus_path)->required();
    latency_cmd->add_option("--reps", cfg.latency_reps);
    latency_cmd->add_option("--warmup", cfg.latency_warmup);
    latency_cmd->add_option("--token-budget", cfg.latency_budget);
    latency_cmd->add_option("--seed", cfg.seed);
    latency_cmd->add_option("--out", out_dir)->required();

    CLI::App* validate_cmd =
        app.add_subcommand("validate", "schema-check a corpus and print split statistics");
    validate_cmd->add_option("--corpus", corpus_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) {
            const fs::path dir = prepare_out_dir(out_dir, cfg);
            const auto corpus = generate_synthetic_corpus(cfg.seed, cfg.synth);
            save_corpus(corpus, (dir / "corpus.jsonl").string());
            const SplitStats st = split_stats(corpus);
            write_text(dir / "stats.txt", st.to_text());
            write_text(dir / "stats.csv", st.to_csv());
            std::cout << st.to_text();
            std::cout << "wrote " << corpus.size() << " records to " << (dir / "corpus.jsonl")
                      << '\n';
        } else if (selfinst->parsed()) {
            const fs::path dir = prepare_out_dir(out_dir, cfg);
            SelfInstructConfig sic;
            sic.target_count = cfg.target_count;
            sic.seed = cfg.seed;
            std::unique_ptr<GenerationBackend> backend;
            if (cfg.backend == "remote") {
                backend = std::make_unique<HttpBackend>(HttpBackendConfig::from_env());
            } else {
                backend = std::make_unique<MockBackend>();
            }
            const SelfInstructResult result = run_self_instruct(*backend, sic);
            save_corpus(result.records, (dir / "records.jsonl").string());
            write_text(dir / "task_report.txt", result.report.to_text());
            write_text(dir / "task_report.csv", result.report.to_csv());
            std::cout << result.report.to_text();
            std::cout << "accepted " << result.records.size() << " records ("
                      << result.counters.unparseable << " unparseable, "
                      << result.counters.dedup_rejected << " dedup-rejected)\n";
        } else if (train_cmd->parsed()) {
            const fs::path dir = prepare_out_dir(out_dir, cfg);
            const auto corpus = load_corpus_checked(corpus_path);
            const CueMask mask = CueMask::parse(cfg.mask);
            TinyLM model = TinyLM::init(cfg.model, cfg.seed);
            Trainer trainer(model, cfg.train);
            const TrainLog log = trainer.train(corpus, mask, dir.string());
            save_checkpoint(model, (dir / "model.bin").string());
            write_text(dir / "trainlog.csv", log.to_csv());
            write_text(dir / "summary.txt", log.summary());
            std::cout << log.summary();
        } else if (eval_cmd->parsed()) {
            const fs::path dir = prepare_out_dir(out_dir, cfg);
            const ModelConfig ckpt_cfg = peek_checkpoint_config(checkpoint_path);
            for (const auto& [flag, mine, theirs] :
                 {std::tuple<const char*, int, int>{"--embed-dim", cfg.model.embed_dim,
                                                    ckpt_cfg.embed_dim},
                  {"--num-layers", cfg.model.num_layers, ckpt_cfg.num_layers},
                  {"--num-heads", cfg.model.num_heads, ckpt_cfg.num_heads},
                  {"--num-experts", cfg.model.num_experts, ckpt_cfg.num_experts},
                  {"--rank", cfg.model.rank, ckpt_cfg.rank}}) {
                const CLI::Option* opt = eval_cmd->get_option_no_throw(flag);
                if (opt != nullptr && opt->count() > 0 && mine != theirs) {
                    throw ConfigMismatchError(std::string(flag) + "=" + std::to_string(mine) +
                                              " disagrees with checkpoint value " +
                                              std::to_string(theirs));
                }
            }
            const TinyLM model = load_checkpoint(checkpoint_path);
            const auto corpus = load_corpus_checked(corpus_path);
            const EvalReport rep =
                evaluate(model, corpus, parse_split(cfg.split), CueMask::parse(cfg.mask));
            write_text(dir / "report.csv", rep.to_csv());
            write_text(dir / "summary.txt", rep.summary());
            std::cout << rep.summary();
        } else if (ablate_cmd->parsed()) {
            const fs::path dir = prepare_out_dir(out_dir, cfg);
            const TinyLM model = load_checkpoint(checkpoint_path);
            const auto corpus = load_corpus_checked(corpus_path);
            const AblationReport rep = ablate(model, corpus, parse_split(cfg.split));
            write_text(dir / "ablation.csv", rep.to_csv());
            write_text(dir / "summary.txt", rep.summary());
            std::cout << rep.summary();
        } else if (route_cmd->parsed()) {
            const fs::path dir = prepare_out_dir(out_dir, cfg);
            const TinyLM model = load_checkpoint(checkpoint_path);
            const auto corpus = load_corpus_checked(corpus_path);
            const RouterReport rep = router_analysis(model, corpus, parse_split(cfg.split));
            write_text(dir / "router.csv", rep.to_csv());
            std::cout << rep.to_csv();
        } else if (latency_cmd->parsed()) {
            const fs::path dir = prepare_out_dir(out_dir, cfg);
            const TinyLM mole_model = load_checkpoint(checkpoint_path);
            ModelConfig single_cfg = mole_model.config();
            single_cfg.num_experts = 1;
            const TinyLM single = TinyLM::init(single_cfg, cfg.seed);
            const auto corpus = load_corpus_checked(corpus_path);
            LatencyOptions opt;
            opt.repetitions = cfg.latency_reps;
            opt.warmup = cfg.latency_warmup;
            opt.token_budget = cfg.latency_budget;
            const auto rows = latency_bench(mole_model, single, corpus, opt);
            const std::string csv = render_latency_csv(rows);
            write_text(dir / "latency.csv", csv);
            std::cout << csv;
        } else if (validate_cmd->parsed()) {
            const auto corpus = load_corpus_checked(corpus_path);
            std::cout << split_stats(corpus).to_text();
            std::cout << "ok: " << corpus.size() << " valid records\n";
        }
    } catch (const ConfigMismatchError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfigMismatch;
    } catch (const DegenerateInputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDegenerate;
    } catch (const TransportError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitTransport;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitShape;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitShape;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitOk;
}
