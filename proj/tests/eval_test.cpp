#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mole/evaluate.hpp"

using namespace mole;

namespace {

ModelConfig tiny_config(int num_experts = 3) {
    ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.max_seq_len = 400;
    cfg.num_experts = num_experts;
    cfg.rank = 2;
    return cfg;
}

} // namespace

TEST_CASE("evaluate on an untrained model scores every task and counts failures") {
    const auto corpus = generate_synthetic_corpus(9, {12, 12, 12, 0.0, 0.5});
    const TinyLM model = TinyLM::init(tiny_config(), 4);
    EvalOptions opt;
    opt.max_new_tokens = 4; // untrained model; keep decoding cheap
    const EvalReport rep = evaluate(model, corpus, Split::test, CueMask::full(), opt);
    CHECK(rep.tasks.size() == 3);
    const TaskEvalResult* det = rep.find(TaskKind::detection);
    REQUIRE(det != nullptr);
    CHECK(det->count == 6);
    REQUIRE(det->scores.has_value());
    CHECK(det->scores->accuracy <= 1.0);
    const TaskEvalResult* rsn = rep.find(TaskKind::reasoning);
    REQUIRE(rsn != nullptr);
    REQUIRE(rsn->bleu4_mean.has_value());
    CHECK(*rsn->bleu4_mean >= 0.0);

    // deterministic with respect to (model, split, mask)
    const EvalReport rep2 = evaluate(model, corpus, Split::test, CueMask::full(), opt);
    CHECK(rep.to_csv() == rep2.to_csv());
}

TEST_CASE("empty split is degenerate") {
    const auto corpus = generate_synthetic_corpus(9, {6, 0, 0, 0.0, 0.0});
    const TinyLM model = TinyLM::init(tiny_config(), 4);
    CHECK_THROWS_AS(evaluate(model, corpus, Split::test, CueMask::full()), DegenerateInputError);
}

TEST_CASE("eval report round-trips through CSV losslessly") {
    EvalReport rep;
    rep.mask_letters = "TAVR";
    rep.split = "test";
    TaskEvalResult det;
    det.task = TaskKind::detection;
    det.count = 101;
    det.failures = 3;
    ClassificationScores s;
    s.precision = 0.912345678901234;
    s.recall = 1.0 / 3.0;
    s.f1 = 0.5;
    s.accuracy = 0.97;
    s.mode = AveragingMode::binary_positive;
    det.scores = s;
    rep.tasks.push_back(det);
    TaskEvalResult rsn;
    rsn.task = TaskKind::reasoning;
    rsn.count = 88;
    rsn.bleu4_mean = 0.123456789;
    rsn.rouge_l_mean = 2.0 / 7.0;
    rsn.exact_match = 0.25;
    rep.tasks.push_back(rsn);

    const std::string csv = rep.to_csv();
    const EvalReport back = EvalReport::from_csv(csv);
    CHECK(back.mask_letters == rep.mask_letters);
    CHECK(back.split == rep.split);
    REQUIRE(back.tasks.size() == 2);
    CHECK(back.tasks[0].count == 101);
    CHECK(back.tasks[0].failures == 3);
    CHECK(back.tasks[0].scores->precision == s.precision);
    CHECK(back.tasks[0].scores->recall == s.recall);
    CHECK(back.tasks[1].bleu4_mean == rsn.bleu4_mean);
    CHECK(back.tasks[1].rouge_l_mean == rsn.rouge_l_mean);
    CHECK(back.tasks[1].exact_match == rsn.exact_match);
    CHECK(!back.tasks[1].scores.has_value());
    // and the re-serialization is byte-identical
    CHECK(back.to_csv() == csv);
}

TEST_CASE("router analysis: untrained model routes uniformly on every task") {
    const auto corpus = generate_synthetic_corpus(10, {9, 9, 9, 0.0, 0.4});
    const TinyLM model = TinyLM::init(tiny_config(), 5);
    const RouterReport rep = router_analysis(model, corpus, Split::test);
    REQUIRE(rep.rows.size() == 3);
    for (const auto& [task, mean] : rep.rows) {
        REQUIRE(mean.len() == 3);
        double sum = 0.0;
        for (int i = 0; i < mean.len(); ++i) {
            CHECK(mean[i] == doctest::Approx(1.0 / 3).epsilon(1e-9));
            sum += mean[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
    const std::string csv = rep.to_csv();
    CHECK(csv.rfind("task,expert_1,expert_2,expert_3\n", 0) == 0);
}

TEST_CASE("router analysis: single-expert model has all-ones rows") {
    const auto corpus = generate_synthetic_corpus(10, {6, 0, 0, 0.0, 0.5});
    const TinyLM model = TinyLM::init(tiny_config(1), 5);
    const RouterReport rep = router_analysis(model, corpus, Split::test);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].second.len() == 1);
    CHECK(rep.rows[0].second[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("latency renderer reproduces the published fixture rows byte-exactly") {
    const std::vector<LatencyRow> rows = {
        {"detection", 981.0, "single_expert"}, {"classification", 790.0, "single_expert"},
        {"reasoning", 2802.0, "single_expert"}, {"all", 1494.0, "single_expert"},
        {"detection", 991.0, "mole"},           {"classification", 796.0, "mole"},
        {"reasoning", 2845.0, "mole"},          {"all", 1513.0, "mole"},
    };
    const std::string csv = render_latency_csv(rows);
    const std::string expected =
        "variant,detection_ms,classification_ms,reasoning_ms,all_ms\n"
        "Single expert,981,790,2802,1494\n"
        "Multi-experts(MoLE),991,796,2845,1513\n"
        "Difference,+10,+6,+43,+19\n";
    CHECK(csv == expected);
}

TEST_CASE("latency renderer keeps fractional values and signs") {
    const std::vector<LatencyRow> rows = {
        {"detection", 10.26, "single_expert"}, {"classification", 8.0, "single_expert"},
        {"reasoning", 9.5, "single_expert"},   {"all", 9.25, "single_expert"},
        {"detection", 12.76, "mole"},          {"classification", 7.5, "mole"},
        {"reasoning", 11.0, "mole"},           {"all", 10.4, "mole"},
    };
    const std::string csv = render_latency_csv(rows);
    CHECK(csv.find("Single expert,10.3,8,9.5,9.3") != std::string::npos);
    CHECK(csv.find("Difference,+2.5,-0.5,+1.5,+1.2") != std::string::npos);
}

TEST_CASE("latency bench: mixture never beats the single expert and schema is stable") {
    const auto corpus = generate_synthetic_corpus(11, {6, 6, 6, 0.0, 0.5});
    const TinyLM mole_model = TinyLM::init(tiny_config(3), 6);
    const TinyLM single = TinyLM::init(tiny_config(1), 6);
    LatencyOptions opt;
    opt.repetitions = 1;
    opt.warmup = 1;
    opt.token_budget = 2;
    opt.samples_per_task = 1;
    const auto rows = latency_bench(mole_model, single, corpus, opt);
    CHECK(rows.size() == 8); // 3 tasks + all, for each variant
    LatencyOptions opt10 = opt;
    opt10.repetitions = 3;
    const auto rows10 = latency_bench(mole_model, single, corpus, opt10);
    CHECK(rows10.size() == rows.size()); // identical table schema
    for (const auto& r : rows) CHECK(r.mean_ms > 0.0);
    CHECK_NOTHROW(render_latency_csv(rows));
}

TEST_CASE("ablation report contains both masks") {
    const auto corpus = generate_synthetic_corpus(12, {8, 8, 8, 0.0, 0.4});
    const TinyLM model = TinyLM::init(tiny_config(), 7);
    EvalOptions opt;
    opt.max_new_tokens = 2;
    const AblationReport rep = ablate(model, corpus, Split::test, opt);
    CHECK(rep.transcript_only.mask_letters == "T");
    CHECK(rep.full.mask_letters == "TAVR");
    const std::string csv = rep.to_csv();
    CHECK(csv.rfind("task,mask,", 0) == 0);
    CHECK(csv.find(",T,") != std::string::npos);
    CHECK(csv.find(",TAVR,") != std::string::npos);
}
