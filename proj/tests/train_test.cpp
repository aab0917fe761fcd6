#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "mole/train.hpp"

using namespace mole;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.max_seq_len = 128;
    cfg.num_experts = 2;
    cfg.rank = 2;
    return cfg;
}

QARecord tiny_record(const std::string& id, bool positive) {
    QARecord r;
    r.id = id;
    r.task = TaskKind::detection;
    UtteranceCue u;
    u.speaker = "sam";
    u.transcript = positive ? "short haha" : "short";
    u.acoustic = AcousticFeatures::from_array({1, 2, 3, 4, 5, 6, 7, 8, 0.1, 0.2});
    r.cues.utterances.push_back(u);
    r.question = "Detect the laugh.";
    r.answer = positive ? kDetectionYesAnswer : kDetectionNoAnswer;
    r.split = Split::train;
    return r;
}

std::vector<Tensor2D> snapshot_bases(const TinyLM& model) {
    std::vector<Tensor2D> out;
    for (const Tensor2D* w : model.base_weights()) out.push_back(*w);
    return out;
}

bool bases_equal(const TinyLM& model, const std::vector<Tensor2D>& snap) {
    const auto current = model.base_weights();
    for (std::size_t i = 0; i < current.size(); ++i) {
        if (!(*current[i] == snap[i])) return false;
    }
    return true;
}

} // namespace

TEST_CASE("encode_for_training masks exactly the answer plus EOS") {
    const QARecord r = tiny_record("a", true);
    const EncodedRecord enc = encode_for_training(r, CueMask::transcript_only());
    REQUIRE(enc.tokens.front() == tok::kBos);
    REQUIRE(enc.tokens.back() == tok::kEos);
    const auto sep_it = std::find(enc.tokens.begin(), enc.tokens.end(), tok::kSep);
    REQUIRE(sep_it != enc.tokens.end());
    const std::size_t sep = static_cast<std::size_t>(sep_it - enc.tokens.begin());
    for (std::size_t i = 0; i < enc.tokens.size(); ++i) {
        const bool scored = (i >= sep) && (i + 1 < enc.tokens.size());
        CHECK(static_cast<bool>(enc.loss_mask[i]) == scored);
    }
    // decoded answer segment equals the record answer
    std::vector<int> answer_tokens(enc.tokens.begin() + static_cast<std::ptrdiff_t>(sep) + 1,
                                   enc.tokens.end() - 1);
    CHECK(tok::detokenize(answer_tokens) == r.answer);
}

TEST_CASE("loss masking: answer content changes the loss, question phrasing does not change "
          "which rows are scored") {
    TinyLM model = TinyLM::init(tiny_config(), 5);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.seed = 1;
    QARecord yes = tiny_record("a", true);
    QARecord no = tiny_record("a", true);
    no.answer = kDetectionNoAnswer;

    const EncodedRecord e1 = encode_for_training(yes, CueMask::transcript_only());
    const EncodedRecord e2 = encode_for_training(no, CueMask::transcript_only());
    model.zero_grads();
    const double l1 = model.loss_and_accumulate(e1.tokens, e1.loss_mask, 0.0);
    model.zero_grads();
    const double l2 = model.loss_and_accumulate(e2.tokens, e2.loss_mask, 0.0);
    CHECK(l1 != l2); // shifting answer content changes the loss

    // number of scored rows is independent of the question text
    QARecord other_q = yes;
    other_q.question = "A different question wording.";
    const EncodedRecord e3 = encode_for_training(other_q, CueMask::transcript_only());
    int scored1 = 0, scored3 = 0;
    for (auto m : e1.loss_mask) scored1 += m;
    for (auto m : e3.loss_mask) scored3 += m;
    CHECK(scored1 == scored3);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
    TinyLM model = TinyLM::init(tiny_config(), 7);
    TrainConfig cfg;
    cfg.learning_rate = 1e-30; // effectively zero but passes validation
    cfg.optimizer = OptimizerKind::sgd;
    cfg.seed = 2;
    const std::uint64_t before = parameter_checksum(model);
    // sgd with lr so small update is exactly representable? use true zero via direct check:
    // instead use lr = 0 rejected by validation, so assert sgd with zero grads is identity
    Trainer trainer(model, cfg);
    QARecord r = tiny_record("a", true);
    trainer.sft_step({r}, CueMask::transcript_only());
    // the parameters moved by at most lr * g; with lr = 1e-30 the FP64 add is a no-op
    CHECK(parameter_checksum(model) == before);
}

TEST_CASE("repeated identical single record overfits: loss decreases over 50 steps") {
    TinyLM model = TinyLM::init(tiny_config(), 11);
    TrainConfig cfg;
    cfg.learning_rate = 3e-3;
    cfg.seed = 3;
    Trainer trainer(model, cfg);
    const QARecord r = tiny_record("a", true);
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step) {
        losses.push_back(trainer.sft_step({r}, CueMask::transcript_only()));
    }
    CHECK(losses.back() < losses.front() * 0.5);
    int violations = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) {
        if (losses[i] > losses[i - 1] + 1e-6) ++violations;
    }
    CHECK(violations <= 5);
}

TEST_CASE("all-overlong batch raises a degenerate-batch error") {
    ModelConfig cfg = tiny_config();
    cfg.max_seq_len = 8; // nothing fits
    TinyLM model = TinyLM::init(cfg, 1);
    TrainConfig tc;
    tc.seed = 4;
    Trainer trainer(model, tc);
    const QARecord r = tiny_record("a", true);
    CHECK_THROWS_AS(trainer.sft_step({r}, CueMask::transcript_only()), DegenerateInputError);
    CHECK(trainer.skipped_overlong() == 1);
}

TEST_CASE("a batch whose every position is masked out is degenerate") {
    TinyLM model = TinyLM::init(tiny_config(), 1);
    TrainConfig tc;
    tc.seed = 5;
    Trainer trainer(model, tc);
    EncodedRecord enc;
    enc.tokens = {tok::kBos, 104, 97, tok::kEos};
    enc.loss_mask.assign(4, 0); // question-only: nothing scored
    CHECK_THROWS_AS(trainer.sft_step_encoded({enc}), DegenerateInputError);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.grad_clip_norm = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("full train run: loss improves, base frozen, checksums reproducible") {
    const SyntheticCounts counts{24, 24, 24, 0.0, 0.2};
    const auto corpus = generate_synthetic_corpus(21, counts);

    auto run = [&](std::uint64_t model_seed) {
        TinyLM model = TinyLM::init(tiny_config(), model_seed);
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 2;
        cfg.batch_size = 4;
        cfg.seed = 9;
        const auto snap = snapshot_bases(model);
        Trainer trainer(model, cfg);
        TrainLog log = trainer.train(corpus, CueMask::full());
        CHECK(bases_equal(model, snap)); // frozen-base theorem, byte compare
        return log;
    };
    const TrainLog a = run(100);
    const TrainLog b = run(100);
    CHECK(a.final_param_checksum == b.final_param_checksum); // same-seed determinism
    CHECK(a.step_losses == b.step_losses);
    CHECK(a.epoch_mean_losses.back() < a.epoch_mean_losses.front());
    CHECK(a.step_losses.size() ==
          static_cast<std::size_t>(a.epoch_mean_losses.size()) *
              ((counts.detection + counts.classification + counts.reasoning -
                static_cast<int>(0.2 * 24) * 3 + 3) /
               4));

    const std::string csv = a.to_csv();
    CHECK(csv.rfind("step,loss\n", 0) == 0);
}

TEST_CASE("training with self_instruct records mixed in completes") {
    std::vector<QARecord> corpus = generate_synthetic_corpus(22, {12, 12, 12, 0.0, 0.25});
    QARecord si;
    si.id = "si-1";
    si.task = TaskKind::self_instruct;
    si.source_domain = SourceDomain::synthetic;
    si.question = "Rate the laugh intensity in the scene.";
    si.answer = "Forced, low intensity.";
    si.split = Split::train;
    UtteranceCue u;
    u.speaker = "narrator";
    u.transcript = "(scene described in the question)";
    si.cues.utterances.push_back(u);
    corpus.push_back(si);

    TinyLM model = TinyLM::init(tiny_config(), 2);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 1;
    cfg.seed = 10;
    Trainer trainer(model, cfg);
    const TrainLog log = trainer.train(corpus, CueMask::full());
    CHECK(!log.step_losses.empty());
}

TEST_CASE("corpus without train records is degenerate") {
    auto corpus = generate_synthetic_corpus(23, {8, 0, 0, 0.5, 0.5});
    for (auto& r : corpus) {
        if (r.split == Split::train) r.split = Split::val;
    }
    TinyLM model = TinyLM::init(tiny_config(), 2);
    TrainConfig cfg;
    cfg.seed = 11;
    Trainer trainer(model, cfg);
    CHECK_THROWS_AS(trainer.train(corpus, CueMask::full()), DegenerateInputError);
}

TEST_CASE("sgd and adam both step; gradient clipping bounds the update") {
    TinyLM model = TinyLM::init(tiny_config(), 31);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.optimizer = OptimizerKind::sgd;
    cfg.grad_clip_norm = 1e-9; // clamp hard: updates become ~1e-11
    cfg.seed = 12;
    const std::uint64_t before = parameter_checksum(model);
    Trainer trainer(model, cfg);
    const QARecord r = tiny_record("a", true);
    trainer.sft_step({r}, CueMask::transcript_only());
    // parameters moved, but by a bounded (tiny) amount
    TinyLM ref = TinyLM::init(tiny_config(), 31);
    double max_delta = 0.0;
    auto slots_new = model.trainable_slots();
    auto slots_ref = ref.trainable_slots();
    for (std::size_t s = 0; s < slots_new.size(); ++s) {
        for (std::size_t i = 0; i < slots_new[s].value->data.size(); ++i) {
            max_delta = std::max(max_delta, std::fabs(slots_new[s].value->data[i] -
                                                      slots_ref[s].value->data[i]));
        }
    }
    CHECK(max_delta < 1e-10);
    (void)before;
}
