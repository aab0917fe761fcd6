#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mole/data.hpp"
#include "mole/model.hpp"

namespace mole {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind v);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs = 3;
    int batch_size = 4;
    double dropout = 0.0;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::optional<double> grad_clip_norm;

    void validate() const;
};

struct TrainLog {
    std::vector<double> step_losses;
    std::vector<double> epoch_mean_losses;
    std::vector<double> epoch_seconds;
    std::uint64_t final_param_checksum = 0;
    int skipped_overlong = 0;

    std::string to_csv() const; // header: step,loss
    std::string summary() const;
};

/// One record encoded for supervised fine-tuning:
/// BOS + prompt bytes + SEP + answer bytes + EOS. The loss mask scores only
/// the predictions of answer tokens and the closing EOS; everything up to the
/// separator is context.
struct EncodedRecord {
    std::vector<int> tokens;
    std::vector<std::uint8_t> loss_mask;
};

EncodedRecord encode_for_training(const QARecord& record, const CueMask& mask);

/// FNV-1a over the raw bytes of every parameter (trainable and frozen), in a
/// fixed order. Used for determinism checks in the train log.
std::uint64_t parameter_checksum(TinyLM& model);

/// Supervised fine-tuning driver. Holds optimizer state across steps; the
/// base weight of every MoleLinear is snapshotted up front and byte-compared
/// after every epoch.
class Trainer {
public:
    Trainer(TinyLM& model, TrainConfig config);

    /// One optimizer update on a batch of records. Overlong records are
    /// skipped and counted; an all-overlong batch raises
    /// DegenerateInputError. Returns the mean loss over the used records.
    double sft_step(const std::vector<QARecord>& batch, const CueMask& mask);

    /// Same, over pre-encoded records (no skipping).
    double sft_step_encoded(const std::vector<EncodedRecord>& batch);

    /// Full run over the corpus's train split: epochs x ceil(n/batch) steps
    /// with seeded per-epoch shuffling. When checkpoint_dir is nonempty a
    /// checkpoint is written at every epoch boundary.
    TrainLog train(const std::vector<QARecord>& corpus, const CueMask& mask,
                   const std::string& checkpoint_dir = "");

    int skipped_overlong() const { return skipped_overlong_; }

private:
    TinyLM& model_;
    TrainConfig cfg_;
    std::vector<Tensor2D> adam_m_;
    std::vector<Tensor2D> adam_v_;
    int step_count_ = 0;
    int skipped_overlong_ = 0;
    Rng shuffle_rng_;
    Rng dropout_rng_;

    void apply_update();
    void check_census();
};

} // namespace mole
