#include "mole/train.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>

#include "mole/checkpoint.hpp"

namespace mole {

std::string to_string(OptimizerKind v) {
    return v == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam" || s == "adaptive-moment") return OptimizerKind::adam;
    throw ValidationError("optimizer: unknown kind '" + s + "'");
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ValidationError("learning_rate: must be positive");
    if (epochs < 1) throw ValidationError("epochs: must be at least 1");
    if (batch_size < 1) throw ValidationError("batch_size: must be at least 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout: must be in [0,1)");
    if (grad_clip_norm.has_value() && *grad_clip_norm <= 0.0) {
        throw ValidationError("grad_clip_norm: must be positive when set");
    }
}

std::string TrainLog::to_csv() const {
    std::ostringstream os;
    os << "step,loss\n";
    for (std::size_t i = 0; i < step_losses.size(); ++i) {
        os << (i + 1) << ',' << step_losses[i] << '\n';
    }
    return os.str();
}

std::string TrainLog::summary() const {
    std::ostringstream os;
    os << "steps: " << step_losses.size() << '\n';
    os << "skipped_overlong: " << skipped_overlong << '\n';
    for (std::size_t e = 0; e < epoch_mean_losses.size(); ++e) {
        os << "epoch " << (e + 1) << ": mean_loss=" << epoch_mean_losses[e]
           << " seconds=" << epoch_seconds[e] << '\n';
    }
    os << "param_checksum: " << final_param_checksum << '\n';
    return os.str();
}

EncodedRecord encode_for_training(const QARecord& record, const CueMask& mask) {
    const std::string prompt = assemble_prompt(record, mask);
    EncodedRecord enc;
    enc.tokens.push_back(tok::kBos);
    for (int t : tok::tokenize(prompt)) enc.tokens.push_back(t);
    const std::size_t sep_index = enc.tokens.size();
    enc.tokens.push_back(tok::kSep);
    for (int t : tok::tokenize(record.answer)) enc.tokens.push_back(t);
    enc.tokens.push_back(tok::kEos);

    enc.loss_mask.assign(enc.tokens.size(), 0);
    // position i scores the prediction of token i+1; answer starts after SEP
    for (std::size_t i = sep_index; i + 1 < enc.tokens.size(); ++i) enc.loss_mask[i] = 1;
    return enc;
}

std::uint64_t parameter_checksum(TinyLM& model) {
    std::uint64_t h = 1469598103934665603ULL; // FNV offset basis
    auto mix = [&h](const Tensor2D& t) {
        for (double v : t.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 1099511628211ULL;
            }
        }
    };
    for (const TinyLM::ParamSlot& slot : model.trainable_slots()) mix(*slot.value);
    for (const Tensor2D* w0 : model.base_weights()) mix(*w0);
    return h;
}

Trainer::Trainer(TinyLM& model, TrainConfig config)
    : model_(model), cfg_(config), shuffle_rng_(0), dropout_rng_(0) {
    cfg_.validate();
    Rng root(cfg_.seed);
    shuffle_rng_ = root.fork(11);
    dropout_rng_ = root.fork(12);
    check_census();
}

void Trainer::check_census() {
    std::int64_t slot_total = 0;
    for (const TinyLM::ParamSlot& slot : model_.trainable_slots()) {
        slot_total += static_cast<std::int64_t>(slot.value->data.size());
    }
    if (slot_total != model_.trainable_param_count()) {
        throw ContractError("Trainer: trainable slot census (" + std::to_string(slot_total) +
                            ") disagrees with the model's closed-form count (" +
                            std::to_string(model_.trainable_param_count()) + ")");
    }
}

double Trainer::sft_step(const std::vector<QARecord>& batch, const CueMask& mask) {
    if (batch.empty()) throw DegenerateInputError("sft_step: empty batch");
    std::vector<EncodedRecord> encoded;
    encoded.reserve(batch.size());
    for (const QARecord& r : batch) {
        EncodedRecord enc = encode_for_training(r, mask);
        if (static_cast<int>(enc.tokens.size()) > model_.config().max_seq_len) {
            ++skipped_overlong_;
            continue;
        }
        encoded.push_back(std::move(enc));
    }
    if (encoded.empty()) {
        throw DegenerateInputError("sft_step: every record in the batch exceeds max_seq_len");
    }
    return sft_step_encoded(encoded);
}

double Trainer::sft_step_encoded(const std::vector<EncodedRecord>& batch) {
    if (batch.empty()) throw DegenerateInputError("sft_step: empty batch");
    for (const EncodedRecord& enc : batch) {
        bool any = false;
        for (std::uint8_t m : enc.loss_mask) any = any || (m != 0);
        if (!any) {
            throw DegenerateInputError("sft_step: a record has no scored answer positions");
        }
    }
    model_.zero_grads();
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss_sum = 0.0;
    for (const EncodedRecord& enc : batch) {
        loss_sum += model_.loss_and_accumulate(enc.tokens, enc.loss_mask, scale, cfg_.dropout,
                                               &dropout_rng_);
    }
    apply_update();
    return loss_sum * scale;
}

void Trainer::apply_update() {
    std::vector<TinyLM::ParamSlot> slots = model_.trainable_slots();
    if (cfg_.grad_clip_norm.has_value()) {
        double sq = 0.0;
        for (const TinyLM::ParamSlot& slot : slots) {
            for (double g : slot.grad->data) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > *cfg_.grad_clip_norm) {
            const double s = *cfg_.grad_clip_norm / norm;
            for (TinyLM::ParamSlot& slot : slots) {
                for (double& g : slot.grad->data) g *= s;
            }
        }
    }

    ++step_count_;
    if (cfg_.optimizer == OptimizerKind::sgd) {
        for (TinyLM::ParamSlot& slot : slots) {
            for (std::size_t i = 0; i < slot.value->data.size(); ++i) {
                slot.value->data[i] -= cfg_.learning_rate * slot.grad->data[i];
            }
        }
        return;
    }

    // adaptive moments, standard decay constants
    const double beta1 = 0.9;
    const double beta2 = 0.999;
    const double eps = 1e-8;
    if (adam_m_.empty()) {
        for (const TinyLM::ParamSlot& slot : slots) {
            adam_m_.emplace_back(slot.value->rows, slot.value->cols);
            adam_v_.emplace_back(slot.value->rows, slot.value->cols);
        }
    }
    const double bc1 = 1.0 - std::pow(beta1, step_count_);
    const double bc2 = 1.0 - std::pow(beta2, step_count_);
    for (std::size_t s = 0; s < slots.size(); ++s) {
        Tensor2D& value = *slots[s].value;
        const Tensor2D& grad = *slots[s].grad;
        Tensor2D& m = adam_m_[s];
        Tensor2D& v = adam_v_[s];
        for (std::size_t i = 0; i < value.data.size(); ++i) {
            const double g = grad.data[i];
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            value.data[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

TrainLog Trainer::train(const std::vector<QARecord>& corpus, const CueMask& mask,
                        const std::string& checkpoint_dir) {
    std::vector<const QARecord*> train_records;
    for (const QARecord& r : corpus) {
        if (r.split == Split::train) train_records.push_back(&r);
    }
    if (train_records.empty()) {
        throw DegenerateInputError("train: corpus has no train-split records");
    }

    // encode once; prompts are deterministic in (record, mask)
    std::vector<EncodedRecord> encoded;
    encoded.reserve(train_records.size());
    TrainLog log;
    for (const QARecord* r : train_records) {
        EncodedRecord enc = encode_for_training(*r, mask);
        if (static_cast<int>(enc.tokens.size()) > model_.config().max_seq_len) {
            ++log.skipped_overlong;
            ++skipped_overlong_;
            continue;
        }
        encoded.push_back(std::move(enc));
    }
    if (encoded.empty()) {
        throw DegenerateInputError("train: every train record exceeds max_seq_len");
    }

    // frozen-base snapshot, byte-compared after every epoch
    std::vector<Tensor2D> w0_snapshot;
    for (const Tensor2D* w0 : model_.base_weights()) w0_snapshot.push_back(*w0);

    std::vector<std::size_t> order(encoded.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng_.shuffle(order);
        double epoch_loss = 0.0;
        int epoch_steps = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg_.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
            std::vector<EncodedRecord> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(encoded[order[i]]);
            const double loss = sft_step_encoded(batch);
            log.step_losses.push_back(loss);
            epoch_loss += loss;
            ++epoch_steps;
        }
        const auto t1 = std::chrono::steady_clock::now();
        log.epoch_mean_losses.push_back(epoch_loss / epoch_steps);
        log.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

        const std::vector<const Tensor2D*> current = model_.base_weights();
        for (std::size_t i = 0; i < current.size(); ++i) {
            if (!(current[i]->rows == w0_snapshot[i].rows &&
                  current[i]->cols == w0_snapshot[i].cols &&
                  std::memcmp(current[i]->data.data(), w0_snapshot[i].data.data(),
                              w0_snapshot[i].data.size() * sizeof(double)) == 0)) {
                throw ContractError("train: frozen base weight " + std::to_string(i) +
                                    " changed during epoch " + std::to_string(epoch + 1));
            }
        }
        if (!checkpoint_dir.empty()) {
            save_checkpoint(model_, checkpoint_dir + "/checkpoint_epoch_" +
                                        std::to_string(epoch + 1) + ".bin");
        }
    }
    log.final_param_checksum = parameter_checksum(model_);
    return log;
}

} // namespace mole
