#include "mole/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace mole {

namespace {

std::vector<int> prompt_tokens(const QARecord& record, const CueMask& mask) {
    std::vector<int> tokens;
    tokens.push_back(tok::kBos);
    for (int t : tok::tokenize(assemble_prompt(record, mask))) tokens.push_back(t);
    tokens.push_back(tok::kSep);
    return tokens;
}

std::string generated_text(const TinyLM& model, const std::vector<int>& prompt,
                           int max_new_tokens) {
    const std::vector<int> full = model.generate(prompt, max_new_tokens);
    const std::vector<int> fresh(full.begin() + static_cast<std::ptrdiff_t>(prompt.size()),
                                 full.end());
    return tok::detokenize(fresh);
}

int decode_budget(TaskKind task, const EvalOptions& options) {
    if (options.max_new_tokens > 0) return options.max_new_tokens;
    switch (task) {
        case TaskKind::detection: return 44;      // longest template is 37 bytes + EOS
        case TaskKind::classification: return 36;
        case TaskKind::reasoning: return 80;
        case TaskKind::self_instruct: return 80;
    }
    return 80;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::string opt_cell(const std::optional<double>& v) {
    return v.has_value() ? fmt_double(*v) : std::string();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::optional<double> parse_opt(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    return std::stod(cell);
}

} // namespace

const TaskEvalResult* EvalReport::find(TaskKind task) const {
    for (const TaskEvalResult& r : tasks) {
        if (r.task == task) return &r;
    }
    return nullptr;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "# mask=" << mask_letters << " split=" << split << '\n';
    os << "task,count,failures,precision,recall,f1,accuracy,bleu4,rouge_l,exact_match\n";
    for (const TaskEvalResult& r : tasks) {
        os << to_string(r.task) << ',' << r.count << ',' << r.failures << ',';
        if (r.scores.has_value()) {
            os << fmt_double(r.scores->precision) << ',' << fmt_double(r.scores->recall) << ','
               << fmt_double(r.scores->f1) << ',' << fmt_double(r.scores->accuracy);
        } else {
            os << ",,,";
        }
        os << ',' << opt_cell(r.bleu4_mean) << ',' << opt_cell(r.rouge_l_mean) << ','
           << opt_cell(r.exact_match) << '\n';
    }
    return os.str();
}

EvalReport EvalReport::from_csv(const std::string& csv) {
    EvalReport rep;
    std::istringstream is(csv);
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::size_t mpos = line.find("mask=");
            const std::size_t spos = line.find("split=");
            if (mpos != std::string::npos) {
                const std::size_t end = line.find(' ', mpos);
                rep.mask_letters = line.substr(mpos + 5, end - (mpos + 5));
            }
            if (spos != std::string::npos) rep.split = line.substr(spos + 6);
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 10) {
            throw ValidationError("EvalReport::from_csv: expected 10 cells, got " +
                                  std::to_string(cells.size()));
        }
        TaskEvalResult r;
        r.task = task_from_string(cells[0]);
        r.count = std::stoi(cells[1]);
        r.failures = std::stoi(cells[2]);
        if (!cells[3].empty()) {
            ClassificationScores s;
            s.precision = std::stod(cells[3]);
            s.recall = std::stod(cells[4]);
            s.f1 = std::stod(cells[5]);
            s.accuracy = std::stod(cells[6]);
            s.mode = (r.task == TaskKind::detection) ? AveragingMode::binary_positive
                                                     : AveragingMode::macro;
            r.scores = s;
        }
        r.bleu4_mean = parse_opt(cells[7]);
        r.rouge_l_mean = parse_opt(cells[8]);
        r.exact_match = parse_opt(cells[9]);
        rep.tasks.push_back(std::move(r));
    }
    return rep;
}

std::string EvalReport::summary() const {
    std::ostringstream os;
    os << "eval split=" << split << " mask=" << mask_letters << '\n';
    for (const TaskEvalResult& r : tasks) {
        os << "  " << to_string(r.task) << " (n=" << r.count << ", failures=" << r.failures
           << ")";
        if (r.scores.has_value()) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), " P=%.4f R=%.4f F1=%.4f Acc=%.4f",
                          r.scores->precision, r.scores->recall, r.scores->f1,
                          r.scores->accuracy);
            os << buf;
        }
        if (r.bleu4_mean.has_value()) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), " BLEU4=%.4f ROUGE-L=%.4f", *r.bleu4_mean,
                          *r.rouge_l_mean);
            os << buf;
            if (r.exact_match.has_value()) {
                std::snprintf(buf, sizeof(buf), " exact=%.4f", *r.exact_match);
                os << buf;
            }
        }
        os << '\n';
    }
    return os.str();
}

EvalReport evaluate(const TinyLM& model, const std::vector<QARecord>& corpus, Split split,
                    const CueMask& mask, const EvalOptions& options) {
    std::vector<const QARecord*> records;
    for (const QARecord& r : corpus) {
        if (r.split == split) records.push_back(&r);
    }
    if (records.empty()) {
        throw DegenerateInputError("evaluate: split '" + to_string(split) + "' is empty");
    }

    struct Bucket {
        std::vector<std::string> preds;
        std::vector<std::string> golds;
        double bleu_sum = 0.0;
        double rouge_sum = 0.0;
        int exact = 0;
        int count = 0;
        int failures = 0;
    };
    std::map<TaskKind, Bucket> buckets;

    for (const QARecord* rec : records) {
        Bucket& b = buckets[rec->task];
        ++b.count;
        std::vector<int> prompt = prompt_tokens(*rec, mask);
        std::string text;
        if (static_cast<int>(prompt.size()) >= model.config().max_seq_len) {
            ++b.failures; // cannot generate; scored as wrong below
        } else {
            text = generated_text(model, prompt, decode_budget(rec->task, options));
        }
        switch (rec->task) {
            case TaskKind::detection: {
                const DetectionLabel pred = parse_detection(text);
                if (pred == DetectionLabel::unparseable && !text.empty()) ++b.failures;
                b.preds.push_back(to_string(pred));
                b.golds.push_back(to_string(parse_detection(rec->answer)));
                break;
            }
            case TaskKind::classification: {
                const ClassificationLabel pred = parse_classification(text);
                if (pred == ClassificationLabel::unparseable && !text.empty()) ++b.failures;
                b.preds.push_back(to_string(pred));
                b.golds.push_back(to_string(parse_classification(rec->answer)));
                break;
            }
            case TaskKind::reasoning:
            case TaskKind::self_instruct: {
                const std::string pred = parse_reasoning(text);
                b.bleu_sum += bleu4(pred, rec->answer);
                b.rouge_sum += rouge_l(pred, rec->answer);
                if (pred == rec->answer) ++b.exact;
                break;
            }
        }
    }

    EvalReport rep;
    rep.mask_letters = mask.to_letters();
    rep.split = to_string(split);
    for (const auto& [task, b] : buckets) {
        TaskEvalResult r;
        r.task = task;
        r.count = b.count;
        r.failures = b.failures;
        if (task == TaskKind::detection) {
            r.scores = classification_metrics(b.preds, b.golds, AveragingMode::binary_positive);
        } else if (task == TaskKind::classification) {
            r.scores = classification_metrics(b.preds, b.golds, AveragingMode::macro);
        } else {
            r.bleu4_mean = b.bleu_sum / b.count;
            r.rouge_l_mean = b.rouge_sum / b.count;
            if (task == TaskKind::reasoning) {
                r.exact_match = static_cast<double>(b.exact) / b.count;
            }
        }
        rep.tasks.push_back(std::move(r));
    }
    return rep;
}

std::string AblationReport::to_csv() const {
    std::ostringstream os;
    os << "task,mask,precision,recall,f1,accuracy,bleu4,rouge_l,exact_match\n";
    auto emit = [&os](const EvalReport& rep) {
        for (const TaskEvalResult& r : rep.tasks) {
            os << to_string(r.task) << ',' << rep.mask_letters << ',';
            if (r.scores.has_value()) {
                os << fmt_double(r.scores->precision) << ',' << fmt_double(r.scores->recall)
                   << ',' << fmt_double(r.scores->f1) << ',' << fmt_double(r.scores->accuracy);
            } else {
                os << ",,,";
            }
            os << ',' << opt_cell(r.bleu4_mean) << ',' << opt_cell(r.rouge_l_mean) << ','
               << opt_cell(r.exact_match) << '\n';
        }
    };
    emit(transcript_only);
    emit(full);
    return os.str();
}

std::string AblationReport::summary() const {
    return "== mask T ==\n" + transcript_only.summary() + "== mask " + full.mask_letters +
           " ==\n" + full.summary();
}

AblationReport ablate(const TinyLM& model, const std::vector<QARecord>& corpus, Split split,
                      const EvalOptions& options) {
    AblationReport rep;
    rep.transcript_only = evaluate(model, corpus, split, CueMask::transcript_only(), options);
    rep.full = evaluate(model, corpus, split, CueMask::full(), options);
    return rep;
}

std::string RouterReport::to_csv() const {
    std::ostringstream os;
    const int width = rows.empty() ? 0 : rows.front().second.len();
    os << "task";
    for (int i = 1; i <= width; ++i) os << ",expert_" << i;
    os << '\n';
    for (const auto& [task, mean] : rows) {
        os << task;
        for (int i = 0; i < mean.len(); ++i) os << ',' << fmt_double(mean[i]);
        os << '\n';
    }
    return os.str();
}

RouterReport router_analysis(const TinyLM& model, const std::vector<QARecord>& corpus,
                             Split split) {
    std::map<std::string, std::vector<Tensor2D>> per_task;
    int used = 0;
    for (const QARecord& rec : corpus) {
        if (rec.split != split) continue;
        const std::vector<int> prompt = prompt_tokens(rec, CueMask::full());
        if (static_cast<int>(prompt.size()) > model.config().max_seq_len) continue;
        std::vector<Tensor2D> routes;
        model.forward_lm(prompt, &routes);
        auto& sink = per_task[to_string(rec.task)];
        for (Tensor2D& r : routes) sink.push_back(std::move(r));
        ++used;
    }
    if (used == 0) {
        throw DegenerateInputError("router_analysis: split '" + to_string(split) +
                                   "' has no usable records");
    }
    RouterReport rep;
    for (auto& [task, mean] : mean_router_weights(per_task)) {
        rep.rows.emplace_back(task, std::move(mean));
    }
    return rep;
}

// ---- latency ---------------------------------------------------------------

namespace {

/// Decode a fixed number of tokens; EOS does not stop the loop, so both
/// variants do identical amounts of work per sample.
void decode_fixed(const TinyLM& model, const std::vector<int>& prompt, int budget) {
    std::vector<int> tokens = prompt;
    for (int i = 0; i < budget; ++i) {
        if (static_cast<int>(tokens.size()) >= model.config().max_seq_len) break;
        const Tensor2D logits = model.forward_lm(tokens);
        const double* last = logits.row_ptr(logits.rows - 1);
        int best = 0;
        for (int t = 1; t < logits.cols; ++t) {
            if (last[t] > last[best]) best = t;
        }
        tokens.push_back(best);
    }
}

std::string fmt_ms(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    std::string s(buf);
    if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.resize(s.size() - 2);
    return s;
}

double find_ms(const std::vector<LatencyRow>& rows, const std::string& variant,
               const std::string& task) {
    for (const LatencyRow& r : rows) {
        if (r.variant == variant && r.task == task) return r.mean_ms;
    }
    throw ValidationError("latency table: missing row variant=" + variant + " task=" + task);
}

} // namespace

std::vector<LatencyRow> latency_bench(const TinyLM& mole_model,
                                      const TinyLM& single_expert_model,
                                      const std::vector<QARecord>& sample,
                                      const LatencyOptions& options) {
    std::map<TaskKind, std::vector<const QARecord*>> by_task;
    for (const QARecord& r : sample) {
        if (r.task == TaskKind::self_instruct) continue;
        auto& v = by_task[r.task];
        if (static_cast<int>(v.size()) < options.samples_per_task) v.push_back(&r);
    }
    if (by_task.empty()) throw DegenerateInputError("latency_bench: no usable sample records");

    std::vector<LatencyRow> rows;
    const std::pair<const TinyLM*, std::string> variants[] = {
        {&single_expert_model, "single_expert"},
        {&mole_model, "mole"},
    };
    for (const auto& [model, name] : variants) {
        const QARecord* first = by_task.begin()->second.front();
        const std::vector<int> warm_prompt = prompt_tokens(*first, CueMask::full());
        for (int w = 0; w < options.warmup; ++w) {
            decode_fixed(*model, warm_prompt, options.token_budget);
        }
        double total_ms = 0.0;
        int total_n = 0;
        for (const auto& [task, records] : by_task) {
            double task_ms = 0.0;
            int task_n = 0;
            for (const QARecord* rec : records) {
                const std::vector<int> prompt = prompt_tokens(*rec, CueMask::full());
                for (int rep = 0; rep < options.repetitions; ++rep) {
                    const auto t0 = std::chrono::steady_clock::now();
                    decode_fixed(*model, prompt, options.token_budget);
                    const auto t1 = std::chrono::steady_clock::now();
                    task_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
                    ++task_n;
                }
            }
            rows.push_back({to_string(task), task_ms / task_n, name});
            total_ms += task_ms;
            total_n += task_n;
        }
        rows.push_back({"all", total_ms / total_n, name});
    }
    return rows;
}

std::string render_latency_csv(const std::vector<LatencyRow>& rows) {
    const char* columns[] = {"detection", "classification", "reasoning", "all"};
    std::ostringstream os;
    os << "variant,detection_ms,classification_ms,reasoning_ms,all_ms\n";
    os << "Single expert";
    for (const char* c : columns) os << ',' << fmt_ms(find_ms(rows, "single_expert", c));
    os << "\nMulti-experts(MoLE)";
    for (const char* c : columns) os << ',' << fmt_ms(find_ms(rows, "mole", c));
    os << "\nDifference";
    for (const char* c : columns) {
        const double d = find_ms(rows, "mole", c) - find_ms(rows, "single_expert", c);
        os << ',' << (d >= 0.0 ? "+" : "") << fmt_ms(d);
    }
    os << '\n';
    return os.str();
}

} // namespace mole
