#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mole/data.hpp"

namespace mole {

struct GenerationRequest {
    std::string prompt;
    std::uint64_t seed = 0;     // reproducibility hint; the mock is pure in (prompt, seed)
    double temperature = 0.7;   // advisory for remote backends
};

/// Text-in text-out generation service used to synthesize new tasks and
/// instances. Two implementations: a deterministic seeded mock for offline
/// runs and CI, and a thin HTTP JSON client for a real model.
class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual std::string generate(const GenerationRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic template-driven backend. Same (prompt, seed) always yields
/// the same text. Task responses cycle through a fixed table of instructions
/// (with periodic near-duplicates so dedup has something to reject); instance
/// responses cover forced/nervous/sarcastic/joyful/polite/awkward laughter
/// across varied relations and settings.
class MockBackend : public GenerationBackend {
public:
    std::string generate(const GenerationRequest& request) override;
    std::string name() const override { return "mock"; }

    /// The instruction table (exposed so tests can check pairwise dissimilarity).
    static const std::vector<std::pair<std::string, std::string>>& instruction_table();
};

struct HttpBackendConfig {
    std::string url;   // e.g. http://host:port/generate
    std::string token; // sent as a bearer token when nonempty
    int max_retries = 3;
    double backoff_seconds = 0.5;

    /// Reads MOLE_BACKEND_URL and MOLE_BACKEND_TOKEN.
    static HttpBackendConfig from_env();
};

/// POSTs {"prompt": ...} and expects {"text": ...}. Retries with exponential
/// backoff, then raises TransportError.
class HttpBackend : public GenerationBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    std::string generate(const GenerationRequest& request) override;
    std::string name() const override { return "remote"; }

private:
    HttpBackendConfig cfg_;
};

// ---- tasks and instances -----------------------------------------------------

struct InstructTask {
    std::string name;
    std::string instruction;
    enum class Origin { seed, generated } origin = Origin::generated;
};

struct InstructInstance {
    std::string task_name;
    std::string input;
    std::string answer;
};

/// The three bootstrap tasks (detection, classification, reasoning).
std::vector<InstructTask> seed_tasks();

std::string task_generation_prompt(const std::vector<InstructTask>& pool);
std::string instance_generation_prompt(const InstructTask& task);

/// Accept iff the candidate's max ROUGE-L F-score against the pool stays
/// below the threshold.
bool dedup_accept(const std::string& candidate, const std::vector<std::string>& pool,
                  double threshold = 0.7);

struct GenerationCounters {
    int unparseable = 0;
    int dedup_rejected = 0;
};

/// Ask the backend for new tasks; parse, skip unparseable chunks, and dedup
/// instructions against the pool plus earlier acceptances in this call.
/// Returns up to n accepted tasks.
std::vector<InstructTask> generate_tasks(GenerationBackend& backend,
                                         const std::vector<InstructTask>& pool, int n,
                                         std::uint64_t seed, GenerationCounters* counters);

/// Up to n parsed, validated instances for one task.
std::vector<InstructInstance> generate_instances(GenerationBackend& backend,
                                                 const InstructTask& task, int n,
                                                 std::uint64_t seed,
                                                 GenerationCounters* counters);

/// Instances become train-split records with task self_instruct; the instance
/// input is the question and the cues are a minimal placeholder bundle.
std::vector<QARecord> to_qarecords(const std::vector<InstructInstance>& instances);

// ---- reporting -----------------------------------------------------------------

struct TaskReport {
    std::vector<std::pair<std::string, int>> clusters; // normalized name -> count, sorted
    int total_accepted = 0;
    int dedup_rejected = 0;

    std::string to_text(int top_k = 5) const;
    std::string to_csv() const; // header: task,count
};

/// Case-fold, strip trailing "task"/"tasks", singularize the last word.
std::string normalize_task_name(const std::string& name);

TaskReport task_report(const std::vector<std::string>& task_names);
TaskReport task_report(const std::vector<InstructTask>& tasks);

// ---- pipeline -------------------------------------------------------------------

struct SelfInstructConfig {
    int target_count = 1790;
    std::uint64_t seed = 0;
    double dedup_threshold = 0.7;
    int instances_per_task = 40; // density used to size the task pool
    int tasks_per_call = 6;
    int instances_per_call = 4;
};

struct SelfInstructResult {
    std::vector<InstructTask> generated_tasks;
    std::vector<InstructInstance> instances;
    std::vector<QARecord> records;
    TaskReport report;
    GenerationCounters counters;
};

/// Bootstrap from the seeds, grow the task pool, synthesize instances round
/// robin until target_count are accepted, and convert to corpus records.
SelfInstructResult run_self_instruct(GenerationBackend& backend,
                                     const SelfInstructConfig& config);

} // namespace mole
