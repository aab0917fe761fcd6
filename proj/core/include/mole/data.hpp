#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mole/errors.hpp"

namespace mole {

/// The fixed 10-dimension acoustic feature vector, serialized in this order.
struct AcousticFeatures {
    double f0_mean = 0.0;
    double f0_var = 0.0;
    double energy_mean = 0.0;
    double voiced_dur_mean = 0.0;
    double unvoiced_dur_mean = 0.0;
    double energy_var = 0.0;
    double f0_d1 = 0.0;
    double f0_d2 = 0.0;
    double jitter = 0.0;
    double shimmer = 0.0;

    static constexpr int kCount = 10;
    std::array<double, kCount> as_array() const;
    static AcousticFeatures from_array(const std::array<double, kCount>& v);
    void validate() const;
};

/// Up to three action-unit descriptors for one visible person.
struct PersonActionUnits {
    std::string person;
    std::vector<std::string> units;
};

struct UtteranceCue {
    std::string speaker;
    std::string transcript;
    AcousticFeatures acoustic;
    std::vector<PersonActionUnits> action_units;
};

struct CueBundle {
    std::vector<UtteranceCue> utterances; // at least one
    std::string video_caption;
    std::string relation;
    std::optional<std::string> clip_description;
};

enum class SourceDomain { ted, sitcom, youtube_dyadic, talk_show, movie, synthetic };
enum class TaskKind { detection, classification, reasoning, self_instruct };
enum class LaughterType { mirthful, polite, satirical };
enum class Split { train, val, test };

std::string to_string(SourceDomain v);
std::string to_string(TaskKind v);
std::string to_string(LaughterType v);
std::string to_string(Split v);
SourceDomain source_domain_from_string(const std::string& s);
TaskKind task_from_string(const std::string& s);
LaughterType laughter_type_from_string(const std::string& s);
Split split_from_string(const std::string& s);

/// Display name used inside answers ("Mirthful", "Polite", "Satirical").
std::string laughter_type_display(LaughterType v);

// The fixed answer grammar.
inline constexpr const char* kDetectionYesAnswer = "Yes, there is laugh in this video.";
inline constexpr const char* kDetectionNoAnswer = "No, there is no laugh in this video.";
inline constexpr const char* kClassificationAnswerPrefix = "The laugh type is ";
inline constexpr const char* kReasoningPersonPrefix = "The person laughed because";
inline constexpr const char* kReasoningAudiencePrefix = "The audience laughed because";

/// Canonical instruction header for each core task; self_instruct records
/// carry their instruction in the question field instead.
const std::string& task_instruction(TaskKind task);

struct QARecord {
    std::string id;
    SourceDomain source_domain = SourceDomain::synthetic;
    TaskKind task = TaskKind::detection;
    CueBundle cues;
    std::string question;
    std::string answer;
    std::optional<LaughterType> laughter_type;
    Split split = Split::train;

    /// Throws ValidationError naming the offending field.
    void validate() const;
};

/// Which cue families to include in the prompt. Transcripts are the floor and
/// cannot be masked out.
struct CueMask {
    bool include_acoustic = true;
    bool include_visual = true;
    bool include_relation = true;

    static CueMask full() { return CueMask{}; }
    static CueMask transcript_only() { return CueMask{false, false, false}; }

    /// Parse from compact letters, e.g. "T", "TA", "TAVR". Must contain T.
    static CueMask parse(const std::string& letters);
    std::string to_letters() const;
};

/// Deterministic prompt text: task instruction, per-utterance blocks, then
/// caption / clip description / relation as masked in. Byte-identical for
/// identical inputs.
std::string assemble_prompt(const QARecord& record, const CueMask& mask);

/// Line-delimited JSON corpus. Malformed lines are reported with their line
/// numbers; duplicate ids are an error.
std::vector<QARecord> load_corpus(const std::string& path);
void save_corpus(const std::vector<QARecord>& records, const std::string& path);

/// Single-record JSON conversions (used by the corpus IO and by tests).
std::string record_to_json_line(const QARecord& record);
QARecord record_from_json_line(const std::string& line);

struct SplitStats {
    // row per task in enum order, columns train/val/test
    std::array<std::array<int, 3>, 4> counts{};

    int count(TaskKind t, Split s) const {
        return counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
    }
    int task_total(TaskKind t) const;
    int split_total(Split s) const;
    int total() const;

    std::string to_text() const; // aligned table with totals
    std::string to_csv() const;  // header: task,train,val,test,total
};

SplitStats split_stats(const std::vector<QARecord>& records);

struct SyntheticCounts {
    int detection = 800;
    int classification = 800;
    int reasoning = 800;
    double val_fraction = 0.04;
    double test_fraction = 0.12;
};

/// Seeded stand-in corpus whose answers are learnable deterministic functions
/// of the cues: detection is positive iff a laughter token appears in a
/// transcript; the laughter type (and the reasoning template) is fixed by an
/// (acoustic template, action-unit keyword) pair placed in the A/V cues only,
/// so transcript-only prompts cannot predict it.
std::vector<QARecord> generate_synthetic_corpus(std::uint64_t seed, const SyntheticCounts& counts);

} // namespace mole
