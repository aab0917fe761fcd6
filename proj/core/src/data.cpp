#include "mole/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mole/rng.hpp"

namespace mole {

using nlohmann::json;

// ---- enum conversions -------------------------------------------------------

std::string to_string(SourceDomain v) {
    switch (v) {
        case SourceDomain::ted: return "ted";
        case SourceDomain::sitcom: return "sitcom";
        case SourceDomain::youtube_dyadic: return "youtube_dyadic";
        case SourceDomain::talk_show: return "talk_show";
        case SourceDomain::movie: return "movie";
        case SourceDomain::synthetic: return "synthetic";
    }
    return "synthetic";
}

std::string to_string(TaskKind v) {
    switch (v) {
        case TaskKind::detection: return "detection";
        case TaskKind::classification: return "classification";
        case TaskKind::reasoning: return "reasoning";
        case TaskKind::self_instruct: return "self_instruct";
    }
    return "detection";
}

std::string to_string(LaughterType v) {
    switch (v) {
        case LaughterType::mirthful: return "mirthful";
        case LaughterType::polite: return "polite";
        case LaughterType::satirical: return "satirical";
    }
    return "mirthful";
}

std::string to_string(Split v) {
    switch (v) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

namespace {

[[noreturn]] void bad_enum(const char* field, const std::string& s) {
    throw ValidationError(std::string(field) + ": unknown value '" + s + "'");
}

} // namespace

SourceDomain source_domain_from_string(const std::string& s) {
    if (s == "ted") return SourceDomain::ted;
    if (s == "sitcom") return SourceDomain::sitcom;
    if (s == "youtube_dyadic") return SourceDomain::youtube_dyadic;
    if (s == "talk_show") return SourceDomain::talk_show;
    if (s == "movie") return SourceDomain::movie;
    if (s == "synthetic") return SourceDomain::synthetic;
    bad_enum("source_domain", s);
}

TaskKind task_from_string(const std::string& s) {
    if (s == "detection") return TaskKind::detection;
    if (s == "classification") return TaskKind::classification;
    if (s == "reasoning") return TaskKind::reasoning;
    if (s == "self_instruct") return TaskKind::self_instruct;
    bad_enum("task", s);
}

LaughterType laughter_type_from_string(const std::string& s) {
    if (s == "mirthful") return LaughterType::mirthful;
    if (s == "polite") return LaughterType::polite;
    if (s == "satirical") return LaughterType::satirical;
    bad_enum("laughter_type", s);
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    bad_enum("split", s);
}

std::string laughter_type_display(LaughterType v) {
    switch (v) {
        case LaughterType::mirthful: return "Mirthful";
        case LaughterType::polite: return "Polite";
        case LaughterType::satirical: return "Satirical";
    }
    return "Mirthful";
}

const std::string& task_instruction(TaskKind task) {
    static const std::string detection =
        "Detection task: You are a laugh detector. Find out if there is laugh in this clip.";
    static const std::string classification =
        "Type Classification task: you are to answer the class of laugh type. There are three "
        "types: Polite, Satirical, Mirthful.";
    static const std::string reasoning =
        "Reasoning task: you are to answer why the person laughed at most 30 words, starting "
        "with 'The audience/person laughed because'.";
    static const std::string self_instruct = "Task:";
    switch (task) {
        case TaskKind::detection: return detection;
        case TaskKind::classification: return classification;
        case TaskKind::reasoning: return reasoning;
        case TaskKind::self_instruct: return self_instruct;
    }
    return detection;
}

// ---- validation -------------------------------------------------------------

std::array<double, AcousticFeatures::kCount> AcousticFeatures::as_array() const {
    return {f0_mean, f0_var,          energy_mean, voiced_dur_mean, unvoiced_dur_mean,
            energy_var, f0_d1, f0_d2, jitter,      shimmer};
}

AcousticFeatures AcousticFeatures::from_array(const std::array<double, kCount>& v) {
    AcousticFeatures f;
    f.f0_mean = v[0];
    f.f0_var = v[1];
    f.energy_mean = v[2];
    f.voiced_dur_mean = v[3];
    f.unvoiced_dur_mean = v[4];
    f.energy_var = v[5];
    f.f0_d1 = v[6];
    f.f0_d2 = v[7];
    f.jitter = v[8];
    f.shimmer = v[9];
    return f;
}

void AcousticFeatures::validate() const {
    for (double v : as_array()) {
        if (!std::isfinite(v)) {
            throw ValidationError("AcousticFeatures: all 10 values must be finite");
        }
    }
    if (jitter < 0.0 || shimmer < 0.0) {
        throw ValidationError("AcousticFeatures: jitter and shimmer must be non-negative");
    }
}

void QARecord::validate() const {
    if (id.empty()) throw ValidationError("id: must be nonempty");
    if (question.empty()) throw ValidationError("question: must be nonempty");
    if (cues.utterances.empty()) {
        throw ValidationError("cues.utterances: at least one utterance required");
    }
    for (const UtteranceCue& u : cues.utterances) {
        if (u.transcript.empty()) {
            throw ValidationError("cues.utterances.transcript: must be nonempty");
        }
        u.acoustic.validate();
        for (const PersonActionUnits& pau : u.action_units) {
            if (pau.units.size() > 3) {
                throw ValidationError("cues.utterances.action_units: at most 3 descriptors per "
                                      "person (person '" + pau.person + "')");
            }
        }
    }
    switch (task) {
        case TaskKind::detection:
            if (answer != kDetectionYesAnswer && answer != kDetectionNoAnswer) {
                throw ValidationError("answer: detection answer must be exactly '" +
                                      std::string(kDetectionYesAnswer) + "' or '" +
                                      std::string(kDetectionNoAnswer) + "'");
            }
            break;
        case TaskKind::classification: {
            if (!laughter_type.has_value()) {
                throw ValidationError("laughter_type: required for classification records");
            }
            const std::string expected =
                std::string(kClassificationAnswerPrefix) + laughter_type_display(*laughter_type);
            if (answer != expected) {
                throw ValidationError("answer: classification answer must be '" + expected + "'");
            }
            break;
        }
        case TaskKind::reasoning:
            if (answer.rfind(kReasoningPersonPrefix, 0) != 0 &&
                answer.rfind(kReasoningAudiencePrefix, 0) != 0) {
                throw ValidationError("answer: reasoning answer must start with '" +
                                      std::string(kReasoningPersonPrefix) + "' or '" +
                                      std::string(kReasoningAudiencePrefix) + "'");
            }
            break;
        case TaskKind::self_instruct:
            if (answer.empty()) throw ValidationError("answer: must be nonempty");
            break;
    }
}

// ---- cue mask ---------------------------------------------------------------

CueMask CueMask::parse(const std::string& letters) {
    CueMask m{false, false, false};
    bool saw_t = false;
    for (char c : letters) {
        switch (c) {
            case 'T': case 't': saw_t = true; break;
            case 'A': case 'a': m.include_acoustic = true; break;
            case 'V': case 'v': m.include_visual = true; break;
            case 'R': case 'r': m.include_relation = true; break;
            case '+': break;
            default:
                throw ValidationError("CueMask: unknown cue letter '" + std::string(1, c) + "'");
        }
    }
    if (!saw_t) throw ValidationError("CueMask: transcripts (T) cannot be masked out");
    return m;
}

std::string CueMask::to_letters() const {
    std::string s = "T";
    if (include_acoustic) s += "A";
    if (include_visual) s += "V";
    if (include_relation) s += "R";
    return s;
}

// ---- prompt assembly ---------------------------------------------------------

namespace {

std::string format_sig4(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
}

} // namespace

std::string assemble_prompt(const QARecord& record, const CueMask& mask) {
    record.validate();
    std::string s = record.question;
    int idx = 1;
    for (const UtteranceCue& u : record.cues.utterances) {
        const std::string n = std::to_string(idx);
        s += "\nUtterance " + n + " (" + u.speaker + "): " + u.transcript;
        if (mask.include_acoustic) {
            s += "\nAcoustic " + n + ": ";
            const auto vals = u.acoustic.as_array();
            for (int i = 0; i < AcousticFeatures::kCount; ++i) {
                if (i > 0) s += ", ";
                s += format_sig4(vals[static_cast<std::size_t>(i)]);
            }
        }
        if (mask.include_visual) {
            for (const PersonActionUnits& pau : u.action_units) {
                s += "\nAction units " + n + " (" + pau.person + "): ";
                for (std::size_t i = 0; i < pau.units.size(); ++i) {
                    if (i > 0) s += ", ";
                    s += pau.units[i];
                }
            }
        }
        ++idx;
    }
    if (mask.include_visual) {
        if (!record.cues.video_caption.empty()) s += "\nCaption: " + record.cues.video_caption;
        if (record.cues.clip_description.has_value()) {
            s += "\nClip description: " + *record.cues.clip_description;
        }
    }
    if (mask.include_relation && !record.cues.relation.empty()) {
        s += "\nRelation: " + record.cues.relation;
    }
    return s;
}

// ---- JSON serialization -------------------------------------------------------

std::string record_to_json_line(const QARecord& r) {
    json j;
    j["id"] = r.id;
    j["source_domain"] = to_string(r.source_domain);
    j["task"] = to_string(r.task);
    json cues;
    cues["utterances"] = json::array();
    for (const UtteranceCue& u : r.cues.utterances) {
        json ju;
        ju["speaker"] = u.speaker;
        ju["transcript"] = u.transcript;
        ju["acoustic"] = u.acoustic.as_array();
        ju["action_units"] = json::array();
        for (const PersonActionUnits& pau : u.action_units) {
            ju["action_units"].push_back({{"person", pau.person}, {"units", pau.units}});
        }
        cues["utterances"].push_back(std::move(ju));
    }
    cues["video_caption"] = r.cues.video_caption;
    cues["relation"] = r.cues.relation;
    if (r.cues.clip_description.has_value()) {
        cues["clip_description"] = *r.cues.clip_description;
    }
    j["cues"] = std::move(cues);
    j["question"] = r.question;
    j["answer"] = r.answer;
    if (r.laughter_type.has_value()) j["laughter_type"] = to_string(*r.laughter_type);
    j["split"] = to_string(r.split);
    return j.dump();
}

QARecord record_from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid JSON: ") + e.what());
    }
    try {
        QARecord r;
        r.id = j.at("id").get<std::string>();
        r.source_domain = source_domain_from_string(j.at("source_domain").get<std::string>());
        r.task = task_from_string(j.at("task").get<std::string>());
        const json& cues = j.at("cues");
        for (const json& ju : cues.at("utterances")) {
            UtteranceCue u;
            u.speaker = ju.at("speaker").get<std::string>();
            u.transcript = ju.at("transcript").get<std::string>();
            const json& ac = ju.at("acoustic");
            if (!ac.is_array() || ac.size() != AcousticFeatures::kCount) {
                throw ValidationError("AcousticFeatures: expected exactly 10 values, got " +
                                      std::to_string(ac.size()));
            }
            std::array<double, AcousticFeatures::kCount> vals{};
            for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = ac[i].get<double>();
            u.acoustic = AcousticFeatures::from_array(vals);
            if (ju.contains("action_units")) {
                for (const json& jp : ju.at("action_units")) {
                    PersonActionUnits pau;
                    pau.person = jp.at("person").get<std::string>();
                    pau.units = jp.at("units").get<std::vector<std::string>>();
                    u.action_units.push_back(std::move(pau));
                }
            }
            r.cues.utterances.push_back(std::move(u));
        }
        r.cues.video_caption = cues.value("video_caption", std::string());
        r.cues.relation = cues.value("relation", std::string());
        if (cues.contains("clip_description")) {
            r.cues.clip_description = cues.at("clip_description").get<std::string>();
        }
        r.question = j.at("question").get<std::string>();
        r.answer = j.at("answer").get<std::string>();
        if (j.contains("laughter_type")) {
            r.laughter_type = laughter_type_from_string(j.at("laughter_type").get<std::string>());
        }
        r.split = split_from_string(j.at("split").get<std::string>());
        r.validate();
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("schema violation: ") + e.what());
    }
}

std::vector<QARecord> load_corpus(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("corpus: cannot open '" + path + "'");
    std::vector<QARecord> records;
    std::vector<std::string> errors;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            QARecord r = record_from_json_line(line);
            if (!seen_ids.insert(r.id).second) {
                throw ValidationError("duplicate id '" + r.id + "'");
            }
            records.push_back(std::move(r));
        } catch (const ValidationError& e) {
            errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
            if (errors.size() >= 20) {
                errors.push_back("(stopping after 20 errors)");
                break;
            }
        }
    }
    if (!errors.empty()) {
        std::string msg = "corpus '" + path + "' has invalid records:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw ValidationError(msg);
    }
    return records;
}

void save_corpus(const std::vector<QARecord>& records, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("corpus: cannot open '" + path + "' for writing");
    for (const QARecord& r : records) {
        r.validate();
        os << record_to_json_line(r) << '\n';
    }
    os.flush();
    if (!os) throw IoError("corpus: write to '" + path + "' failed");
}

// ---- split stats ---------------------------------------------------------------

int SplitStats::task_total(TaskKind t) const {
    const auto& row = counts[static_cast<std::size_t>(t)];
    return row[0] + row[1] + row[2];
}

int SplitStats::split_total(Split s) const {
    int n = 0;
    for (const auto& row : counts) n += row[static_cast<std::size_t>(s)];
    return n;
}

int SplitStats::total() const {
    int n = 0;
    for (const auto& row : counts) n += row[0] + row[1] + row[2];
    return n;
}

std::string SplitStats::to_text() const {
    std::ostringstream os;
    auto row = [&os](const std::string& name, int a, int b, int c, int d) {
        os << name;
        for (std::size_t i = name.size(); i < 16; ++i) os << ' ';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%7d%7d%7d%8d\n", a, b, c, d);
        os << buf;
    };
    os << "task              train    val   test   total\n";
    for (int t = 0; t < 4; ++t) {
        const TaskKind task = static_cast<TaskKind>(t);
        row(to_string(task), count(task, Split::train), count(task, Split::val),
            count(task, Split::test), task_total(task));
    }
    row("total", split_total(Split::train), split_total(Split::val), split_total(Split::test),
        total());
    return os.str();
}

std::string SplitStats::to_csv() const {
    std::ostringstream os;
    os << "task,train,val,test,total\n";
    for (int t = 0; t < 4; ++t) {
        const TaskKind task = static_cast<TaskKind>(t);
        os << to_string(task) << ',' << count(task, Split::train) << ',' << count(task, Split::val)
           << ',' << count(task, Split::test) << ',' << task_total(task) << '\n';
    }
    os << "total," << split_total(Split::train) << ',' << split_total(Split::val) << ','
       << split_total(Split::test) << ',' << total() << '\n';
    return os.str();
}

SplitStats split_stats(const std::vector<QARecord>& records) {
    SplitStats st;
    for (const QARecord& r : records) {
        ++st.counts[static_cast<std::size_t>(r.task)][static_cast<std::size_t>(r.split)];
    }
    return st;
}

// ---- synthetic corpus -----------------------------------------------------------

namespace {

const std::vector<std::string>& speaker_pool() {
    static const std::vector<std::string> v = {"alex",  "sam",    "jordan", "taylor",
                                               "casey", "riley",  "morgan", "jamie"};
    return v;
}

const std::vector<std::string>& transcript_pool() {
    static const std::vector<std::string> v = {
        "so that was the whole plan",    "i did not expect that at all",
        "tell me about the trip",        "we missed the last train",
        "that is one way to do it",      "the meeting ran long again",
        "you should have seen his face", "it rained the entire weekend",
        "the soup was cold again",       "she finally sent the report",
        "the parking lot was full",      "he forgot the keys twice",
        "the cake never arrived",        "they repainted the office",
        "my phone died at noon",         "the map was upside down"};
    return v;
}

const std::vector<std::string>& caption_pool() {
    static const std::vector<std::string> v = {
        "two people sitting at a table",    "a group chatting in a living room",
        "a host interviewing a guest",      "two friends walking in a park",
        "an office meeting at a desk",      "a family dinner in a kitchen",
        "two people on a video call",       "a coffee shop conversation"};
    return v;
}

const std::vector<std::string>& relation_pool() {
    static const std::vector<std::string> v = {
        "friends",          "boss and employee", "host and guest", "speaker and audience",
        "colleagues",       "teacher and student", "siblings",     "strangers"};
    return v;
}

const std::vector<std::string>& neutral_action_units() {
    static const std::vector<std::string> v = {"brow raiser", "lid tightener", "jaw drop",
                                               "nose wrinkler", "chin raiser", "lip stretcher"};
    return v;
}

// The cue keyword that fixes the laughter type; placed in the visual channel.
const char* signal_action_unit(LaughterType t) {
    switch (t) {
        case LaughterType::mirthful: return "cheek raiser";
        case LaughterType::polite: return "lip presser";
        case LaughterType::satirical: return "smirk";
    }
    return "cheek raiser";
}

AcousticFeatures sample_acoustic(Rng& rng, const std::optional<LaughterType>& type) {
    AcousticFeatures f;
    f.f0_mean = rng.uniform(120.0, 260.0);
    f.f0_var = rng.uniform(30.0, 120.0);   // neutral band
    f.energy_mean = rng.uniform(40.0, 80.0);
    f.voiced_dur_mean = rng.uniform(0.1, 0.8);
    f.unvoiced_dur_mean = rng.uniform(0.05, 0.5);
    f.energy_var = rng.uniform(10.0, 60.0);
    f.f0_d1 = rng.uniform(-2.0, 2.0);
    f.f0_d2 = rng.uniform(-1.0, 1.0);
    f.jitter = rng.uniform(0.005, 0.03);
    f.shimmer = rng.uniform(0.02, 0.09);
    if (type.has_value()) {
        switch (*type) {
            case LaughterType::mirthful: f.f0_var = rng.uniform(300.0, 500.0); break;
            case LaughterType::polite: f.energy_mean = rng.uniform(5.0, 20.0); break;
            case LaughterType::satirical: f.f0_var = rng.uniform(0.5, 5.0); break; // flat pitch
        }
    }
    return f;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
    return pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
}

UtteranceCue make_utterance(Rng& rng, const std::optional<LaughterType>& type, bool with_laugh,
                            bool carry_signal) {
    UtteranceCue u;
    u.speaker = pick(speaker_pool(), rng);
    u.transcript = pick(transcript_pool(), rng);
    if (with_laugh) u.transcript += " haha";
    u.acoustic = sample_acoustic(rng, carry_signal ? type : std::nullopt);
    PersonActionUnits pau;
    pau.person = u.speaker;
    if (carry_signal && type.has_value()) pau.units.push_back(signal_action_unit(*type));
    pau.units.push_back(pick(neutral_action_units(), rng));
    u.action_units.push_back(std::move(pau));
    return u;
}

// Single utterance per record: prompts must leave decode headroom inside the
// default max_seq_len.
CueBundle make_cues(Rng& rng, const std::optional<LaughterType>& type, bool with_laugh) {
    CueBundle cues;
    cues.utterances.push_back(make_utterance(rng, type, with_laugh, true));
    cues.video_caption = pick(caption_pool(), rng);
    cues.relation = pick(relation_pool(), rng);
    if (rng.uniform() < 0.15) {
        cues.clip_description = "a clip from a longer chat";
    }
    return cues;
}

Split split_for_index(int idx, int n, const SyntheticCounts& c) {
    const int test_n = static_cast<int>(std::lround(n * c.test_fraction));
    const int val_n = static_cast<int>(std::lround(n * c.val_fraction));
    const int train_n = n - val_n - test_n;
    if (idx < train_n) return Split::train;
    if (idx < train_n + val_n) return Split::val;
    return Split::test;
}

std::string reasoning_cause(LaughterType t) {
    switch (t) {
        case LaughterType::mirthful: return " the joke was genuinely funny.";
        case LaughterType::polite: return " politeness called for a response.";
        case LaughterType::satirical: return " the remark was sarcastic.";
    }
    return " the joke was genuinely funny.";
}

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

} // namespace

std::vector<QARecord> generate_synthetic_corpus(std::uint64_t seed,
                                                const SyntheticCounts& counts) {
    if (counts.detection < 0 || counts.classification < 0 || counts.reasoning < 0) {
        throw ValidationError("SyntheticCounts: counts must be non-negative");
    }
    Rng root(seed);
    Rng det_rng = root.fork(1);
    Rng cls_rng = root.fork(2);
    Rng rsn_rng = root.fork(3);

    std::vector<QARecord> out;
    out.reserve(static_cast<std::size_t>(counts.detection + counts.classification +
                                         counts.reasoning));

    for (int i = 0; i < counts.detection; ++i) {
        QARecord r;
        r.id = "syn-det-" + zero_pad(i, 6);
        r.task = TaskKind::detection;
        const bool positive = (i % 2 == 0);
        r.cues = make_cues(det_rng, std::nullopt, positive);
        r.question = task_instruction(TaskKind::detection);
        r.answer = positive ? kDetectionYesAnswer : kDetectionNoAnswer;
        r.split = split_for_index(i, counts.detection, counts);
        out.push_back(std::move(r));
    }

    for (int i = 0; i < counts.classification; ++i) {
        QARecord r;
        r.id = "syn-cls-" + zero_pad(i, 6);
        r.task = TaskKind::classification;
        const LaughterType type = static_cast<LaughterType>(i % 3);
        r.laughter_type = type;
        r.cues = make_cues(cls_rng, type, false);
        r.question = task_instruction(TaskKind::classification);
        r.answer = std::string(kClassificationAnswerPrefix) + laughter_type_display(type);
        r.split = split_for_index(i, counts.classification, counts);
        out.push_back(std::move(r));
    }

    for (int i = 0; i < counts.reasoning; ++i) {
        QARecord r;
        r.id = "syn-rsn-" + zero_pad(i, 6);
        r.task = TaskKind::reasoning;
        const LaughterType cause = static_cast<LaughterType>(i % 3);
        r.cues = make_cues(rsn_rng, cause, false);
        r.question = task_instruction(TaskKind::reasoning);
        const bool audience = (r.cues.relation == "speaker and audience");
        r.answer = (audience ? kReasoningAudiencePrefix : kReasoningPersonPrefix) +
                   reasoning_cause(cause);
        r.split = split_for_index(i, counts.reasoning, counts);
        out.push_back(std::move(r));
    }

    for (const QARecord& r : out) r.validate();
    return out;
}

} // namespace mole
