#include "mole/self_instruct.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mole/metrics.hpp"

#ifdef MOLE_WITH_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

namespace mole {

using nlohmann::json;

// ---- seeds and prompts -------------------------------------------------------

std::vector<InstructTask> seed_tasks() {
    return {
        {"detection", task_instruction(TaskKind::detection), InstructTask::Origin::seed},
        {"classification", task_instruction(TaskKind::classification),
         InstructTask::Origin::seed},
        {"reasoning", task_instruction(TaskKind::reasoning), InstructTask::Origin::seed},
    };
}

std::string task_generation_prompt(const std::vector<InstructTask>& pool) {
    std::string p = "Come up with a series of tasks:\n";
    const std::size_t shots = std::min<std::size_t>(pool.size(), 8);
    for (std::size_t i = 0; i < shots; ++i) {
        p += "Task: " + pool[i].name + "\nInstruction: " + pool[i].instruction + "\n###\n";
    }
    p += "Task:";
    return p;
}

std::string instance_generation_prompt(const InstructTask& task) {
    std::string p =
        "Generate new examples that follow the same format as above. Include a variety of "
        "laughter situations, not only humorous or joyful ones, but also socially-driven laughs "
        "such as forced, nervous, or sarcastic laughter. Ensure the context reflects subtle "
        "multimodal cues such as facial expression, tone, or social dynamics.\n";
    p += "Ground the scenarios in relationships such as boss and employee, friends, host and "
         "guest, colleagues, or strangers.\n";
    p += "Task: " + task.name + "\nInstruction: " + task.instruction + "\n";
    return p;
}

// ---- mock backend --------------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

bool is_task_prompt(const std::string& prompt) {
    return prompt.find("Come up with a series of tasks") != std::string::npos;
}

int requested_example_count(const std::string& prompt) {
    const std::size_t pos = prompt.find("Produce exactly ");
    if (pos == std::string::npos) return 4;
    return std::atoi(prompt.c_str() + pos + 16);
}

struct InstancePools {
    std::vector<std::string> names = {"rosa", "ben", "mira", "theo", "anya", "luis", "noor",
                                      "pete"};
    std::vector<std::string> settings = {"office kitchen", "late night studio", "family dinner",
                                         "school hallway",  "crowded bus",      "quiet library"};
    std::vector<std::string> relations = {"boss and employee", "friends",  "host and guest",
                                          "colleagues",        "strangers", "teacher and student",
                                          "siblings"};
    std::vector<std::string> categories = {"forced", "nervous",  "sarcastic", "joyful",
                                           "polite", "awkward", "relieved",  "contagious"};
    std::vector<std::string> topics = {"a misread email", "an old vacation story",
                                       "the broken coffee machine", "a forgotten birthday",
                                       "the wrong meeting room"};
    std::vector<std::string> intensities = {"low", "medium", "high"};

    std::string cue(const std::string& category, std::uint64_t pick) const {
        static const std::vector<std::pair<std::string, std::array<const char*, 2>>> cues = {
            {"forced",
             {"lets out a flat chuckle while checking the clock",
              "laughs a beat too late with a tight smile"}},
            {"nervous",
             {"giggles with a shaky voice and fidgets",
              "laughs quickly while avoiding eye contact"}},
            {"sarcastic",
             {"laughs once with an eye roll", "gives a dry laugh and repeats the last word"}},
            {"joyful",
             {"bursts into open laughter and claps", "laughs loudly with the whole body"}},
            {"polite",
             {"offers a soft courteous laugh and nods",
              "smiles and laughs quietly at the pause"}},
            {"awkward",
             {"laughs into the silence and looks away",
              "chuckles awkwardly and changes the subject"}},
            {"relieved",
             {"exhales into laughter once the news lands",
              "laughs softly after the tension breaks"}},
            {"contagious",
             {"catches the laugh from across the room",
              "starts laughing because everyone else is"}},
        };
        for (const auto& [cat, pair] : cues) {
            if (cat == category) return pair[pick % 2];
        }
        return "laughs briefly";
    }
};

std::string capitalized(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

} // namespace

const std::vector<std::pair<std::string, std::string>>& MockBackend::instruction_table() {
    static const std::vector<std::pair<std::string, std::string>> table = {
        {"Laugh Intensity Rating Task",
         "Rate the strength of each laugh in the scene from one to five."},
        {"Sincerity Judgment Task",
         "Judge whether the laughter is genuine or performed for the audience."},
        {"Trigger Identification Task",
         "Identify which utterance or gesture set off the laughter."},
        {"Reaction Prediction Task",
         "Predict how the listener will respond once the laughing stops."},
        {"Social Function Analysis Task",
         "Analyze what social purpose the laughter serves for the group."},
        {"Tension Estimation Task",
         "Estimate the tension in the room before and after the laugh."},
        {"Relationship Inference Task",
         "Infer how close the speakers are from the way they laugh together."},
        {"Emotion Classification Task",
         "Classify the main emotion carried by the laughter in the clip."},
        {"Contagion Detection Task",
         "Determine whether one person's laugh spread to anyone else."},
        {"Politeness Assessment Task",
         "Assess if the laugh was offered mainly out of courtesy."},
        {"Sarcasm Detection Task",
         "Detect sarcasm in the laugh and quote the cue revealing it."},
        {"Awkwardness Rating Task",
         "Score how uncomfortable the moment feels on a three point scale."},
        {"Intent Explanation Task",
         "Explain what the laughing person most likely wanted to signal."},
        {"Audience Response Prediction Task",
         "Predict the crowd's reaction if the same joke were told again."},
        {"Duration Estimation Task",
         "Guess how long the laughter lasted given the described pacing."},
        {"Mood Shift Analysis Task",
         "Describe how the mood of the conversation changes around the laugh."},
        {"Laugh Type Correlation Task",
         "Relate the acoustic pattern to the most plausible kind of laugh."},
        {"Humor Style Classification Task",
         "Name the style of humor behind the laugh, such as irony or slapstick."},
        {"Embarrassment Detection Task",
         "Decide whether embarrassment rather than amusement drives the laugh."},
        {"Power Dynamic Analysis Task",
         "Examine what the laughter says about who holds power here."},
        {"Conversation Repair Task",
         "Explain how the laugh helps smooth over the preceding misstep."},
        {"Laughter Timing Task",
         "Point out where in the exchange the laugh lands and why there."},
        {"Group Cohesion Rating Task",
         "Rate how strongly the shared laugh binds the group together."},
        {"Nervousness Detection Task",
         "Tell whether a shaky voice or fidgeting marks this laugh as nervous."},
        {"Topic Sensitivity Analysis Task",
         "Consider whether the topic makes laughing here risky or safe."},
        {"Irony Recognition Task",
         "Recognize any gap between the spoken words and the laughing tone."},
        {"Comfort Level Estimation Task",
         "Gauge how at ease each participant is during the laughter."},
        {"Laugh Suppression Detection Task",
         "Spot signs that someone is holding back a laugh and list them."},
        {"Follow-up Question Task",
         "Write one question you would ask to clarify why they laughed."},
        {"Speaker Attribution Task",
         "Attribute the laugh to a speaker using the given voice cues."},
        {"Cultural Context Analysis Task",
         "Discuss how the cultural setting shapes the meaning of this laugh."},
        {"Empathy Response Task",
         "Compose a sympathetic reply to someone laughing off a failure."},
        {"Laugh Frequency Prediction Task",
         "Forecast how often this pair will laugh in the next ten minutes."},
        {"Acoustic Correlation Task",
         "Derive the relationship between the pitch features and the laugh type."},
        {"Sentiment Analysis Task",
         "Report the overall sentiment of the exchange surrounding the laugh."},
        {"Boundary Detection Task",
         "Mark where the laughter begins and ends inside the transcript."},
        {"Role Reversal Task",
         "Imagine the listeners laughing instead and describe what changes."},
        {"Escalation Prediction Task",
         "Predict whether the giggling will grow into full laughter."},
        {"Conflict Defusing Task",
         "Explain whether this laugh cools down the argument or fuels it."},
        {"Memory Recall Task",
         "State which earlier remark the laughers are calling back to."},
        {"Setting Influence Analysis Task",
         "Weigh how the location changes what the laughter means."},
        {"Facial Cue Interpretation Task",
         "Interpret the listed action units and connect them to the laugh."},
        {"Prosody Description Task",
         "Describe the rhythm and pitch movement of the laughing voice."},
        {"Alternative Outcome Task",
         "Suggest what would have happened had nobody laughed."},
        {"Comedic Device Identification Task",
         "Identify the comedic device, like timing or exaggeration, at work."},
        {"Social Distance Estimation Task",
         "Estimate how formal or familiar the laughers are with each other."},
        {"Laugh Authenticity Scoring Task",
         "Give an authenticity score with one sentence of support."},
        {"Turn Taking Analysis Task", "Study how the laughter reorders who speaks next."},
    };
    return table;
}

std::string MockBackend::generate(const GenerationRequest& request) {
    if (is_task_prompt(request.prompt)) {
        const auto& table = instruction_table();
        constexpr int kPerCall = 6;
        std::string out;
        for (int k = 0; k < kPerCall; ++k) {
            const std::uint64_t g = request.seed * kPerCall + static_cast<std::uint64_t>(k);
            if (g % 13 == 12) {
                out += "I cannot think of more tasks right now.\n###\n";
                continue;
            }
            if (g % 8 == 7) {
                // near-duplicate of an earlier instruction; dedup should drop it
                const auto& src = table[(g * 3 + 1) % table.size()];
                std::string dup = src.second;
                const std::size_t pos = dup.find("the ");
                if (pos != std::string::npos) dup.replace(pos, 4, "that ");
                out += "Task: " + src.first + "\nInstruction: " + dup + "\n###\n";
                continue;
            }
            // count fresh slots before g to walk the table in order
            std::uint64_t fresh = 0;
            for (std::uint64_t i = 0; i < g; ++i) {
                if (i % 13 != 12 && i % 8 != 7) ++fresh;
            }
            const auto& entry = table[fresh % table.size()];
            out += "Task: " + entry.first + "\nInstruction: " + entry.second + "\n###\n";
        }
        return out;
    }

    // instance generation
    static const InstancePools pools;
    const int n = requested_example_count(request.prompt);
    std::string out;
    for (int k = 0; k < n; ++k) {
        const std::uint64_t g = splitmix(request.seed) + static_cast<std::uint64_t>(k) * 0x9e37ULL;
        const std::string& category =
            pools.categories[(request.seed + static_cast<std::uint64_t>(k)) %
                             pools.categories.size()];
        const std::string& a = pools.names[g % pools.names.size()];
        const std::string& b = pools.names[(g / 7 + 3) % pools.names.size()];
        const std::string& setting = pools.settings[(g / 11) % pools.settings.size()];
        const std::string& relation = pools.relations[(g / 13) % pools.relations.size()];
        const std::string& topic = pools.topics[(g / 17) % pools.topics.size()];
        const std::string& intensity = pools.intensities[(g / 19) % pools.intensities.size()];
        out += "Input: At the " + setting + ", " + a + " and " + b + " are " + relation + ". " +
               a + " " + pools.cue(category, g / 23) + " after " + topic + ".\n";
        out += "Answer: " + capitalized(category) + ", " + intensity + " intensity.\n###\n";
    }
    return out;
}

// ---- HTTP backend ---------------------------------------------------------------

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig cfg;
    if (const char* url = std::getenv("MOLE_BACKEND_URL")) cfg.url = url;
    if (const char* token = std::getenv("MOLE_BACKEND_TOKEN")) cfg.token = token;
    return cfg;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : cfg_(std::move(config)) {
    if (cfg_.url.empty()) {
        throw ValidationError("HttpBackend: no endpoint URL (set MOLE_BACKEND_URL)");
    }
}

std::string HttpBackend::generate(const GenerationRequest& request) {
    // split scheme://host[:port] and path
    const std::size_t scheme_end = cfg_.url.find("://");
    if (scheme_end == std::string::npos) {
        throw ValidationError("HttpBackend: URL '" + cfg_.url + "' has no scheme");
    }
    const std::size_t path_start = cfg_.url.find('/', scheme_end + 3);
    const std::string origin =
        (path_start == std::string::npos) ? cfg_.url : cfg_.url.substr(0, path_start);
    const std::string path =
        (path_start == std::string::npos) ? "/" : cfg_.url.substr(path_start);

    json body;
    body["prompt"] = request.prompt;
    body["seed"] = request.seed;
    body["temperature"] = request.temperature;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!cfg_.token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.token);

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double delay = cfg_.backoff_seconds * static_cast<double>(1 << (attempt - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        httplib::Client client(origin);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        try {
            json parsed = json::parse(res->body);
            return parsed.at("text").get<std::string>();
        } catch (const json::exception& e) {
            last_error = std::string("bad response body: ") + e.what();
        }
    }
    throw TransportError("HttpBackend: giving up on '" + cfg_.url + "' after " +
                         std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
}

// ---- parsing and dedup -------------------------------------------------------------

namespace {

std::string trim_copy(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_blocks(const std::string& text) {
    std::vector<std::string> blocks;
    std::string cur;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (trim_copy(line) == "###") {
            blocks.push_back(cur);
            cur.clear();
        } else {
            cur += line + "\n";
        }
    }
    if (!trim_copy(cur).empty()) blocks.push_back(cur);
    return blocks;
}

bool field_after(const std::string& block, const char* key, std::string& out) {
    const std::size_t pos = block.find(key);
    if (pos == std::string::npos) return false;
    const std::size_t start = pos + std::strlen(key);
    const std::size_t end = block.find('\n', start);
    out = trim_copy(block.substr(start, end - start));
    return !out.empty();
}

} // namespace

bool dedup_accept(const std::string& candidate, const std::vector<std::string>& pool,
                  double threshold) {
    if (threshold <= 0.0 || threshold > 1.0) {
        throw ValidationError("dedup: threshold must be in (0,1]");
    }
    for (const std::string& existing : pool) {
        if (rouge_l(candidate, existing) >= threshold) return false;
    }
    return true;
}

std::vector<InstructTask> generate_tasks(GenerationBackend& backend,
                                         const std::vector<InstructTask>& pool, int n,
                                         std::uint64_t seed, GenerationCounters* counters) {
    if (static_cast<int>(pool.size()) < 3) {
        throw DegenerateInputError("generate_tasks: pool must contain the three seed tasks");
    }
    GenerationRequest req;
    req.prompt = task_generation_prompt(pool);
    req.seed = seed;
    const std::string text = backend.generate(req);

    std::vector<std::string> instruction_pool;
    instruction_pool.reserve(pool.size());
    for (const InstructTask& t : pool) instruction_pool.push_back(t.instruction);

    std::vector<InstructTask> accepted;
    for (const std::string& block : split_blocks(text)) {
        if (static_cast<int>(accepted.size()) >= n) break;
        if (trim_copy(block).empty()) continue;
        std::string name, instruction;
        if (!field_after(block, "Task:", name) ||
            !field_after(block, "Instruction:", instruction)) {
            if (counters) ++counters->unparseable;
            continue;
        }
        if (!dedup_accept(instruction, instruction_pool)) {
            if (counters) ++counters->dedup_rejected;
            continue;
        }
        instruction_pool.push_back(instruction);
        accepted.push_back({name, instruction, InstructTask::Origin::generated});
    }
    return accepted;
}

std::vector<InstructInstance> generate_instances(GenerationBackend& backend,
                                                 const InstructTask& task, int n,
                                                 std::uint64_t seed,
                                                 GenerationCounters* counters) {
    if (task.name.empty() || task.instruction.empty()) {
        throw ValidationError("generate_instances: task name and instruction must be nonempty");
    }
    if (n <= 0) return {};
    GenerationRequest req;
    req.prompt = instance_generation_prompt(task) + "Produce exactly " + std::to_string(n) +
                 " examples.\n";
    req.seed = seed;
    const std::string text = backend.generate(req);

    std::vector<InstructInstance> out;
    for (const std::string& block : split_blocks(text)) {
        if (static_cast<int>(out.size()) >= n) break;
        if (trim_copy(block).empty()) continue;
        std::string input, answer;
        if (!field_after(block, "Input:", input) || !field_after(block, "Answer:", answer)) {
            if (counters) ++counters->unparseable;
            continue;
        }
        out.push_back({task.name, input, answer});
    }
    return out;
}

std::vector<QARecord> to_qarecords(const std::vector<InstructInstance>& instances) {
    std::vector<QARecord> records;
    records.reserve(instances.size());
    std::vector<std::string> errors;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const InstructInstance& inst = instances[i];
        QARecord r;
        std::string idx = std::to_string(i + 1);
        while (idx.size() < 6) idx.insert(idx.begin(), '0');
        r.id = "si-" + idx;
        r.source_domain = SourceDomain::synthetic;
        r.task = TaskKind::self_instruct;
        r.question = inst.input;
        r.answer = inst.answer;
        r.split = Split::train;
        UtteranceCue u;
        u.speaker = "narrator";
        u.transcript = "(scene described in the question)";
        r.cues.utterances.push_back(std::move(u));
        try {
            r.validate();
        } catch (const ValidationError& e) {
            errors.push_back("instance " + std::to_string(i + 1) + " ('" + inst.task_name +
                             "'): " + e.what());
            continue;
        }
        records.push_back(std::move(r));
    }
    if (!errors.empty()) {
        std::string msg = "to_qarecords: invalid instances:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw ValidationError(msg);
    }
    return records;
}

// ---- reporting ----------------------------------------------------------------------

std::string normalize_task_name(const std::string& name) {
    std::string s;
    s.reserve(name.size());
    for (char raw : name) {
        const unsigned char c = static_cast<unsigned char>(raw);
        s.push_back(static_cast<char>(std::tolower(c)));
    }
    s = trim_copy(s);
    // strip trailing "task"/"tasks" words
    auto strip_suffix = [&s](const char* suffix) {
        const std::size_t len = std::strlen(suffix);
        if (s.size() >= len && s.compare(s.size() - len, len, suffix) == 0) {
            s.resize(s.size() - len);
            s = trim_copy(s);
            return true;
        }
        return false;
    };
    while (strip_suffix("tasks") || strip_suffix("task")) {
    }
    // singularize the final word; keep -ss/-sis/-us endings intact
    const std::size_t sp = s.find_last_of(' ');
    std::string last = (sp == std::string::npos) ? s : s.substr(sp + 1);
    auto ends = [&last](const char* suf) {
        const std::size_t len = std::strlen(suf);
        return last.size() >= len && last.compare(last.size() - len, len, suf) == 0;
    };
    if (last.size() > 3 && ends("ies")) {
        last.resize(last.size() - 3);
        last += "y";
    } else if (last.size() > 1 && ends("s") && !ends("ss") && !ends("sis") && !ends("us")) {
        last.resize(last.size() - 1);
    }
    if (sp == std::string::npos) return last;
    return s.substr(0, sp + 1) + last;
}

TaskReport task_report(const std::vector<std::string>& task_names) {
    std::map<std::string, int> counts;
    for (const std::string& name : task_names) ++counts[normalize_task_name(name)];
    TaskReport rep;
    rep.total_accepted = static_cast<int>(task_names.size());
    rep.clusters.assign(counts.begin(), counts.end());
    std::sort(rep.clusters.begin(), rep.clusters.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return rep;
}

TaskReport task_report(const std::vector<InstructTask>& tasks) {
    std::vector<std::string> names;
    names.reserve(tasks.size());
    for (const InstructTask& t : tasks) names.push_back(t.name);
    return task_report(names);
}

std::string TaskReport::to_text(int top_k) const {
    std::ostringstream os;
    os << "top-k  task                                count\n";
    int k = 0;
    for (const auto& [name, count] : clusters) {
        if (k >= top_k) break;
        ++k;
        os << k;
        for (std::size_t i = std::to_string(k).size(); i < 7; ++i) os << ' ';
        os << name;
        for (std::size_t i = name.size(); i < 36; ++i) os << ' ';
        os << count << '\n';
    }
    os << "total accepted: " << total_accepted << ", dedup rejected: " << dedup_rejected << '\n';
    return os.str();
}

std::string TaskReport::to_csv() const {
    std::ostringstream os;
    os << "task,count\n";
    for (const auto& [name, count] : clusters) os << name << ',' << count << '\n';
    return os.str();
}

// ---- pipeline ---------------------------------------------------------------------

SelfInstructResult run_self_instruct(GenerationBackend& backend,
                                     const SelfInstructConfig& config) {
    if (config.target_count < 0) {
        throw ValidationError("self-instruct: target_count must be non-negative");
    }
    SelfInstructResult result;
    std::vector<InstructTask> pool = seed_tasks();
    const int needed_tasks = std::max(
        1, (config.target_count + config.instances_per_task - 1) / config.instances_per_task);

    std::uint64_t call_seed = config.seed * 1000003ULL;
    int stalled_rounds = 0;
    while (static_cast<int>(result.generated_tasks.size()) < needed_tasks) {
        const std::vector<InstructTask> fresh = generate_tasks(
            backend, pool, config.tasks_per_call, call_seed++, &result.counters);
        if (fresh.empty()) {
            if (++stalled_rounds > 64) {
                throw TransportError("self-instruct: backend produced no acceptable tasks in 64 "
                                     "consecutive rounds");
            }
            continue;
        }
        stalled_rounds = 0;
        for (const InstructTask& t : fresh) {
            pool.push_back(t);
            result.generated_tasks.push_back(t);
            if (static_cast<int>(result.generated_tasks.size()) >= needed_tasks) break;
        }
    }

    std::size_t task_cursor = 0;
    while (static_cast<int>(result.instances.size()) < config.target_count) {
        const InstructTask& task = result.generated_tasks[task_cursor];
        task_cursor = (task_cursor + 1) % result.generated_tasks.size();
        const int want = std::min(config.instances_per_call,
                                  config.target_count -
                                      static_cast<int>(result.instances.size()));
        std::vector<InstructInstance> batch =
            generate_instances(backend, task, want, call_seed++, &result.counters);
        for (InstructInstance& inst : batch) {
            if (static_cast<int>(result.instances.size()) >= config.target_count) break;
            if (inst.input.empty() || inst.answer.empty()) continue;
            result.instances.push_back(std::move(inst));
        }
    }

    result.records = to_qarecords(result.instances);
    result.report = task_report(result.generated_tasks);
    result.report.dedup_rejected = result.counters.dedup_rejected;
    return result;
}

} // namespace mole
