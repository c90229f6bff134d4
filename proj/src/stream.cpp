#include "hpqa/stream.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "hpqa/error.hpp"
#include "hpqa/kv.hpp"
#include "hpqa/rng.hpp"

namespace hpqa {

using nlohmann::json;

const char* format_name(Format f) {
    switch (f) {
        case Format::Extractive: return "extractive";
        case Format::Abstractive: return "abstractive";
        case Format::MultiChoice: return "multichoice";
    }
    return "?";
}

Format format_from_name(const std::string& name) {
    if (name == "extractive") return Format::Extractive;
    if (name == "abstractive") return Format::Abstractive;
    if (name == "multichoice") return Format::MultiChoice;
    throw ValidationError("unknown format name: '" + name + "'");
}

const TaskDef& TaskStream::task_by_id(int id) const {
    for (const auto& t : seen)
        if (t.id == id) return t;
    for (const auto& t : unseen)
        if (t.id == id) return t;
    throw RuntimeFault("no task with id " + std::to_string(id));
}

std::string normalize_ws(const std::string& s) {
    auto toks = Vocab::split_ws(s);
    std::string out;
    for (const auto& t : toks) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

StreamSpec parse_stream_spec(const std::string& text) {
    StreamSpec spec;
    for (const auto& [key, value] : parse_kv_text(text)) {
        if (key == "n_seen") spec.n_seen = static_cast<int>(parse_int(key, value));
        else if (key == "n_unseen") spec.n_unseen = static_cast<int>(parse_int(key, value));
        else if (key == "samples_per_split")
            spec.samples_per_split = static_cast<int>(parse_int(key, value));
        else if (key == "vocab_size") spec.vocab_size = static_cast<int>(parse_int(key, value));
        else if (key == "seed") spec.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else throw ValidationError("unknown stream spec field: " + key);
    }
    return spec;
}

StreamSpec load_stream_spec(const std::string& path) {
    return parse_stream_spec(read_text_file(path));
}

Format infer_format(const std::string& context, const std::string& question) {
    (void)context;
    auto toks = Vocab::split_ws(question);
    for (const auto& t : toks)
        if (t == "(A)") return Format::MultiChoice;
    for (const auto& t : toks)
        if (t == "find") return Format::Extractive;
    return Format::Abstractive;
}

void validate_sample(const Sample& s, const std::string& where) {
    if (normalize_ws(s.answer).empty())
        throw ValidationError(where + ": answer is empty");
    if (s.format == Format::MultiChoice) {
        if (s.options.size() < 2)
            throw ValidationError(where + ": multichoice sample needs >= 2 options");
        int hits = 0;
        for (const auto& o : s.options)
            if (normalize_ws(o) == normalize_ws(s.answer)) ++hits;
        if (hits != 1)
            throw ValidationError(where + ": answer must equal exactly one option, matches " +
                                  std::to_string(hits));
    } else if (!s.options.empty()) {
        throw ValidationError(where + ": options only allowed on multichoice samples");
    }
    if (infer_format(s.context, s.question) != s.format)
        throw ValidationError(where + ": format not inferable from (context, question)");
}

static std::string sample_key(const Sample& s) {
    return normalize_ws(s.context) + "\x1f" + normalize_ws(s.question);
}

void validate_stream(const TaskStream& stream) {
    if (stream.seen.empty()) throw ValidationError("stream has no tasks");
    for (int i = 0; i < stream.n_seen(); ++i)
        if (stream.seen[static_cast<std::size_t>(i)].id != i + 1)
            throw ValidationError("seen task ids must be contiguous 1..N");
    for (int i = 0; i < stream.n_unseen(); ++i)
        if (stream.unseen[static_cast<std::size_t>(i)].id != stream.n_seen() + i + 1)
            throw ValidationError("unseen task ids must be contiguous N+1..N+N'");

    std::set<Format> seen_formats;
    for (const auto& t : stream.seen) seen_formats.insert(t.format);
    if (stream.n_seen() >= 3 && seen_formats.size() != 3)
        throw ValidationError("all three formats must appear among seen tasks");
    for (const auto& t : stream.unseen)
        if (!seen_formats.count(t.format))
            throw ValidationError("unseen task " + std::to_string(t.id) +
                                  " uses a format absent from seen tasks");

    std::unordered_set<std::string> keys;
    auto check_task = [&](const TaskDef& t, bool is_seen) {
        if (is_seen && t.train.empty())
            throw ValidationError("task " + std::to_string(t.id) + " has no train samples");
        if (t.test.empty())
            throw ValidationError("task " + std::to_string(t.id) + " has no test samples");
        auto check_split = [&](const std::vector<Sample>& split, const char* name) {
            for (std::size_t i = 0; i < split.size(); ++i) {
                const Sample& s = split[i];
                std::string where = "task " + std::to_string(t.id) + " " + name + "[" +
                                    std::to_string(i) + "]";
                if (s.format != t.format)
                    throw ValidationError(where + ": sample format differs from task format");
                if (s.task_id && *s.task_id != t.id)
                    throw ValidationError(where + ": task_id mismatch");
                validate_sample(s, where);
                if (!keys.insert(sample_key(s)).second)
                    throw ValidationError(where + ": duplicate sample across tasks");
            }
        };
        check_split(t.train, "train");
        check_split(t.val, "val");
        check_split(t.test, "test");
    };
    for (const auto& t : stream.seen) check_task(t, true);
    for (const auto& t : stream.unseen) check_task(t, false);
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace {

constexpr int kSliceSize = 8;
// marker tail: 4 distractor-only markers, then 2 subsequence slot tags
constexpr int kReserveMarkers = 6;
constexpr int kDistractorReserve = 4;

struct TaskRule {
    Format format = Format::Extractive;
    int marker = 0;                    // marker index owned by this task
    std::vector<int> slice;            // word indices this task draws from
    std::vector<int> distractor_pool;  // other markers usable in contexts
    int transform_id = 0;              // abstractive: 0 reverse, 1 rotate, 2 sort
};

Format format_of_task(int t) { return static_cast<Format>((t - 1) % 3); }

std::vector<TaskRule> build_rules(const StreamSpec& spec, int marker_count) {
    int total = spec.n_seen + spec.n_unseen;
    std::vector<TaskRule> rules(static_cast<std::size_t>(total + 1));  // 1-based
    int abstr_ordinal = 0;
    for (int t = 1; t <= total; ++t) {
        TaskRule& r = rules[static_cast<std::size_t>(t)];
        r.format = format_of_task(t);
        r.marker = t - 1;
        if (r.format == Format::Abstractive) r.transform_id = abstr_ordinal++ % 3;

        if (spec.vocab_size >= kSliceSize * total) {
            for (int i = 0; i < kSliceSize; ++i) r.slice.push_back((t - 1) * kSliceSize + i);
        } else {
            // Vocab too small for disjoint slices; draw a per-task subset.
            Rng srng(hash_combine(spec.seed, hash_combine(0x51CEu, static_cast<std::uint64_t>(t))));
            std::unordered_set<int> used;
            while (static_cast<int>(r.slice.size()) < kSliceSize) {
                int w = static_cast<int>(srng.uniform_int(static_cast<std::uint64_t>(spec.vocab_size)));
                if (used.insert(w).second) r.slice.push_back(w);
            }
        }

        for (int o = 1; o <= spec.n_seen; ++o)
            if (o != t && format_of_task(o) == r.format) r.distractor_pool.push_back(o - 1);
        for (int i = marker_count - kReserveMarkers;
             i < marker_count - kReserveMarkers + kDistractorReserve; ++i)
            r.distractor_pool.push_back(i);
    }
    return rules;
}

std::vector<int> pick_distinct(Rng& rng, const std::vector<int>& pool, int k) {
    std::vector<int> idx(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    std::vector<int> out;
    for (int i = 0; i < k; ++i) out.push_back(pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    return out;
}

std::string join(const std::vector<std::string>& toks) {
    std::string out;
    for (const auto& t : toks) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

Sample gen_one(const TaskRule& rule, const Vocab& vocab, int task_id, Rng& rng) {
    auto word = [&](int slice_pos) { return vocab.token(vocab.word_id(rule.slice[static_cast<std::size_t>(slice_pos)])); };
    auto rand_word = [&]() { return word(static_cast<int>(rng.uniform_int(kSliceSize))); };
    auto marker_tok = [&](int m) { return vocab.token(vocab.marker_id(m)); };

    Sample s;
    s.format = rule.format;
    s.task_id = task_id;

    if (rule.format == Format::Extractive) {
        auto distract = pick_distinct(rng, rule.distractor_pool, 2);
        auto words = pick_distinct(rng, rule.slice, 3);
        int gold_slot = static_cast<int>(rng.uniform_int(3));
        std::string answer = vocab.token(vocab.word_id(words[0]));
        std::vector<std::string> ctx;
        int spare = 1;
        for (int slot = 0; slot < 3; ++slot) {
            if (slot == gold_slot) {
                ctx.push_back(marker_tok(rule.marker));
                ctx.push_back(answer);
            } else {
                ctx.push_back(marker_tok(distract[static_cast<std::size_t>(slot > gold_slot ? slot - 1 : slot)]));
                ctx.push_back(vocab.token(vocab.word_id(words[static_cast<std::size_t>(spare++)])));
            }
        }
        s.context = join(ctx);
        s.question = join({"find", rand_word(), rand_word()});
        s.answer = answer;
    } else if (rule.format == Format::Abstractive) {
        std::vector<int> sub = pick_distinct(rng, rule.slice, 2);
        int mc = vocab.marker_count();
        std::string tag_a = marker_tok(mc - 2);
        std::string tag_b = marker_tok(mc - 1);
        std::vector<std::string> sub_toks;
        for (int w : sub) sub_toks.push_back(vocab.token(vocab.word_id(w)));
        std::vector<std::string> ctx{marker_tok(rule.marker), tag_a, sub_toks[0],
                                     tag_b, sub_toks[1]};
        s.context = join(ctx);
        s.question = join({"apply", rand_word(), rand_word()});
        std::vector<std::string> out = sub_toks;
        std::reverse(out.begin(), out.end());  // rotate-1 coincides at this length
        s.answer = join(out);
    } else {
        auto distract = pick_distinct(rng, rule.distractor_pool, 2);
        std::vector<int> opts = pick_distinct(rng, rule.slice, 3);
        std::vector<std::string> opt_toks;
        for (int w : opts) opt_toks.push_back(vocab.token(vocab.word_id(w)));
        const std::string& gold = opt_toks[0];
        std::vector<std::pair<std::string, std::string>> pairs = {
            {marker_tok(rule.marker), opt_toks[0]},
            {marker_tok(distract[0]), opt_toks[1]},
            {marker_tok(distract[1]), opt_toks[2]},
        };
        rng.shuffle(pairs);
        std::vector<std::string> ctx;
        for (const auto& [m, o] : pairs) {
            ctx.push_back(m);
            ctx.push_back(o);
        }
        s.context = join(ctx);
        std::vector<std::string> present = opt_toks;
        rng.shuffle(present);
        std::vector<std::string> q{"pick", rand_word(), rand_word()};
        static const char* kLetters[] = {"(A)", "(B)", "(C)", "(D)", "(E)"};
        for (std::size_t i = 0; i < present.size(); ++i) {
            q.push_back(kLetters[i]);
            q.push_back(present[i]);
        }
        s.question = join(q);
        s.options = present;
        s.answer = gold;
    }
    return s;
}

}  // namespace

TaskStream gen_synthetic_stream(const StreamSpec& spec) {
    if (spec.n_seen < 3)
        throw ValidationError("field n_seen: must be >= 3 (one task per format), got " +
                              std::to_string(spec.n_seen));
    if (spec.n_unseen < 0)
        throw ValidationError("field n_unseen: must be >= 0");
    if (spec.vocab_size < 16)
        throw ValidationError("field vocab_size: must be >= 16, got " +
                              std::to_string(spec.vocab_size));
    if (spec.samples_per_split < 8)
        throw ValidationError("field samples_per_split: must be >= 8, got " +
                              std::to_string(spec.samples_per_split));

    int total = spec.n_seen + spec.n_unseen;
    TaskStream stream;
    stream.vocab_size = spec.vocab_size;
    stream.marker_count = std::max(16, total + kReserveMarkers);
    stream.gen_seed = spec.seed;
    stream.order_seed = 0;

    Vocab vocab = stream.make_vocab();
    auto rules = build_rules(spec, stream.marker_count);

    for (int t = 1; t <= total; ++t) {
        TaskDef def;
        def.id = t;
        def.format = rules[static_cast<std::size_t>(t)].format;
        bool is_seen = t <= spec.n_seen;
        std::unordered_set<std::string> used;
        auto fill = [&](std::vector<Sample>& split, int split_idx) {
            Rng rng(hash_combine(spec.seed,
                                 hash_combine(static_cast<std::uint64_t>(t) * 7919u,
                                              static_cast<std::uint64_t>(split_idx))));
            while (static_cast<int>(split.size()) < spec.samples_per_split) {
                Sample s;
                int attempts = 0;
                do {
                    if (++attempts > 500)
                        throw ValidationError(
                            "field samples_per_split: cannot generate enough distinct samples "
                            "for task " + std::to_string(t));
                    s = gen_one(rules[static_cast<std::size_t>(t)], vocab, t, rng);
                } while (!used.insert(sample_key(s)).second);
                split.push_back(std::move(s));
            }
        };
        if (is_seen) {
            fill(def.train, 0);
            fill(def.val, 1);
        }
        fill(def.test, 2);
        if (is_seen) stream.seen.push_back(std::move(def));
        else stream.unseen.push_back(std::move(def));
    }
    validate_stream(stream);
    return stream;
}

static std::vector<int> serialize_input_tokens(const std::string& context,
                                               const std::string& question, Format format,
                                               const Vocab& vocab) {
    std::vector<int> input;
    input.push_back(Vocab::kFmtExtractive + static_cast<int>(format));
    for (int id : vocab.tokenize(context)) input.push_back(id);
    input.push_back(Vocab::kSep);
    for (int id : vocab.tokenize(question)) input.push_back(id);
    return input;
}

SerializedSample serialize_sample(const Sample& s, const Vocab& vocab) {
    SerializedSample out;
    out.input = serialize_input_tokens(s.context, s.question, s.format, vocab);
    for (int id : vocab.tokenize(s.answer)) out.target.push_back(id);
    out.target.push_back(Vocab::kEos);
    return out;
}

std::vector<int> serialize_input(const std::string& context, const std::string& question,
                                 const Vocab& vocab) {
    return serialize_input_tokens(context, question, infer_format(context, question), vocab);
}

// ---------------------------------------------------------------------------
// Line-delimited stream files

static json sample_to_json(const Sample& s, const char* split) {
    json j;
    j["record"] = "sample";
    j["split"] = split;
    j["task_id"] = s.task_id ? json(*s.task_id) : json(nullptr);
    j["format"] = format_name(s.format);
    j["context"] = s.context;
    j["question"] = s.question;
    j["answer"] = s.answer;
    if (s.format == Format::MultiChoice) j["options"] = s.options;
    return j;
}

void save_stream(const TaskStream& stream, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFault("cannot write stream file: " + path);
    json manifest;
    manifest["record"] = "manifest";
    manifest["version"] = 1;
    manifest["n_seen"] = stream.n_seen();
    manifest["n_unseen"] = stream.n_unseen();
    manifest["vocab_size"] = stream.vocab_size;
    manifest["marker_count"] = stream.marker_count;
    manifest["gen_seed"] = stream.gen_seed;
    manifest["order_seed"] = stream.order_seed;
    out << manifest.dump() << "\n";
    auto dump_task = [&](const TaskDef& t) {
        for (const auto& s : t.train) out << sample_to_json(s, "train").dump() << "\n";
        for (const auto& s : t.val) out << sample_to_json(s, "val").dump() << "\n";
        for (const auto& s : t.test) out << sample_to_json(s, "test").dump() << "\n";
    };
    for (const auto& t : stream.seen) dump_task(t);
    for (const auto& t : stream.unseen) dump_task(t);
    if (!out) throw RuntimeFault("write failed: " + path);
}

TaskStream load_stream(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open stream file: " + path);
    std::string line;
    int lineno = 0;
    TaskStream stream;
    bool have_manifest = false;
    int n_seen = 0, n_unseen = 0;
    std::vector<TaskDef> tasks;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("stream line " + std::to_string(lineno) + ": " + e.what());
        }
        try {
            std::string record = j.at("record").get<std::string>();
            if (record == "manifest") {
                if (have_manifest)
                    throw ValidationError("duplicate manifest");
                have_manifest = true;
                n_seen = j.at("n_seen").get<int>();
                n_unseen = j.at("n_unseen").get<int>();
                stream.vocab_size = j.at("vocab_size").get<int>();
                stream.marker_count = j.at("marker_count").get<int>();
                stream.gen_seed = j.value("gen_seed", 0ULL);
                stream.order_seed = j.value("order_seed", 0ULL);
                tasks.resize(static_cast<std::size_t>(n_seen + n_unseen));
                for (int i = 0; i < n_seen + n_unseen; ++i)
                    tasks[static_cast<std::size_t>(i)].id = i + 1;
            } else if (record == "sample") {
                if (!have_manifest)
                    throw ValidationError("sample before manifest");
                Sample s;
                s.format = format_from_name(j.at("format").get<std::string>());
                s.context = j.at("context").get<std::string>();
                s.question = j.at("question").get<std::string>();
                s.answer = j.at("answer").get<std::string>();
                if (j.contains("options") && !j["options"].is_null())
                    s.options = j["options"].get<std::vector<std::string>>();
                if (j.at("task_id").is_null())
                    throw ValidationError("sample without task_id cannot join a stream");
                int tid = j.at("task_id").get<int>();
                s.task_id = tid;
                if (tid < 1 || tid > n_seen + n_unseen)
                    throw ValidationError("task_id " + std::to_string(tid) + " out of range");
                TaskDef& t = tasks[static_cast<std::size_t>(tid - 1)];
                if (t.train.empty() && t.val.empty() && t.test.empty()) t.format = s.format;
                std::string split = j.at("split").get<std::string>();
                if (split == "train") t.train.push_back(std::move(s));
                else if (split == "val") t.val.push_back(std::move(s));
                else if (split == "test") t.test.push_back(std::move(s));
                else throw ValidationError("unknown split '" + split + "'");
            } else {
                throw ValidationError("unknown record type '" + record + "'");
            }
        } catch (const json::exception& e) {
            throw ValidationError("stream line " + std::to_string(lineno) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("stream line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_manifest) throw ValidationError("stream file has no tasks: " + path);
    for (int i = 0; i < n_seen; ++i) stream.seen.push_back(std::move(tasks[static_cast<std::size_t>(i)]));
    for (int i = 0; i < n_unseen; ++i)
        stream.unseen.push_back(std::move(tasks[static_cast<std::size_t>(n_seen + i)]));
    validate_stream(stream);
    return stream;
}

std::uint64_t stream_fingerprint(const TaskStream& stream) {
    std::uint64_t h = fnv1a64("stream-v1");
    auto mixi = [&](std::uint64_t v) { h = hash_combine(h, v); };
    mixi(static_cast<std::uint64_t>(stream.n_seen()));
    mixi(static_cast<std::uint64_t>(stream.n_unseen()));
    mixi(static_cast<std::uint64_t>(stream.vocab_size));
    mixi(static_cast<std::uint64_t>(stream.marker_count));
    mixi(stream.gen_seed);
    mixi(stream.order_seed);
    auto mix_sample = [&](const Sample& s) {
        h = fnv1a64(s.context, h);
        h = fnv1a64(s.question, h);
        h = fnv1a64(s.answer, h);
        h = fnv1a64(format_name(s.format), h);
        for (const auto& o : s.options) h = fnv1a64(o, h);
        mixi(s.task_id ? static_cast<std::uint64_t>(*s.task_id) : 0);
    };
    auto mix_task = [&](const TaskDef& t) {
        mixi(static_cast<std::uint64_t>(t.id));
        for (const auto& s : t.train) mix_sample(s);
        for (const auto& s : t.val) mix_sample(s);
        for (const auto& s : t.test) mix_sample(s);
    };
    for (const auto& t : stream.seen) mix_task(t);
    for (const auto& t : stream.unseen) mix_task(t);
    return h;
}

}  // namespace hpqa
