#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hpqa/vocab.hpp"

namespace hpqa {

enum class Format { Extractive = 0, Abstractive = 1, MultiChoice = 2 };

const char* format_name(Format f);
Format format_from_name(const std::string& name);

// One QA record. task_id is absent on test-time inputs.
struct Sample {
    std::string context;
    std::string question;
    std::string answer;
    Format format = Format::Extractive;
    std::optional<int> task_id;
    std::vector<std::string> options;  // MultiChoice only, presentation order
};

struct TaskDef {
    int id = 0;
    Format format = Format::Extractive;
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

struct TaskStream {
    std::vector<TaskDef> seen;    // ids 1..N
    std::vector<TaskDef> unseen;  // ids N+1..N+N', test split only
    int vocab_size = 0;           // word block size
    int marker_count = 0;
    std::uint64_t gen_seed = 0;
    std::uint64_t order_seed = 0;  // nonzero when the seen order was pre-permuted

    Vocab make_vocab() const { return Vocab(vocab_size, marker_count); }
    const TaskDef& task_by_id(int id) const;
    int n_seen() const { return static_cast<int>(seen.size()); }
    int n_unseen() const { return static_cast<int>(unseen.size()); }
};

struct StreamSpec {
    int n_seen = 8;
    int n_unseen = 3;
    int samples_per_split = 48;
    int vocab_size = 88;
    std::uint64_t seed = 42;
};

// Flat key=value text, same syntax as run configs.
StreamSpec parse_stream_spec(const std::string& text);
StreamSpec load_stream_spec(const std::string& path);

// Format is decidable from the raw (context, question) pair alone: the
// question of a multi-choice sample carries its rendered options, and
// extractive questions carry the "find" head token.
Format infer_format(const std::string& context, const std::string& question);

void validate_sample(const Sample& s, const std::string& where);
void validate_stream(const TaskStream& stream);

// Deterministic synthetic stream; pure function of the spec.
TaskStream gen_synthetic_stream(const StreamSpec& spec);

// Encoder input: format marker + context + <sep> + question.
// Decoder target: answer + <eos>.
struct SerializedSample {
    std::vector<int> input;
    std::vector<int> target;
};
SerializedSample serialize_sample(const Sample& s, const Vocab& vocab);

// Encoder-side tokens for a bare (context, question) pair at inference time.
std::vector<int> serialize_input(const std::string& context, const std::string& question,
                                 const Vocab& vocab);

void save_stream(const TaskStream& stream, const std::string& path);
TaskStream load_stream(const std::string& path);

// Content hash over manifest and every sample; equal streams hash equal.
std::uint64_t stream_fingerprint(const TaskStream& stream);

std::string normalize_ws(const std::string& s);

}  // namespace hpqa
