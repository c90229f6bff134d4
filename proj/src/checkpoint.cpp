#include "hpqa/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hpqa/error.hpp"
#include "hpqa/kv.hpp"

namespace hpqa {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kVersion = 1;

void push_f32(std::vector<unsigned char>& buf, double v) {
    float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    buf.push_back(static_cast<unsigned char>(u & 0xff));
    buf.push_back(static_cast<unsigned char>((u >> 8) & 0xff));
    buf.push_back(static_cast<unsigned char>((u >> 16) & 0xff));
    buf.push_back(static_cast<unsigned char>((u >> 24) & 0xff));
}

double read_f32(const unsigned char* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) |
                      (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
}

json sample_to_json(const Sample& s) {
    json j;
    j["context"] = s.context;
    j["question"] = s.question;
    j["answer"] = s.answer;
    j["format"] = format_name(s.format);
    j["task_id"] = s.task_id ? json(*s.task_id) : json(nullptr);
    if (!s.options.empty()) j["options"] = s.options;
    return j;
}

Sample sample_from_json(const json& j) {
    Sample s;
    s.context = j.at("context").get<std::string>();
    s.question = j.at("question").get<std::string>();
    s.answer = j.at("answer").get<std::string>();
    s.format = format_from_name(j.at("format").get<std::string>());
    if (!j.at("task_id").is_null()) s.task_id = j.at("task_id").get<int>();
    if (j.contains("options")) s.options = j["options"].get<std::vector<std::string>>();
    return s;
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFault("cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    return buf;
}

}  // namespace

void save_checkpoint(Trainer& trainer, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = trainer.config().to_text();
    manifest["encoder_seed"] = trainer.config().encoder_seed;
    manifest["query_dim"] = trainer.config().query_dim;
    manifest["vocab_words"] = trainer.vocab().word_count();
    manifest["vocab_markers"] = trainer.vocab().marker_count();
    manifest["learned"] = trainer.learned();
    manifest["boundaries_fitted"] = trainer.boundaries_fitted();
    json bounds = json::object();
    for (const auto& [id, d] : trainer.boundaries()) bounds[std::to_string(id)] = d;
    manifest["boundaries"] = bounds;
    auto [data_counter, sampling_counter] = trainer.rng_counters();
    manifest["rng"] = {{"data_counter", data_counter}, {"sampling_counter", sampling_counter}};

    json mem = json::array();
    for (const auto& e : trainer.memory().entries) {
        json m;
        m["sample"] = sample_to_json(e.sample);
        m["task_id"] = e.task_id;
        mem.push_back(m);
    }
    manifest["memory"] = mem;

    std::vector<unsigned char> blob;
    json index = json::array();
    auto dump_tensor = [&](const std::string& name, const Matrix& value) {
        json t;
        t["name"] = name;
        t["rows"] = value.rows;
        t["cols"] = value.cols;
        t["offset"] = blob.size() / 4;
        index.push_back(t);
        for (double v : value.data) push_f32(blob, v);
    };
    trainer.model().visit_params([&](Param& p) { dump_tensor(p.name, p.value); });
    trainer.pool_mut().visit_params([&](Param& p) { dump_tensor(p.name, p.value); });
    {
        std::size_t d = static_cast<std::size_t>(trainer.config().query_dim);
        Matrix mq(trainer.memory().size(), d);
        for (std::size_t i = 0; i < trainer.memory().size(); ++i)
            std::copy(trainer.memory().entries[i].query.begin(),
                      trainer.memory().entries[i].query.end(), mq.row(i));
        dump_tensor("memory.queries", mq);
    }
    manifest["tensors"] = index;

    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_bytes(blob.data(), blob.size())));
    manifest["tensor_digest"] = digest;

    std::ofstream bin(fs::path(dir) / "tensors.bin", std::ios::binary);
    if (!bin) throw RuntimeFault("cannot write tensors.bin in " + dir);
    bin.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
    if (!bin) throw RuntimeFault("write failed: tensors.bin");
    bin.close();
    write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    json manifest;
    try {
        manifest = json::parse(read_text_file((fs::path(dir) / "manifest.json").string()));
    } catch (const json::exception& e) {
        throw RuntimeFault("checkpoint manifest corrupt: " + std::string(e.what()));
    }
    if (manifest.at("version").get<int>() != kVersion)
        throw RuntimeFault("unsupported checkpoint version");

    LoadedCheckpoint out{parse_run_config(manifest.at("config").get<std::string>()),
                         Vocab(manifest.at("vocab_words").get<int>(),
                               manifest.at("vocab_markers").get<int>()),
                         nullptr};
    if (out.config.encoder_seed != manifest.at("encoder_seed").get<std::uint64_t>() ||
        out.config.query_dim != manifest.at("query_dim").get<int>())
        throw RuntimeFault("checkpoint refuses to load: encoder seed/dim mismatch");

    auto blob = read_bytes((fs::path(dir) / "tensors.bin").string());
    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_bytes(blob.data(), blob.size())));
    if (manifest.at("tensor_digest").get<std::string>() != digest)
        throw RuntimeFault("checkpoint refuses to load: tensor digest mismatch");

    out.trainer = std::make_unique<Trainer>(out.config, out.vocab);
    Trainer& tr = *out.trainer;

    std::vector<int> learned = manifest.at("learned").get<std::vector<int>>();
    Vec unit(static_cast<std::size_t>(out.config.query_dim), 0.0);
    unit[0] = 1.0;
    for (int id : learned) tr.pool_mut().ensure_task(id, unit);

    struct Entry {
        std::size_t rows, cols, offset;
    };
    std::map<std::string, Entry> index;
    for (const auto& t : manifest.at("tensors"))
        index[t.at("name").get<std::string>()] = {t.at("rows").get<std::size_t>(),
                                                  t.at("cols").get<std::size_t>(),
                                                  t.at("offset").get<std::size_t>()};
    std::size_t matched = 0;
    auto load_tensor = [&](const std::string& name, Matrix& value) {
        auto it = index.find(name);
        if (it == index.end()) throw RuntimeFault("checkpoint missing tensor " + name);
        if (it->second.rows != value.rows || it->second.cols != value.cols)
            throw RuntimeFault("checkpoint tensor shape mismatch for " + name);
        std::size_t off = it->second.offset * 4;
        if (off + value.data.size() * 4 > blob.size())
            throw RuntimeFault("checkpoint tensor out of bounds: " + name);
        for (std::size_t i = 0; i < value.data.size(); ++i)
            value.data[i] = read_f32(blob.data() + off + i * 4);
        ++matched;
    };
    tr.model().visit_params([&](Param& p) { load_tensor(p.name, p.value); });
    tr.pool_mut().visit_params([&](Param& p) { load_tensor(p.name, p.value); });

    std::vector<MemoryEntry> memory;
    auto mit = index.find("memory.queries");
    if (mit == index.end()) throw RuntimeFault("checkpoint missing tensor memory.queries");
    ++matched;
    const auto& mj = manifest.at("memory");
    if (mit->second.rows != mj.size())
        throw RuntimeFault("checkpoint memory size mismatch");
    if (matched != index.size())
        throw RuntimeFault("checkpoint contains unexpected tensors");
    for (std::size_t i = 0; i < mj.size(); ++i) {
        MemoryEntry e;
        e.sample = sample_from_json(mj[i].at("sample"));
        e.task_id = mj[i].at("task_id").get<int>();
        // Cached vectors are revalidated against a fresh encode and restored
        // at full precision from it.
        e.query = tr.encoder().encode(e.sample).values;
        std::size_t off = mit->second.offset * 4;
        for (std::size_t d = 0; d < e.query.size(); ++d) {
            double stored = read_f32(blob.data() + off + (i * e.query.size() + d) * 4);
            if (std::abs(stored - e.query[d]) > 1e-5)
                throw RuntimeFault("checkpoint memory query vector mismatch at entry " +
                                   std::to_string(i));
        }
        memory.push_back(std::move(e));
    }
    tr.restore_memory(std::move(memory));

    std::map<int, double> bounds;
    for (const auto& [key, val] : manifest.at("boundaries").items())
        bounds[std::stoi(key)] = val.get<double>();
    tr.restore_boundaries(std::move(bounds), manifest.at("boundaries_fitted").get<bool>());
    tr.restore_learned(learned);
    tr.set_rng_counters(manifest.at("rng").at("data_counter").get<std::uint64_t>(),
                        manifest.at("rng").at("sampling_counter").get<std::uint64_t>());
    return out;
}

std::uint64_t checkpoint_digest(const std::string& dir) {
    auto manifest = read_bytes((fs::path(dir) / "manifest.json").string());
    auto tensors = read_bytes((fs::path(dir) / "tensors.bin").string());
    return hash_combine(fnv1a64_bytes(manifest.data(), manifest.size()),
                        fnv1a64_bytes(tensors.data(), tensors.size()));
}

}  // namespace hpqa
