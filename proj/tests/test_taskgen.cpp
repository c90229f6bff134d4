#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "hpqa/error.hpp"
#include "hpqa/stream.hpp"

using namespace hpqa;

TEST_CASE("synthetic stream shape and determinism") {
    StreamSpec spec;
    spec.n_seen = 8;
    spec.n_unseen = 3;
    spec.samples_per_split = 8;
    spec.vocab_size = 88;
    spec.seed = 42;
    TaskStream a = gen_synthetic_stream(spec);
    TaskStream b = gen_synthetic_stream(spec);
    CHECK(a.n_seen() == 8);
    CHECK(a.n_unseen() == 3);
    CHECK(stream_fingerprint(a) == stream_fingerprint(b));

    std::set<Format> formats;
    for (const auto& t : a.seen) formats.insert(t.format);
    CHECK(formats.size() == 3);
    for (const auto& t : a.unseen) {
        CHECK(t.train.empty());
        CHECK(t.test.size() == 8);
        CHECK(formats.count(t.format) == 1);
    }
    for (const auto& t : a.seen) {
        CHECK(t.train.size() == 8);
        CHECK(t.val.size() == 8);
        CHECK(t.test.size() == 8);
    }
}

TEST_CASE("stream spec validation names the offending field") {
    StreamSpec spec;
    spec.n_seen = 2;
    CHECK_THROWS_WITH_AS(gen_synthetic_stream(spec), doctest::Contains("n_seen"),
                         ValidationError);
    spec.n_seen = 3;
    spec.vocab_size = 8;
    CHECK_THROWS_WITH_AS(gen_synthetic_stream(spec), doctest::Contains("vocab_size"),
                         ValidationError);
    spec.vocab_size = 32;
    spec.samples_per_split = 4;
    CHECK_THROWS_WITH_AS(gen_synthetic_stream(spec), doctest::Contains("samples_per_split"),
                         ValidationError);
    spec.samples_per_split = 8;
    spec.n_unseen = -1;
    CHECK_THROWS_AS(gen_synthetic_stream(spec), ValidationError);
}

TEST_CASE("infer_format covers the three branches") {
    CHECK(infer_format("ctx", "pick w01 (A) w02 (B) w03") == Format::MultiChoice);
    CHECK(infer_format("m00 w01", "find w02 w03") == Format::Extractive);
    CHECK(infer_format("m00 w01 w02", "apply w03") == Format::Abstractive);
    CHECK(infer_format("", "just a plain question") == Format::Abstractive);
}

TEST_CASE("every generated sample is inferable and self-consistent") {
    StreamSpec spec;
    spec.n_seen = 3;
    spec.n_unseen = 2;
    spec.samples_per_split = 12;
    spec.vocab_size = 40;
    spec.seed = 7;
    TaskStream s = gen_synthetic_stream(spec);
    auto check_task = [](const TaskDef& t) {
        for (const auto& smp : t.test) {
            CHECK(infer_format(smp.context, smp.question) == smp.format);
            CHECK(!smp.answer.empty());
            if (smp.format == Format::MultiChoice) {
                REQUIRE(smp.options.size() == 3);
                int hits = 0;
                for (const auto& o : smp.options)
                    if (o == smp.answer) ++hits;
                CHECK(hits == 1);
                CHECK(smp.question.find(smp.options[0]) != std::string::npos);
                CHECK(smp.question.find(smp.options[1]) != std::string::npos);
                CHECK(smp.question.find(smp.options[2]) != std::string::npos);
            }
        }
    };
    for (const auto& t : s.seen) check_task(t);
    for (const auto& t : s.unseen) check_task(t);
}

TEST_CASE("serializer golden fixture and round trip") {
    Vocab vocab(16, 16);
    Sample s;
    s.format = Format::MultiChoice;
    s.context = "m00 w01 m01 w02 m02 w03";
    s.question = "pick w04 w05 (A) w01 (B) w02 (C) w03";
    s.options = {"w01", "w02", "w03"};
    s.answer = "w01";
    s.task_id = 1;
    validate_sample(s, "fixture");
    SerializedSample ser = serialize_sample(s, vocab);
    // framing: <mc> context <sep> question; words start at id 31 (15 specials + 16 markers)
    std::vector<int> expected_input = {6, 15, 32, 16, 33, 17, 34, 3,
                                       9, 35, 36, 10, 32, 11, 33, 12, 34};
    std::vector<int> expected_target = {32, 2};
    CHECK(ser.input == expected_input);
    CHECK(ser.target == expected_target);
    CHECK(vocab.detokenize(ser.target) == s.answer);

    Sample abs;
    abs.format = Format::Abstractive;
    abs.context = "m03 w01 w02 w03";
    abs.question = "apply w04";
    abs.answer = "w03 w02 w01";
    auto ser2 = serialize_sample(abs, vocab);
    CHECK(vocab.detokenize(ser2.target) == abs.answer);
    CHECK(ser2.input.front() == Vocab::kFmtAbstractive);

    // unknown tokens map to <unk>, never an error
    Sample unk = abs;
    unk.context = "m03 zebra w02 w03";
    auto ser3 = serialize_sample(unk, vocab);
    CHECK(ser3.input[2] == Vocab::kUnk);
}

TEST_CASE("stream file round trip and error reporting") {
    StreamSpec spec;
    spec.n_seen = 3;
    spec.n_unseen = 1;
    spec.samples_per_split = 8;
    spec.vocab_size = 32;
    spec.seed = 11;
    TaskStream s = gen_synthetic_stream(spec);
    auto path = std::filesystem::temp_directory_path() / "hpqa_stream_test.jsonl";
    save_stream(s, path.string());
    TaskStream loaded = load_stream(path.string());
    CHECK(stream_fingerprint(loaded) == stream_fingerprint(s));
    // save(load(x)) == save(x) at the byte level
    auto path2 = std::filesystem::temp_directory_path() / "hpqa_stream_test2.jsonl";
    save_stream(loaded, path2.string());
    std::ifstream f1(path), f2(path2);
    std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);

    SUBCASE("multichoice sample lacking options is rejected") {
        std::ofstream out(path);
        out << R"({"record":"manifest","version":1,"n_seen":1,"n_unseen":0,"vocab_size":32,"marker_count":16,"gen_seed":1,"order_seed":0})"
            << "\n";
        out << R"({"record":"sample","split":"train","task_id":1,"format":"multichoice","context":"m00 w01","question":"pick w02 (A) w03 (B) w04","answer":"w03"})"
            << "\n";
        out << R"({"record":"sample","split":"test","task_id":1,"format":"multichoice","context":"m00 w05","question":"pick w06 (A) w07 (B) w08","answer":"w07","options":["w07","w08"]})"
            << "\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_stream(path.string()), doctest::Contains("options"),
                             ValidationError);
    }
    SUBCASE("malformed json reports the line number") {
        std::ofstream out(path);
        out << R"({"record":"manifest","version":1,"n_seen":3,"n_unseen":0,"vocab_size":32,"marker_count":16})"
            << "\n";
        out << "{broken\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_stream(path.string()), doctest::Contains("line 2"),
                             ValidationError);
    }
    SUBCASE("empty file errors with no tasks") {
        std::ofstream out(path);
        out.close();
        CHECK_THROWS_WITH_AS(load_stream(path.string()), doctest::Contains("no tasks"),
                             ValidationError);
    }
}

TEST_CASE("stream spec parser") {
    StreamSpec s =
        parse_stream_spec("n_seen=5\nn_unseen=2\nsamples_per_split=16\nvocab_size=64\nseed=9\n");
    CHECK(s.n_seen == 5);
    CHECK(s.n_unseen == 2);
    CHECK(s.samples_per_split == 16);
    CHECK(s.vocab_size == 64);
    CHECK(s.seed == 9);
    CHECK_THROWS_AS(parse_stream_spec("bogus_field=1\n"), ValidationError);
}
