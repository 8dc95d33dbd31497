#include <doctest.h>

#include "bimpm/data.hpp"
#include "bimpm/error.hpp"
#include "synthetic.hpp"

using namespace bimpm;

namespace
{

const TaskSchema kParaphrase = TaskSchema::for_task(TaskKind::Paraphrase);
const TaskSchema kNli = TaskSchema::for_task(TaskKind::Nli);
const TaskSchema kRanking = TaskSchema::for_task(TaskKind::Ranking);

} // namespace

TEST_CASE("a two-row paraphrase file")
{
    const auto pairs = parse_dataset_text("a1\tHow old are you ?\thow old r u\t1\r\na2\tthe cat\ta dog\t0\n", kParaphrase);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].id == "a1");
    CHECK(pairs[0].p == std::vector<std::string>{"How", "old", "are", "you", "?"});
    CHECK(pairs[0].q.size() == 4);
    CHECK(pairs[0].label == 1);
    CHECK(pairs[1].label == 0);
    CHECK(pairs[1].group_id.empty());
}

TEST_CASE("a bad label names the line")
{
    try {
        parse_dataset_text("a\tx\ty\t1\nb\tx\ty\t2\n", kParaphrase, {}, "train.tsv");
        FAIL("expected a data error");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("train.tsv:2") != std::string::npos);
        CHECK(what.find("'2'") != std::string::npos);
    }
}

TEST_CASE("malformed rows are data errors")
{
    CHECK_THROWS_AS(parse_dataset_text("a\tx\ty\n", kParaphrase), DataError);
    CHECK_THROWS_AS(parse_dataset_text("a\tx\ty\t1\textra\n", kParaphrase), DataError);
    CHECK_THROWS_AS(parse_dataset_text("a\t \ty\t1\n", kParaphrase), DataError);
    CHECK_THROWS_AS(parse_dataset_text("a\tx\ty\t1\n\nb\tx\ty\t0\n", kParaphrase), DataError);
    CHECK_THROWS_AS(parse_dataset("/nonexistent/data.tsv", kParaphrase), DataError);
    CHECK_THROWS_AS(parse_dataset_text("a\tx\ty\t1\n", kParaphrase, ParseOptions{0, false}), ConfigError);
}

TEST_CASE("NLI labels and histogram")
{
    const auto pairs = parse_dataset_text("1\ta b\tc\tneutral\n2\ta\tb\tentailment\n3\ta\tb\tneutral\n4\ta\tb\t"
                                          "contradiction\n",
                                          kNli);
    CHECK(kNli.num_classes() == 3);
    CHECK(label_histogram(pairs, kNli) == std::vector<std::size_t>{1, 1, 2});
    CHECK_THROWS_AS(parse_dataset_text("1\ta\tb\t1\n", kNli), DataError);
}

TEST_CASE("ranking rows carry their question id")
{
    const auto pairs = parse_dataset_text("q1\twhat is it\tit is a cat\t1\nq1\twhat is it\tno\t0\nq2\twho\tme\t1\n",
                                          kRanking);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].group_id == "q1");
    CHECK(pairs[2].group_id == "q2");
    CHECK(pairs[0].id != pairs[1].id);
}

TEST_CASE("truncation and lowercasing")
{
    const auto pairs = parse_dataset_text("a\tOne Two THREE four\tX y\t1\n", kParaphrase, ParseOptions{3, true});
    CHECK(pairs[0].p == std::vector<std::string>{"one", "two", "three"});
    CHECK(pairs[0].q == std::vector<std::string>{"x", "y"});
}

TEST_CASE("serialize then parse is the identity")
{
    for (const auto& schema : {kParaphrase, kNli}) {
        std::vector<SentencePair> pairs = synth::containment_task(30, 4);
        for (auto& p : pairs)
            p.label %= schema.num_classes();
        const auto text = serialize_dataset(pairs, schema);
        const auto again = parse_dataset_text(text, schema);
        REQUIRE(again.size() == pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            CHECK(again[i].id == pairs[i].id);
            CHECK(again[i].p == pairs[i].p);
            CHECK(again[i].q == pairs[i].q);
            CHECK(again[i].label == pairs[i].label);
        }
        CHECK(serialize_dataset(again, schema) == text);
    }
}

TEST_CASE("parse_dataset reads from disk")
{
    const auto dir = synth::scratch_dir("data");
    synth::write_text(dir / "d.tsv", "a\tx y\tz\t0\n");
    CHECK(parse_dataset(dir / "d.tsv", kParaphrase).size() == 1);
    synth::write_text(dir / "empty.tsv", "");
    CHECK_THROWS_AS(parse_dataset(dir / "empty.tsv", kParaphrase), DataError);
}

TEST_CASE("task names")
{
    CHECK(parse_task("nli") == TaskKind::Nli);
    CHECK(task_name(TaskKind::Ranking) == "ranking");
    CHECK_THROWS_AS(parse_task("qa"), ConfigError);
}
