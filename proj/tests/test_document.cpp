#include <doctest.h>

#include <string>

#include "dvcr/document.hpp"
#include "dvcr/error.hpp"
#include "dvcr/tokenizer.hpp"
#include "support.hpp"

using namespace dvcr;

namespace {

std::string fixture_text() { return testing::read_file(testing::data_dir() / "fixture.jsonl"); }

std::string first_line() {
  const auto text = fixture_text();
  return text.substr(0, text.find('\n'));
}

std::string replaced(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("fixture corpus parses with linked history") {
  const auto tasks = parse_corpus(testing::data_dir() / "fixture.jsonl");
  REQUIRE(tasks.size() == 2);
  const Task& t = tasks[0];
  CHECK(t.task_id == "fx_travel");
  REQUIRE(t.steps.size() == 2);
  CHECK(t.steps[0].history.empty());
  REQUIRE(t.steps[1].history.size() == 1);
  CHECK(t.steps[1].history[0] == t.steps[0].gt_action);
  CHECK(t.steps[1].history_text == std::vector<std::string>{"[textbox] name=dest -> TYPE Toronto"});
  CHECK(t.steps[0].gt_action.operation == Operation{OpType::kType, std::string("Toronto")});
  CHECK(t.steps[0].document.at("e7").parent == std::optional<std::string>("e0"));
  CHECK(t.steps[0].document.elements[0].parent == std::nullopt);
}

TEST_CASE("serialize then parse is the identity") {
  const auto tasks = parse_corpus_text(fixture_text());
  const auto again = parse_corpus_text(serialize_corpus(tasks));
  CHECK(again == tasks);
  CHECK(serialize_corpus(again) == serialize_corpus(tasks));
}

TEST_CASE("element html text and action rendering") {
  Element e{"x", "input", "", {{"type", "text"}, {"name", "q"}}, {0, 0, 1, 1}, true, true, std::nullopt};
  CHECK(element_html_text(e) == "[input] type=text name=q");
  e.text = "Search";
  CHECK(element_html_text(e) == "[input] Search type=text name=q");
  e.attrs.clear();
  CHECK(element_html_text(e) == "[input] Search");
  HtmlDocument doc{{e}, std::nullopt};
  CHECK(render_action({"x", {OpType::kType, std::string("shoes")}}, doc) == "[input] Search -> TYPE shoes");
  CHECK(render_action({"x", {OpType::kClick, std::nullopt}}, doc) == "[input] Search -> CLICK");
  CHECK_THROWS_AS(render_action({"y", {}}, doc), InvariantError);
}

TEST_CASE("attribute order survives a round trip") {
  auto line = replaced(first_line(), R"("attrs": {"name": "dest"})", R"("attrs": {"zeta": "1", "alpha": "2"})");
  const Task t = parse_task_line(line);
  const auto& attrs = t.steps[0].document.at("e3").attrs;
  REQUIRE(attrs.size() == 2);
  CHECK(attrs[0].first == "zeta");
  CHECK(parse_task_line(serialize_task(t)) == t);
}

TEST_CASE("operation argument rules") {
  CHECK_NOTHROW(validate(Operation{OpType::kClick, std::nullopt}));
  CHECK_THROWS_AS(validate(Operation{OpType::kClick, std::string("x")}), InvariantError);
  CHECK_THROWS_AS(validate(Operation{OpType::kType, std::nullopt}), InvariantError);
  CHECK_THROWS_AS(validate(Operation{OpType::kSelect, std::string("")}), InvariantError);
  CHECK(parse_op_type("SELECT") == OpType::kSelect);
  CHECK_FALSE(parse_op_type("HOVER").has_value());
}

TEST_CASE("malformed lines name the problem and line") {
  const auto line = first_line();
  auto message = [](const std::string& text) -> std::string {
    try {
      parse_corpus_text(text);
    } catch (const Error& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message(line + "\n{not json").find("line 2") != std::string::npos);
  CHECK_THROWS_AS(parse_corpus_text("{not json"), FormatError);
  CHECK_THROWS_AS(parse_corpus_text(replaced(line, R"("op": "TYPE")", R"("op": "HOVER")")), FormatError);
  CHECK_THROWS_AS(parse_corpus_text(replaced(line, R"("bbox": [20, 38, 120, 24])", R"("bbox": [20, 38, 120])")),
                  FormatError);
  CHECK_THROWS_AS(parse_corpus_text(replaced(line, R"("instruction": "Book a flight to Toronto", )", "")),
                  FormatError);

  const auto missing_gt = replaced(line, R"("gt_element": "e3")", R"("gt_element": "e99")");
  CHECK(message(missing_gt).find("e99") != std::string::npos);
  CHECK_THROWS_AS(parse_corpus_text(missing_gt), InvariantError);
  CHECK_THROWS_AS(parse_corpus_text(replaced(line, R"("gt_element": "e3")", R"("gt_element": "e2")")),
                  InvariantError);
  CHECK_THROWS_AS(parse_corpus_text(replaced(line, R"("step_id": 1)", R"("step_id": 5)")), InvariantError);
  CHECK_THROWS_AS(parse_corpus_text(replaced(line, R"("id": "e4")", R"("id": "e3")")), InvariantError);
  CHECK_THROWS_AS(parse_corpus_text(replaced(line, R"("parent": "e0"}, {"id": "e2")", R"("parent": "e2"}, {"id": "e2")")),
                  InvariantError);
  CHECK_THROWS_AS(parse_corpus(testing::data_dir() / "no_such_file.jsonl"), IoError);
}

TEST_CASE("blank lines are skipped") {
  const auto tasks = parse_corpus_text("\n" + first_line() + "\n\n");
  CHECK(tasks.size() == 1);
}

TEST_CASE("tokenizer splits punctuation and lowercases") {
  CHECK(split_tokens("Set the Pickup to 10:30 am!") ==
        std::vector<std::string>{"set", "the", "pickup", "to", "10", ":", "30", "am", "!"});
  CHECK(split_tokens("  ") .empty());
  CHECK(split_tokens("<NBR>") == std::vector<std::string>{"<", "nbr", ">"});
  const std::vector<std::string> toks{"new", "york"};
  CHECK(detokenize(toks) == "new york");
}

TEST_CASE("vocab orders by count and round trips") {
  const std::vector<std::string> texts{"b a a", "c a b"};
  const auto v = Vocab::build(texts, 1);
  CHECK(v.size() == Vocab::kReserved + 3);
  CHECK(v.token(Vocab::kReserved) == "a");
  CHECK(v.token(Vocab::kReserved + 1) == "b");
  CHECK(v.id("zzz") == Vocab::kUnk);
  CHECK(Vocab::parse(v.serialize()) == v);
  CHECK(Vocab::build(texts, 2).size() == Vocab::kReserved + 2);
  CHECK(tokenize("A c d", v) == std::vector<TokenId>{v.id("a"), v.id("c"), Vocab::kUnk});
}
