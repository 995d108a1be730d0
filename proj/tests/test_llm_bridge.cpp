#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "support/golden_templates.hpp"
#include "trace/corpus.hpp"
#include "trace/error.hpp"
#include "trace/geometry.hpp"
#include "trace/llm_bridge.hpp"
#include "trace/preference.hpp"
#include "trace/table.hpp"

using namespace trace;

namespace {

Conversation small_conversation() {
  Conversation c;
  c.conversation_id = "conv-1";
  c.user_id = "u1";
  c.use_case = "Testing";
  c.satisfaction = 4;
  c.goal_text = "find a good recipe";
  auto turn = [](Role role, const char* text, std::int64_t t) {
    Turn x;
    x.role = role;
    x.text = std::string(text);
    x.start_ms = t;
    x.end_ms = t + 500;
    return x;
  };
  c.turns = {turn(Role::user, "hi", 0), turn(Role::model, "hello", 600),
             turn(Role::user, "bye", 1200), turn(Role::model, "goodbye", 1800)};
  return c;
}


std::string replace_once(std::string text, const std::string& slot, const std::string& value) {
  const auto pos = text.find(slot);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, slot.size(), value);
}

}  // namespace

TEST_CASE("template bodies byte-match the golden copies") {
  CHECK(prompt_template(TemplateId::standard_v1).body == trace_test::kGoldenStandard);
  CHECK(prompt_template(TemplateId::goal_aware_v2).body == trace_test::kGoldenGoalAware);
  CHECK(template_id_from_name("standard_v1") == TemplateId::standard_v1);
  CHECK(template_id_from_name("goal_aware_v2") == TemplateId::goal_aware_v2);
  CHECK(!template_id_from_name("v3").has_value());
}

TEST_CASE("prompt rendering") {
  const Conversation c = small_conversation();

  SUBCASE("transcript lines alternate User/Model in order") {
    CHECK(render_transcript(c) == "User: hi\nModel: hello\nUser: bye\nModel: goodbye");
  }

  SUBCASE("standard render equals the template with the slot substituted") {
    const std::string rendered = render_prompt(prompt_template(TemplateId::standard_v1), c);
    const std::string expected =
        replace_once(trace_test::kGoldenStandard, "{transcript_text}", render_transcript(c));
    CHECK(rendered == expected);
    // final line check
    const auto last_newline = rendered.rfind('\n');
    CHECK(rendered.substr(last_newline + 1) == "SATISFACTION SCORE (1-5):");
  }

  SUBCASE("goal-aware render carries the goal block") {
    const std::string rendered = render_prompt(prompt_template(TemplateId::goal_aware_v2), c);
    CHECK(rendered.find("USER'S GOAL:\nfind a good recipe\n") != std::string::npos);
    std::string expected =
        replace_once(trace_test::kGoldenGoalAware, "{goal_text}", *c.goal_text);
    expected = replace_once(expected, "{transcript_text}", render_transcript(c));
    CHECK(rendered == expected);
  }

  SUBCASE("goal-aware template without a goal is an error") {
    Conversation no_goal = c;
    no_goal.goal_text.reset();
    CHECK_THROWS_AS(render_prompt(prompt_template(TemplateId::goal_aware_v2), no_goal),
                    DataError);
  }

  SUBCASE("empty-text turns render as a bare role prefix") {
    Conversation sparse = c;
    sparse.turns[0].text.reset();
    sparse.turns[1].text = "";
    const std::string t = render_transcript(sparse);
    CHECK(t.find("User: \nModel: \n") == 0);
  }

  SUBCASE("distinct transcripts give distinct prompts") {
    Conversation other = c;
    other.turns[3].text = "farewell";
    CHECK(render_prompt(prompt_template(TemplateId::standard_v1), c) !=
          render_prompt(prompt_template(TemplateId::standard_v1), other));
  }
}

TEST_CASE("judge response parsing accepts exactly one digit 1-5 with whitespace") {
  CHECK(parse_judge_response("4") == 4);
  CHECK(parse_judge_response(" 5\n") == 5);
  CHECK(parse_judge_response("\t3 \r\n") == 3);
  for (const char* bad : {"4.", "", "Score: 4", "6", "0", "10", "05", "4 4", "four", " ", "4a"}) {
    CAPTURE(bad);
    CHECK(!parse_judge_response(bad).has_value());
  }
  std::string why;
  CHECK(!parse_judge_response("6", &why).has_value());
  CHECK(why.find("outside 1..5") != std::string::npos);
  CHECK(!parse_judge_response("4.", &why).has_value());
  CHECK(why.find("lone integer") != std::string::npos);

  SUBCASE("acceptance matches the language over a small exhaustive alphabet") {
    const std::string alphabet = " \n015a.";
    std::vector<std::string> pool{""};
    for (int len = 1; len <= 3; ++len) {
      std::vector<std::string> next;
      for (const auto& s : pool) {
        if (s.size() == static_cast<std::size_t>(len) - 1) {
          for (char ch : alphabet) next.push_back(s + ch);
        }
      }
      for (const auto& s : next) {
        // reference recognizer: ws* digit(1-5) ws*
        std::size_t i = 0, j = s.size();
        auto ws = [](char ch) { return ch == ' ' || ch == '\n'; };
        while (i < j && ws(s[i])) ++i;
        while (j > i && ws(s[j - 1])) --j;
        const bool expect = (j - i == 1) && s[i] >= '1' && s[i] <= '5';
        CAPTURE(s);
        CHECK(parse_judge_response(s).has_value() == expect);
      }
      pool.insert(pool.end(), next.begin(), next.end());
    }
  }
}

TEST_CASE("score files round trip and validate") {
  std::vector<JudgeScore> scores{{"conv-1", 4, TemplateId::standard_v1, "4"},
                                 {"conv-2", 2, TemplateId::standard_v1, " 2"}};
  write_score_file("tmp_scores.jsonl", scores);
  const auto back = read_score_file("tmp_scores.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].conversation_id == "conv-1");
  CHECK(back[0].score == 4);
  CHECK(back[1].raw_response == " 2");

  SUBCASE("rewriting what was read is byte-identical") {
    write_score_file("tmp_scores_copy.jsonl", back);
    std::ifstream f1("tmp_scores.jsonl"), f2("tmp_scores_copy.jsonl");
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    std::remove("tmp_scores_copy.jsonl");
  }

  SUBCASE("coverage validation lists missing conversations") {
    std::vector<Conversation> corpus{small_conversation()};
    corpus[0].conversation_id = "conv-3";
    CHECK_THROWS_WITH_AS(acquire_scores_from_file("tmp_scores.jsonl", corpus),
                         doctest::Contains("conv-3"), DataError);
    corpus[0].conversation_id = "conv-2";
    const auto ok = acquire_scores_from_file("tmp_scores.jsonl", corpus);
    REQUIRE(ok.size() == 1);
    CHECK(ok[0].score == 2);
  }

  SUBCASE("out-of-range scores in a file are rejected") {
    std::ofstream out("tmp_scores_bad.jsonl");
    out << R"({"conversation_id":"x","score":6,"template_id":"standard_v1","raw_response":"6"})"
        << '\n';
    out.close();
    CHECK_THROWS_AS(read_score_file("tmp_scores_bad.jsonl"), DataError);
    std::remove("tmp_scores_bad.jsonl");
  }
  std::remove("tmp_scores.jsonl");
}

TEST_CASE("hybrid table assembly") {
  SyntheticSpec spec;
  spec.n_users = 3;
  spec.conversations_per_user = 1;
  spec.seed = 2;
  const SyntheticResult r = generate_synthetic(spec);
  const FeatureTable table =
      features_to_table(extract_features_batch(r.conversations), r.conversations);

  std::vector<JudgeScore> scores;
  for (const auto& c : r.conversations) {
    scores.push_back({c.conversation_id, 3, TemplateId::standard_v1, "3"});
  }

  SUBCASE("appends the column and changes the catalog hash") {
    const FeatureTable hybrid = assemble_hybrid_table(table, scores);
    CHECK(hybrid.columns.size() == 31);
    CHECK(hybrid.columns.back() == "llm_score");
    CHECK(hybrid.hash() != table.hash());
    for (const TableRow& row : hybrid.rows) {
      CHECK(*row.values.back() == 3.0);
    }
  }

  SUBCASE("a forest trained on the hybrid table rejects plain vectors") {
    const FeatureTable hybrid = assemble_hybrid_table(table, scores);
    std::vector<double> targets;
    for (const auto& c : r.conversations) targets.push_back(c.satisfaction);
    ForestConfig config;
    config.n_trees = 5;
    config.min_samples_leaf = 1;
    config.seed = 3;
    const ForestModel model = train_forest(hybrid, targets, config);
    const FeatureVector plain = extract_features(r.conversations[0]);
    CHECK_THROWS_WITH_AS(predict(model, plain), doctest::Contains("catalog"), DataError);
  }

  SUBCASE("coverage gaps are errors") {
    scores.pop_back();
    CHECK_THROWS_WITH_AS(assemble_hybrid_table(table, scores),
                         doctest::Contains(r.conversations.back().conversation_id.c_str()),
                         DataError);
  }

  SUBCASE("double assembly is rejected") {
    const FeatureTable hybrid = assemble_hybrid_table(table, scores);
    CHECK_THROWS_AS(assemble_hybrid_table(hybrid, scores), DataError);
  }
}

TEST_CASE("endpoint acquisition against a local stub") {
  using nlohmann::ordered_json;
  httplib::Server server;
  std::atomic<int> calls{0};
  std::atomic<int> fail_first{0};  // when > 0, that many requests fail with 500

  server.Post("/judge", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    if (fail_first.load() > 0) {
      --fail_first;
      res.status = 500;
      res.set_content("overloaded", "text/plain");
      return;
    }
    const auto body = ordered_json::parse(req.body);
    REQUIRE(body.contains("prompt"));
    ordered_json reply;
    reply["text"] = "3";
    res.set_content(reply.dump(), "application/json");
  });

  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string url = "http://127.0.0.1:" + std::to_string(port) + "/judge";

  std::vector<Conversation> corpus;
  for (int i = 0; i < 3; ++i) {
    Conversation c = small_conversation();
    c.conversation_id = "conv-" + std::to_string(i);
    corpus.push_back(std::move(c));
  }

  SUBCASE("steady stub scores everything 3") {
    EndpointSource source;
    source.url = url;
    source.policy.initial_backoff_ms = 1;
    const ScoreAcquisition r = acquire_scores_from_endpoint(corpus, TemplateId::standard_v1, source);
    CHECK(r.failures.empty());
    REQUIRE(r.scores.size() == 3);
    for (const auto& s : r.scores) CHECK(s.score == 3);
    CHECK(r.scores[0].conversation_id == "conv-0");
    CHECK(r.total_retries == 0);
  }

  SUBCASE("one transient failure is retried and logged") {
    fail_first = 1;
    EndpointSource source;
    source.url = url;
    source.policy.max_retries = 2;
    source.policy.initial_backoff_ms = 1;
    std::vector<Conversation> one{corpus[0]};
    const ScoreAcquisition r = acquire_scores_from_endpoint(one, TemplateId::standard_v1, source);
    CHECK(r.failures.empty());
    REQUIRE(r.scores.size() == 1);
    CHECK(r.scores[0].score == 3);
    CHECK(r.total_retries == 1);
  }

  SUBCASE("exhausted retries enumerate the missing conversation") {
    fail_first = 100;
    EndpointSource source;
    source.url = url;
    source.policy.max_retries = 1;
    source.policy.initial_backoff_ms = 1;
    std::vector<Conversation> one{corpus[1]};
    const ScoreAcquisition r = acquire_scores_from_endpoint(one, TemplateId::standard_v1, source);
    fail_first = 0;
    CHECK(r.scores.empty());
    REQUIRE(r.failures.size() == 1);
    CHECK(r.failures[0].conversation_id == "conv-1");
    CHECK(r.failures[0].attempts == 2);
  }

  server.stop();
  listener.join();
}

TEST_CASE("endpoint credentials come from the named environment variable") {
  using nlohmann::ordered_json;
  httplib::Server server;
  std::string seen_auth;
  server.Post("/judge", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    ordered_json reply;
    reply["text"] = "2";
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EndpointSource source;
  source.url = "http://127.0.0.1:" + std::to_string(port) + "/judge";
  source.credential_env = "TRACE_TEST_JUDGE_TOKEN";
  std::vector<Conversation> corpus{small_conversation()};

  SUBCASE("unset variable is an error naming only the variable") {
    unsetenv("TRACE_TEST_JUDGE_TOKEN");
    CHECK_THROWS_WITH_AS(
        acquire_scores_from_endpoint(corpus, TemplateId::standard_v1, source),
        doctest::Contains("TRACE_TEST_JUDGE_TOKEN"), DataError);
  }

  SUBCASE("set variable is sent as a bearer credential") {
    setenv("TRACE_TEST_JUDGE_TOKEN", "sekrit-token", 1);
    const ScoreAcquisition r =
        acquire_scores_from_endpoint(corpus, TemplateId::standard_v1, source);
    CHECK(r.scores.size() == 1);
    CHECK(seen_auth == "Bearer sekrit-token");
    unsetenv("TRACE_TEST_JUDGE_TOKEN");
  }

  server.stop();
  listener.join();
}

TEST_CASE("malformed endpoint replies abort with a body excerpt") {
  httplib::Server server;
  server.Post("/judge", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>totally not json</html>", "text/html");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EndpointSource source;
  source.url = "http://127.0.0.1:" + std::to_string(port) + "/judge";
  std::vector<Conversation> corpus{small_conversation()};
  CHECK_THROWS_WITH_AS(acquire_scores_from_endpoint(corpus, TemplateId::standard_v1, source),
                       doctest::Contains("not json"), DataError);
  server.stop();
  listener.join();
}

TEST_CASE("unparseable judge replies are failures, not crashes") {
  httplib::Server server;
  server.Post("/judge", [&](const httplib::Request&, httplib::Response& res) {
    nlohmann::ordered_json reply;
    reply["text"] = "Score: 4";
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EndpointSource source;
  source.url = "http://127.0.0.1:" + std::to_string(port) + "/judge";
  std::vector<Conversation> corpus{small_conversation()};
  const ScoreAcquisition r = acquire_scores_from_endpoint(corpus, TemplateId::standard_v1, source);
  CHECK(r.scores.empty());
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].reason.find("unparseable") != std::string::npos);
  server.stop();
  listener.join();
}

TEST_CASE("hybrid forest beats single-signal scorers when truth mixes signals") {
  // Geometry signal (volatility) plus a judge-only latent: the hybrid table
  // sees both, each standalone scorer sees one.
  SyntheticSpec spec;
  spec.n_users = 12;
  spec.conversations_per_user = 12;
  spec.embedding_dim = 8;
  spec.noise_sd = 0.25;
  spec.user_intercept_sd = 0.15;
  spec.seed = 606;
  spec.truth_weights["conversation_volatility"] = -0.9;
  spec.truth_weights["judge_quality"] = 0.9;
  const SyntheticResult r = generate_synthetic(spec);
  const FeatureTable table =
      features_to_table(extract_features_batch(r.conversations), r.conversations);
  const BuildPairsResult pairs = build_pairs(r.conversations);

  // The judge reads the latent invisible to the geometry.
  std::vector<JudgeScore> judge;
  std::map<std::string, double> judge_map;
  for (const auto& c : r.conversations) {
    const double q = r.truth.latent_features.at(c.conversation_id).at("judge_quality");
    const int score = static_cast<int>(std::clamp<long>(std::lround(3.0 + 1.8 * q), 1, 5));
    judge.push_back({c.conversation_id, score, TemplateId::standard_v1, ""});
    judge_map[c.conversation_id] = score;
  }

  LouoConfig config;
  config.forest.n_trees = 80;
  config.seed = 9;
  const PreferenceEvalReport trace_only =
      evaluate_louo(table, pairs.pairs, {ScorerKind::trace_forest, {}}, config);
  const PreferenceEvalReport llm_only =
      evaluate_louo(table, pairs.pairs, {ScorerKind::llm_score, judge_map}, config);
  const FeatureTable hybrid_table = assemble_hybrid_table(table, judge);
  const PreferenceEvalReport hybrid =
      evaluate_louo(hybrid_table, pairs.pairs, {ScorerKind::hybrid_forest, {}}, config);

  CHECK(hybrid.mean_accuracy > trace_only.mean_accuracy);
  CHECK(hybrid.mean_accuracy > llm_only.mean_accuracy);
}
